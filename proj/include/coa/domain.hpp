#pragma once

// Core value types shared by every module. Nothing in here touches the
// filesystem or the network.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coa {

// One of the four non-overlapping test subsets of a dataset.
class SplitId {
 public:
  static constexpr int kCount = 4;

  // Throws InputError when v is outside 0..3.
  explicit SplitId(int v);

  static bool valid(int v) noexcept { return v >= 0 && v < kCount; }

  int value() const noexcept { return value_; }
  auto operator<=>(const SplitId&) const = default;

 private:
  int value_ = 0;
};

// Unicode default case folding of a UTF-8 string.
std::string casefold(std::string_view utf8);

// Trim, case-fold, collapse inner whitespace, strip edge punctuation and
// singularize the head (last) word. Returns "" when nothing usable is
// left; callers treat that as a droppable token. Idempotent.
std::string normalize_label(std::string_view raw);

// Ordered, deduplicated, normalized entity labels with optional
// per-label confidences. Immutable once built.
class LabelSet {
 public:
  LabelSet() = default;

  // Labels must already be in normal form and unique; throws
  // std::invalid_argument otherwise.
  static LabelSet from_normalized(std::vector<std::string> labels);

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::optional<std::vector<double>>& confidences() const noexcept {
    return confidences_;
  }

  // Copy with a confidence attached to each label (same length, each in [0,1]).
  LabelSet with_confidences(std::vector<double> confidences) const;

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  bool contains(std::string_view label) const;
  bool is_subset_of(const LabelSet& other) const;

  auto begin() const noexcept { return labels_.begin(); }
  auto end() const noexcept { return labels_.end(); }
  const std::string& operator[](std::size_t i) const { return labels_[i]; }

  std::string join(std::string_view sep) const;

  bool operator==(const LabelSet&) const = default;

 private:
  std::vector<std::string> labels_;
  std::optional<std::vector<double>> confidences_;
};

// normalize_label on each entry, drop empties, keep first occurrence.
LabelSet labelset_from(std::span<const std::string> raw);
LabelSet labelset_from(std::initializer_list<std::string_view> raw);

struct ImageRecord {
  std::string id;
  std::string image_ref;  // file path or content digest
  LabelSet gold_labels;
  SplitId split{0};
};

enum class ActionKind {
  Caption,
  SelfCorrect,
  Appearance,
  Relationship,
  Final,
  MergedSingle,
  BaselineVQA,
  BaselineCaption,
};

inline constexpr ActionKind kAllActionKinds[] = {
    ActionKind::Caption,      ActionKind::SelfCorrect,  ActionKind::Appearance,
    ActionKind::Relationship, ActionKind::Final,        ActionKind::MergedSingle,
    ActionKind::BaselineVQA,  ActionKind::BaselineCaption,
};

std::string_view to_string(ActionKind kind) noexcept;
std::optional<ActionKind> parse_action_kind(std::string_view name) noexcept;

// One prompt/response exchange with the chat model.
struct Interaction {
  ActionKind action = ActionKind::Caption;
  std::string prompt;
  bool image_attached = true;
  std::string raw_response;
  std::int64_t latency_ms = 0;  // 0 only on cache hits
  bool cache_hit = false;

  bool operator==(const Interaction&) const = default;
};

// Key under which appearance text that matched no entity is stored.
inline constexpr std::string_view kUnparsedAppearanceKey = "_raw";

// Everything the chain learned about one image, in action order.
struct ChainState {
  std::string image_id;
  std::optional<std::string> caption;
  LabelSet initial_entities;
  // Unset when Self-Correct did not run in this configuration.
  std::optional<LabelSet> corrected_entities;
  std::map<std::string, std::string> appearance_notes;
  std::string relationship_notes;
  LabelSet final_labels;
  std::vector<Interaction> transcript;
  std::vector<std::string> warnings;

  // Entities the later actions work from: corrected if available.
  const LabelSet& working_entities() const noexcept {
    return corrected_entities ? *corrected_entities : initial_entities;
  }
  std::int64_t total_latency_ms() const noexcept;

  bool operator==(const ChainState&) const = default;
};

struct ImageScore {
  int cs = 0;           // 0 or 1
  double as = 0.5;      // in (0,1)
  int n_predicted = 0;
};

struct SplitScore {
  double m_clip = 0.0;
  double m_ram = 0.0;
  int n_images = 0;
  double mean_latency_ms = 0.0;
  double latency_stddev_ms = 0.0;
};

struct MetricReport {
  std::map<std::string, ImageScore> per_image;
  std::map<int, SplitScore> per_split;
  // Avg column: mean over splits by default, mean over images on request.
  double avg_m_clip = 0.0;
  double avg_m_ram = 0.0;
  int n_metric_errors = 0;
  std::string config_fingerprint;
  std::vector<std::string> warnings;
};

}  // namespace coa
