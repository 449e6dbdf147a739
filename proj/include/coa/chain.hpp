#pragma once

// The Chain-of-Action engine. Per image the configured actions run
// strictly in order, each one reading what the earlier ones produced:
//
//   1 Caption       one-sentence caption -> filtered initial entity list
//   2 Self-Correct  one Yes/No question per entity; keeps the Yes answers
//   3 Appearance    one batched query describing every remaining entity
//   4 Relationship  free-text relations among entities and the scene
//   5 Final         all gathered context -> final label list
//
// Besides subsets of 1..5 the engine runs a merged single-interaction
// prompt and the two single-call baselines (VQA-style and caption-style).

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "coa/backends.hpp"
#include "coa/domain.hpp"
#include "coa/filter.hpp"

namespace coa {

struct PromptTemplates {
  std::string id = "default";  // sent as template_id with every request
  std::string caption;
  std::string self_correct;    // {entity}
  std::string appearance;      // {entities}
  std::string relationship;    // {entities} {appearance}
  std::string final;           // {entities} {appearance} {relationships}
  std::string merged_single;
  std::string baseline_vqa;
  std::string baseline_caption;

  static PromptTemplates defaults();
  // JSON object with any subset of the keys above; the rest default.
  static PromptTemplates from_file(const std::filesystem::path& path);

  // Every declared slot appears exactly once and no other {...} marker
  // exists. Throws ConfigError.
  void validate() const;
  // sha256 per template, keyed by template name.
  std::map<std::string, std::string> hashes() const;

  bool operator==(const PromptTemplates&) const = default;
};

// Substitute {name} markers. Throws ConfigError if a marker has no binding
// or a binding is never used.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& slots);

enum class ChainMode { Actions, Merged, BaselineVQA, BaselineCaption };

// Action numbers 1..5 that make up a chain.
using ActionSubset = std::set<int>;

// The five subsets that may be run: {5}, {1,5}, {1,2,5}, {1,2,3,5}, {1,2,3,4,5}.
const std::vector<ActionSubset>& valid_action_subsets();

struct ChainConfig {
  ChainMode mode = ChainMode::Actions;
  ActionSubset actions{1, 2, 3, 4, 5};
  PromptTemplates templates = PromptTemplates::defaults();
  FilterConfig filter_cfg;
  bool ram_filter = false;
  double sigma = 0.73;
  int parallelism = 1;

  std::string model = "llava-1.5-7b";
  int max_tokens = kActionMaxTokens;
  int yes_no_max_tokens = kYesNoMaxTokens;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;

  static ChainConfig with_actions(ActionSubset actions);
  static ChainConfig with_mode(ChainMode mode);

  bool runs(int action) const { return mode == ChainMode::Actions && actions.count(action) != 0; }

  // Throws ConfigError.
  void validate() const;
  // "Action 1+2+5", "Merged single", "Baseline VQA", "Baseline caption".
  std::string name() const;
  // sha256 of everything that affects model requests or labels.
  std::string fingerprint() const;
};

// Liberal list parser for Final / VQA style answers: splits on commas,
// semicolons and newlines, strips numbering, bullets and leading articles.
LabelSet parse_label_list(std::string_view response);

// Appearance answer -> per-entity notes, matched by line prefix
// ("dog: brown, running"). Lines matching no entity go under "_raw".
std::map<std::string, std::string> parse_appearance(std::string_view response, const LabelSet& entities);

enum class YesNo { Yes, No, Ambiguous };
YesNo parse_yes_no(std::string_view answer);

// Prompt context renderings.
std::string render_entities(const LabelSet& entities);
std::string render_appearance(const std::map<std::string, std::string>& notes, const LabelSet& entities);

// Everything one action needs besides the state it extends.
struct ActionContext {
  const ChainConfig& cfg;
  const CaptionFilter& filter;
  ModelBackend& backend;
  ImageHandle image;
};

// Each action appends its interactions to state.transcript and fills only
// its own output fields.
void run_caption_action(const ActionContext& ctx, ChainState& state);
void run_self_correct(const ActionContext& ctx, ChainState& state);
void run_appearance(const ActionContext& ctx, ChainState& state);
void run_relationship(const ActionContext& ctx, ChainState& state);
void run_final(const ActionContext& ctx, ChainState& state);
void run_merged_single(const ActionContext& ctx, ChainState& state);
void run_baseline_vqa(const ActionContext& ctx, ChainState& state);
void run_baseline_caption(const ActionContext& ctx, ChainState& state);

struct ChainFailure {
  std::string image_id;
  std::string stage;
  std::string message;

  bool operator==(const ChainFailure&) const = default;
};

struct ChainResult {
  std::optional<ChainState> state;
  std::optional<ChainFailure> failure;
  bool ok() const noexcept { return state.has_value(); }
};

// Runs the configured actions for one image. Never throws for per-image
// problems; ConfigError still propagates since it concerns the whole run.
ChainResult run_chain(const ImageRecord& image, const ChainConfig& cfg, const CaptionFilter& filter,
                      ModelBackend& backend);
ChainResult run_chain(const ImageRecord& image, const ChainConfig& cfg, ModelBackend& backend);

struct BatchResult {
  std::vector<ChainState> states;  // manifest order
  std::vector<ChainFailure> failures;
  bool ok() const noexcept { return failures.empty(); }
};

// Reference implementation: one image after another.
BatchResult run_batch_serial(std::span<const ImageRecord> images, const ChainConfig& cfg, ModelBackend& backend);
// Up to cfg.parallelism images at once (OpenMP); same output as the serial
// version regardless of completion order.
BatchResult run_batch(std::span<const ImageRecord> images, const ChainConfig& cfg, ModelBackend& backend);

}  // namespace coa
