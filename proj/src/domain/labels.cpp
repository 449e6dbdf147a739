#include "coa/domain.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_set>

#include <unicode/ustring.h>
#include <unicode/uchar.h>

#include "coa/errors.hpp"
#include "coa/inflection.hpp"

namespace coa {

SplitId::SplitId(int v) : value_(v) {
  if (!valid(v)) throw InputError("split id out of range 0..3: " + std::to_string(v));
}

std::string casefold(std::string_view utf8) {
  if (utf8.empty()) return {};
  // Fast path: plain ASCII folds to lowercase.
  if (std::all_of(utf8.begin(), utf8.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; })) {
    std::string out(utf8);
    for (char& c : out) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
  }

  UErrorCode status = U_ZERO_ERROR;
  int32_t u16_len = 0;
  u_strFromUTF8Lenient(nullptr, 0, &u16_len, utf8.data(), static_cast<int32_t>(utf8.size()), &status);
  status = U_ZERO_ERROR;
  std::u16string wide(static_cast<std::size_t>(u16_len), u'\0');
  // The lenient converter's preflight length is an upper bound; keep the real one.
  int32_t wide_len = 0;
  u_strFromUTF8Lenient(wide.data(), u16_len, &wide_len, utf8.data(), static_cast<int32_t>(utf8.size()),
                       &status);
  if (U_FAILURE(status)) return std::string(utf8);
  wide.resize(static_cast<std::size_t>(wide_len));

  // Full folding may expand (e.g. sharp s -> "ss").
  std::u16string folded(wide.size() * 3 + 1, u'\0');
  int32_t folded_len = u_strFoldCase(folded.data(), static_cast<int32_t>(folded.size()), wide.data(),
                                     static_cast<int32_t>(wide.size()), U_FOLD_CASE_DEFAULT, &status);
  if (U_FAILURE(status)) return std::string(utf8);

  int32_t out_len = 0;
  u_strToUTF8(nullptr, 0, &out_len, folded.data(), folded_len, &status);
  status = U_ZERO_ERROR;
  std::string out(static_cast<std::size_t>(out_len), '\0');
  u_strToUTF8(out.data(), out_len, nullptr, folded.data(), folded_len, &status);
  if (U_FAILURE(status)) return std::string(utf8);
  return out;
}

namespace {

bool is_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }

bool is_edge_punct(unsigned char c) {
  return c < 0x80 && (std::ispunct(c) != 0 || is_space(c));
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

std::string strip_edges(std::string s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_edge_punct(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_edge_punct(static_cast<unsigned char>(s[e - 1]))) --e;
  // Curly apostrophes/quotes around a word.
  static constexpr std::string_view kCurly[] = {"’", "‘", "“", "”"};
  bool changed = true;
  while (changed && b < e) {
    changed = false;
    for (auto q : kCurly) {
      std::string_view body(s.data() + b, e - b);
      if (body.starts_with(q)) {
        b += q.size();
        changed = true;
      } else if (body.ends_with(q)) {
        e -= q.size();
        changed = true;
      }
    }
  }
  return s.substr(b, e - b);
}

std::string drop_possessive(std::string s) {
  for (std::string_view suffix : {std::string_view("'s"), std::string_view("’s")}) {
    if (s.size() > suffix.size() && std::string_view(s).ends_with(suffix)) {
      s.resize(s.size() - suffix.size());
      break;
    }
  }
  return s;
}

std::string normalize_step(std::string_view raw) {
  std::string s = strip_edges(collapse_whitespace(casefold(raw)));
  s = strip_edges(drop_possessive(std::move(s)));
  if (s.empty()) return s;
  auto head = s.rfind(' ');
  std::size_t start = head == std::string::npos ? 0 : head + 1;
  std::string word = singularize(std::string_view(s).substr(start));
  s.replace(start, std::string::npos, word);
  return strip_edges(std::move(s));
}

}  // namespace

std::string normalize_label(std::string_view raw) {
  std::string current = normalize_step(raw);
  for (int i = 0; i < 8; ++i) {
    std::string next = normalize_step(current);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

LabelSet LabelSet::from_normalized(std::vector<std::string> labels) {
  std::unordered_set<std::string> seen;
  for (const auto& l : labels) {
    if (l.empty()) throw std::invalid_argument("empty label");
    if (normalize_label(l) != l) throw std::invalid_argument("label not in normal form: '" + l + "'");
    if (!seen.insert(l).second) throw std::invalid_argument("duplicate label: '" + l + "'");
  }
  LabelSet out;
  out.labels_ = std::move(labels);
  return out;
}

LabelSet LabelSet::with_confidences(std::vector<double> confidences) const {
  if (confidences.size() != labels_.size()) {
    throw std::invalid_argument("confidence count does not match label count");
  }
  for (double c : confidences) {
    if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("confidence outside [0,1]");
  }
  LabelSet out = *this;
  out.confidences_ = std::move(confidences);
  return out;
}

bool LabelSet::contains(std::string_view label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

bool LabelSet::is_subset_of(const LabelSet& other) const {
  return std::all_of(labels_.begin(), labels_.end(), [&](const std::string& l) { return other.contains(l); });
}

std::string LabelSet::join(std::string_view sep) const {
  std::string out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (i) out += sep;
    out += labels_[i];
  }
  return out;
}

LabelSet labelset_from(std::span<const std::string> raw) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : raw) {
    std::string n = normalize_label(r);
    if (n.empty()) continue;
    if (seen.insert(n).second) out.push_back(std::move(n));
  }
  return LabelSet::from_normalized(std::move(out));
}

LabelSet labelset_from(std::initializer_list<std::string_view> raw) {
  std::vector<std::string> copy(raw.begin(), raw.end());
  return labelset_from(std::span<const std::string>(copy));
}

std::string_view to_string(ActionKind kind) noexcept {
  switch (kind) {
    case ActionKind::Caption: return "caption";
    case ActionKind::SelfCorrect: return "self_correct";
    case ActionKind::Appearance: return "appearance";
    case ActionKind::Relationship: return "relationship";
    case ActionKind::Final: return "final";
    case ActionKind::MergedSingle: return "merged_single";
    case ActionKind::BaselineVQA: return "baseline_vqa";
    case ActionKind::BaselineCaption: return "baseline_caption";
  }
  return "unknown";
}

std::optional<ActionKind> parse_action_kind(std::string_view name) noexcept {
  for (ActionKind k : kAllActionKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::int64_t ChainState::total_latency_ms() const noexcept {
  std::int64_t total = 0;
  for (const auto& i : transcript) total += i.latency_ms;
  return total;
}

}  // namespace coa
