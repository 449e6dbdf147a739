#pragma once

// Caption -> entity list filtering: tokenize, keep nouns, singularize,
// drop blocklisted words, deduplicate.

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "coa/domain.hpp"
#include "coa/inflection.hpp"

namespace coa {

// Set of singular nouns. File format: one noun per line, UTF-8; blank
// lines and lines starting with '#' are ignored. Entries are normalized
// on load.
class NounLexicon {
 public:
  NounLexicon() = default;
  explicit NounLexicon(std::unordered_set<std::string> nouns) : nouns_(std::move(nouns)) {}

  static const NounLexicon& bundled();
  static NounLexicon from_file(const std::filesystem::path& path);
  static NounLexicon from_text(std::string_view text);

  bool contains(std::string_view singular) const { return nouns_.count(std::string(singular)) != 0; }
  std::size_t size() const noexcept { return nouns_.size(); }
  const std::unordered_set<std::string>& words() const noexcept { return nouns_; }

 private:
  std::unordered_set<std::string> nouns_;
};

struct FilterConfig {
  std::set<std::string> blocklist{"image", "photo", "logo"};
  std::optional<std::filesystem::path> extra_blocklist_path;
  std::optional<std::filesystem::path> noun_lexicon_path;
  int min_token_len = 2;

  bool operator==(const FilterConfig&) const = default;
};

// Lowercased word tokens in caption order. Anything that is not a letter
// or digit separates tokens, apostrophes included ("dog's" -> dog, s).
std::vector<std::string> tokenize_caption(std::string_view caption);

bool is_noun(std::string_view token, const InflectionRules& rules, const NounLexicon& lexicon);

// A FilterConfig with its files loaded. Immutable; share freely.
class CaptionFilter {
 public:
  // Throws InputError when a configured file cannot be read.
  explicit CaptionFilter(const FilterConfig& cfg = {});

  LabelSet filter(std::string_view caption) const;

  const FilterConfig& config() const noexcept { return cfg_; }
  const std::set<std::string>& blocklist() const noexcept { return blocklist_; }
  const NounLexicon& lexicon() const noexcept { return *lexicon_; }

 private:
  FilterConfig cfg_;
  std::set<std::string> blocklist_;
  std::shared_ptr<const NounLexicon> lexicon_;
};

LabelSet filter_caption(std::string_view caption, const CaptionFilter& filter);
LabelSet filter_caption(std::string_view caption, const FilterConfig& cfg = {});

// One word per line; '#' comments and blank lines skipped; normalized.
std::vector<std::string> read_word_list(const std::filesystem::path& path);

}  // namespace coa
