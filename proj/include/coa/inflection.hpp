#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace coa {

struct SuffixRule {
  std::string pattern;      // plural ending to match
  std::string replacement;  // what replaces it
  std::size_t min_length;   // token must be at least this long
};

// Plural -> singular rules for English nouns. Irregulars are consulted
// before the ordered suffix rules; the first matching rule wins.
struct InflectionRules {
  std::unordered_map<std::string, std::string> irregulars;
  std::vector<SuffixRule> suffix_rules;
  // Endings that look plural but are singular (glass, bus, tennis).
  std::vector<std::string> protected_endings;

  // Bundled English table.
  static const InflectionRules& english();
};

// One rewrite step: irregular table, then suffix rules, else identity.
std::string singularize_once(std::string_view token, const InflectionRules& rules);

// singularize_once iterated to a fixed point, so the result is always
// stable under another application.
std::string singularize(std::string_view token,
                        const InflectionRules& rules = InflectionRules::english());

}  // namespace coa
