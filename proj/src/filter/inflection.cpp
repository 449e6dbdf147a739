#include "coa/inflection.hpp"

#include <utility>

namespace coa {

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

InflectionRules build_english() {
  InflectionRules r;

  // Irregular plurals.
  static constexpr std::pair<std::string_view, std::string_view> kIrregular[] = {
      {"people", "person"},     {"men", "man"},             {"women", "woman"},
      {"children", "child"},    {"teeth", "tooth"},         {"feet", "foot"},
      {"geese", "goose"},       {"mice", "mouse"},          {"oxen", "ox"},
      {"lice", "louse"},        {"cacti", "cactus"},        {"fungi", "fungus"},
      {"criteria", "criterion"},{"phenomena", "phenomenon"},{"gases", "gas"},
      {"lenses", "lens"},       {"canvases", "canvas"},     {"atlases", "atlas"},
      {"fishes", "fish"},       {"policemen", "policeman"}, {"firemen", "fireman"},
      {"fishermen", "fisherman"},{"businessmen", "businessman"},{"snowmen", "snowman"},
      {"gentlemen", "gentleman"},{"sportsmen", "sportsman"},{"horsemen", "horseman"},
      // -ves table
      {"wolves", "wolf"},       {"knives", "knife"},        {"leaves", "leaf"},
      {"wives", "wife"},        {"lives", "life"},          {"loaves", "loaf"},
      {"halves", "half"},       {"shelves", "shelf"},       {"calves", "calf"},
      {"scarves", "scarf"},     {"thieves", "thief"},       {"elves", "elf"},
      {"hooves", "hoof"},       {"wharves", "wharf"},
      // -oes
      {"potatoes", "potato"},   {"tomatoes", "tomato"},     {"heroes", "hero"},
      {"echoes", "echo"},       {"mosquitoes", "mosquito"}, {"volcanoes", "volcano"},
      {"dominoes", "domino"},   {"mangoes", "mango"},       {"buffaloes", "buffalo"},
      // -ies words whose singular keeps the ie
      {"movies", "movie"},      {"cookies", "cookie"},      {"pies", "pie"},
  };
  static constexpr std::pair<std::string_view, std::string_view> kIeWords[] = {
      {"ties", "tie"},          {"zombies", "zombie"},      {"brownies", "brownie"},
      {"selfies", "selfie"},    {"lies", "lie"},            {"hoodies", "hoodie"},
      {"goalies", "goalie"},    {"smoothies", "smoothie"},  {"rookies", "rookie"},
  };
  // Same in both numbers.
  static constexpr std::string_view kInvariant[] = {
      "sheep", "deer",  "moose",    "fish",  "series", "species", "aircraft", "news",  "gas",
      "lens",  "canvas", "atlas", "scissors", "means", "corps",   "bias",     "chaos", "clothes",
  };

  for (auto [plural, singular] : kIrregular) r.irregulars.emplace(plural, singular);
  for (auto [plural, singular] : kIeWords) r.irregulars.emplace(plural, singular);
  for (auto word : kInvariant) r.irregulars.emplace(word, word);

  r.suffix_rules = {
      {"ouses", "ouse", 6}, {"auses", "ause", 6}, {"aches", "ache", 6},
      {"sses", "ss", 5},    {"uses", "us", 5},    {"zzes", "zz", 5},
      {"ches", "ch", 5},    {"shes", "sh", 5},    {"xes", "x", 4},
      {"ies", "y", 5},      {"zes", "ze", 5},     {"s", "", 4},
  };
  r.protected_endings = {"ss", "us", "is"};
  return r;
}

}  // namespace

const InflectionRules& InflectionRules::english() {
  static const InflectionRules rules = build_english();
  return rules;
}

std::string singularize_once(std::string_view token, const InflectionRules& rules) {
  if (auto it = rules.irregulars.find(std::string(token)); it != rules.irregulars.end()) {
    return it->second;
  }
  for (const auto& ending : rules.protected_endings) {
    if (ends_with(token, ending)) return std::string(token);
  }
  for (const auto& rule : rules.suffix_rules) {
    if (token.size() >= rule.min_length && ends_with(token, rule.pattern)) {
      std::string out(token.substr(0, token.size() - rule.pattern.size()));
      out += rule.replacement;
      return out;
    }
  }
  return std::string(token);
}

std::string singularize(std::string_view token, const InflectionRules& rules) {
  std::string current(token);
  // Each step either shortens the word or maps through the finite
  // irregular table, so this settles quickly.
  for (int i = 0; i < 16; ++i) {
    std::string next = singularize_once(current, rules);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

}  // namespace coa
