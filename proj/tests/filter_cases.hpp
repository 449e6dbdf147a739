#pragma once

// Caption -> label fixtures traced by hand through the filter rules:
// split on non-alphanumerics, drop tokens shorter than two characters,
// keep tokens whose singular is in the bundled lexicon, singularize,
// drop blocklisted words (image, photo, logo), keep first occurrences.
// Also the caption fuzzer shared by the unit and acceptance tests.

#include <random>
#include <set>
#include <string>
#include <vector>

#include "coa/filter.hpp"
#include "coa/inflection.hpp"

namespace coa_test {

struct FilterCase {
  const char* caption;
  std::vector<std::string> expected;
};

inline const std::vector<FilterCase>& filter_cases() {
  static const std::vector<FilterCase> cases = {
      {"A photo of two dogs playing with a ball on the grass", {"dog", "ball", "grass"}},
      {"image", {}},
      {"Dogs and a dog", {"dog"}},
      {"a dog chases a ball", {"dog", "ball"}},
      {"Three buses parked beside a church.", {"bus", "church"}},
      {"The children's toys lie on the bed", {"child", "toy", "bed"}},
      {"Two women and a man riding horses", {"woman", "man", "horse"}},
      {"A logo printed on a white t-shirt", {"shirt"}},
      {"Several knives, forks and spoons on a table", {"knife", "fork", "spoon", "table"}},
      {"A box of tomatoes and potatoes", {"box", "tomato", "potato"}},
      {"Sheep grazing in a field near the mountains", {"sheep", "field", "mountain"}},
      {"", {}},
      {"PEOPLE ON THE BEACH WITH UMBRELLAS", {"person", "beach", "umbrella"}},
      {"A cat's bowl next to the cats", {"cat", "bowl"}},
      {"glasses of wine on the bar", {"glass", "wine", "bar"}},
      {"A bus, a bus, and another bus!", {"bus"}},
      {"Photo: 3 cars & 2 trucks", {"car", "truck"}},
      {"Mice near the cheese", {"mouse", "cheese"}},
      {"Caf\xC3\xA9 with chairs", {"chair"}},
      {"A wolf and two wolves", {"wolf"}},
      {"leaves on the ground", {"leaf", "ground"}},
      {"a man wearing glasses and a hat", {"man", "glass", "hat"}},
      {"boxes, dishes, watches", {"box", "dish", "watch"}},
      {"Puppies and kittens", {"puppy", "kitten"}},
      {"An aircraft above the clouds", {"aircraft", "cloud"}},
      {"A fish in the aquarium with fishes", {"fish", "aquarium"}},
      {"A dog\tand\na cat", {"dog", "cat"}},
      {"x y z dog", {"dog"}},
      {"The logo on the photo in the image", {}},
      {"Geese flying over the lake", {"goose", "lake"}},
  };
  return cases;
}

// Words the fuzzer assembles captions from: nouns, plurals, irregulars,
// blocklisted words, non-nouns, numbers, non-ASCII words.
const std::vector<std::string>& fuzz_vocab() {
  static const std::vector<std::string> v = {
      "dog",   "dogs",    "Dog's",  "bus",    "buses",   "glass",  "glasses", "child",  "children",
      "mice",  "mouse",   "wolves", "knife",  "leaves",  "sheep",  "fish",    "fishes", "puppies",
      "image", "Photo",   "LOGO",   "images", "photos",  "logos",  "two",     "the",    "a",
      "with",  "playing", "near",   "RED",    "running", "3",      "42",      "x",      "caf\xC3\xA9",
      "\xC3\x89L\xC3\x89PHANT", "people", "person", "tomatoes", "boxes", "watches", "geese", "octopus",
      "tennis", "scissors", "is", "was", "s", "es", "ies", "grass", "cactus", "cacti", "shelves",
  };
  return v;
}

const std::vector<std::string>& fuzz_separators() {
  static const std::vector<std::string> v = {" ", "  ", ", ", ". ", "!", "-", "'", "\t", "\n", "/",
                                             "\xE2\x80\x94", "\xE2\x80\x99", "\xC2\xA0", "(", ")"};
  return v;
}


inline constexpr unsigned kFuzzSeed = 20240601;
inline constexpr int kFuzzCases = 10000;

inline std::string fuzz_caption(std::mt19937& rng) {
  const auto& vocab = fuzz_vocab();
  const auto& seps = fuzz_separators();
  std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1);
  std::uniform_int_distribution<std::size_t> sep(0, seps.size() - 1);
  std::uniform_int_distribution<int> len(0, 12);
  std::string caption;
  int n = len(rng);
  for (int k = 0; k < n; ++k) caption += vocab[word(rng)] + seps[sep(rng)];
  return caption;
}

// Empty when the filter output for caption satisfies every property,
// otherwise a description of the first violation.
inline std::string fuzz_violation(const coa::CaptionFilter& filter, const std::string& caption) {
  coa::LabelSet out = filter.filter(caption);
  if (filter.filter(out.join(" ")) != out) return "not idempotent";
  std::set<std::string> singulars;
  for (const auto& t : coa::tokenize_caption(caption)) {
    singulars.insert(coa::singularize(t, coa::InflectionRules::english()));
  }
  for (const auto& label : out) {
    if (!singulars.count(label)) return "invented label '" + label + "'";
    if (coa::normalize_label(label) != label) return "label not normalized '" + label + "'";
    if (filter.blocklist().count(label)) return "blocklisted label '" + label + "'";
  }
  return {};
}

}  // namespace coa_test
