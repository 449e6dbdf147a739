#include <doctest.h>

#include <random>
#include <set>

#include "coa/errors.hpp"
#include "coa/filter.hpp"
#include "coa/inflection.hpp"
#include "filter_cases.hpp"
#include "test_support.hpp"

using namespace coa;

TEST_CASE("hand-traced caption fixtures") {
  CaptionFilter filter;
  for (const auto& c : coa_test::filter_cases()) {
    CAPTURE(c.caption);
    CHECK(filter.filter(c.caption).labels() == c.expected);
  }
}

TEST_CASE("singularize rule traces") {
  CHECK(singularize("dogs") == "dog");
  CHECK(singularize("buses") == "bus");
  CHECK(singularize("boxes") == "box");
  CHECK(singularize("churches") == "church");
  CHECK(singularize("dishes") == "dish");
  CHECK(singularize("puppies") == "puppy");
  CHECK(singularize("glasses") == "glass");
  CHECK(singularize("glass") == "glass");
  CHECK(singularize("houses") == "house");
  CHECK(singularize("children") == "child");
  CHECK(singularize("firemen") == "fireman");
  CHECK(singularize("knives") == "knife");
  CHECK(singularize("tomatoes") == "tomato");
  CHECK(singularize("movies") == "movie");
  CHECK(singularize("sheep") == "sheep");
  CHECK(singularize("octopus") == "octopus");
  CHECK(singularize("tennis") == "tennis");
  CHECK(singularize("is") == "is");
  // Short tokens are left alone by the plain -s rule.
  CHECK(singularize("gas") == "gas");
}

TEST_CASE("every lexicon entry and irregular singular is a fixed point") {
  const auto& rules = InflectionRules::english();
  for (const auto& w : NounLexicon::bundled().words()) {
    CHECK_MESSAGE(singularize(w) == w, w);
    CHECK_MESSAGE(normalize_label(w) == w, w);
  }
  for (const auto& [plural, singular] : rules.irregulars) {
    CHECK_MESSAGE(singularize(singular) == singular, singular);
    CHECK_MESSAGE(singularize(plural) == singular, plural);
  }
}

TEST_CASE("tokenizer splits on punctuation and non-letter symbols") {
  CHECK(tokenize_caption("Dog's ball, 2 cats!") == std::vector<std::string>{"dog", "s", "ball", "2", "cats"});
  CHECK(tokenize_caption("dog\xE2\x80\x94" "cat") == std::vector<std::string>{"dog", "cat"});  // em dash
  CHECK(tokenize_caption("\xE2\x80\x9C" "Dog\xE2\x80\x9D") == std::vector<std::string>{"dog"});
  CHECK(tokenize_caption("CAF\xC3\x89") == std::vector<std::string>{"caf\xC3\xA9"});
  CHECK(tokenize_caption("").empty());
}

TEST_CASE("blocklist extension and custom lexicon files") {
  coa_test::TempDir tmp;
  coa_test::write_file(tmp / "block.txt", "# extra words\nGrass\n\nball\n");
  coa_test::write_file(tmp / "nouns.txt", "dog\nball\ngrass\nzebra\n");
  FilterConfig cfg;
  cfg.extra_blocklist_path = tmp / "block.txt";
  CHECK(filter_caption("dogs on grass with a ball", cfg).labels() == std::vector<std::string>{"dog"});

  FilterConfig lex;
  lex.noun_lexicon_path = tmp / "nouns.txt";
  CHECK(filter_caption("zebras and a cat near a dog", lex).labels() == std::vector<std::string>{"zebra", "dog"});

  FilterConfig missing;
  missing.noun_lexicon_path = tmp / "absent.txt";
  CHECK_THROWS_AS(CaptionFilter{missing}, InputError);
}

TEST_CASE("min_token_len is configurable") {
  FilterConfig cfg;
  cfg.min_token_len = 4;
  CHECK(filter_caption("a dog and a horse", cfg).labels() == std::vector<std::string>{"horse"});
}


TEST_CASE("fuzzed captions: idempotence, no invention, normal form, no blocklist") {
  CaptionFilter filter;
  std::mt19937 rng(coa_test::kFuzzSeed);
  for (int i = 0; i < coa_test::kFuzzCases; ++i) {
    std::string caption = coa_test::fuzz_caption(rng);
    CAPTURE(caption);
    REQUIRE(coa_test::fuzz_violation(filter, caption) == "");
  }
}
