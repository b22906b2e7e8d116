// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <map>
#include <set>

#include "pedebias/cda.hpp"
#include "pedebias/corpus.hpp"
#include "pedebias/errors.hpp"
#include "pedebias/kernels.hpp"
#include "cda_oracle.hpp"

using namespace pedebias;

namespace {

std::vector<std::string> toks(std::string_view s) { return tokenize(s, {"mr.", "mrs."}); }

std::size_t falling_factorial(std::size_t n, std::size_t k) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < k; ++i) r *= n - i;
  return r;
}

}  // namespace

TEST_CASE("identify_groups") {
  const LexiconIndex gender(builtin_wordlist("gender"));
  const LexiconIndex religion(builtin_wordlist("religion"));
  CHECK(identify_groups(toks("He is a doctor ."), gender) == std::vector<std::size_t>{0});
  CHECK(identify_groups(toks("the rabbi met the imam"), religion) == std::vector<std::size_t>{0, 2});
  CHECK(identify_groups(toks("the sky is blue"), gender).empty());
}

TEST_CASE("candidate permutations") {
  auto one = candidate_permutations(std::vector<std::size_t>{0}, 2);
  REQUIRE(one.size() == 2);
  CHECK(one[0].targets == std::vector<std::size_t>{0});
  CHECK(one[1].targets == std::vector<std::size_t>{1});
  CHECK(candidate_permutations(std::vector<std::size_t>{0, 1}, 3).size() == 6);
  const auto full = candidate_permutations(std::vector<std::size_t>{0, 1, 2}, 3);
  CHECK(full.size() == 5);
  for (const auto& p : full) CHECK_FALSE(p.is_identity());
  CHECK(std::is_sorted(full.begin(), full.end()));
  CHECK(candidate_permutations(std::vector<std::size_t>{0}, 2, true).size() == 1);
  CHECK_THROWS_AS(candidate_permutations(std::vector<std::size_t>{}, 2), DataError);
}

TEST_CASE("sample_permutations clamps and is deterministic") {
  const auto cands = candidate_permutations(std::vector<std::size_t>{0, 1, 2}, 3);
  Rng a = make_rng(5, 1);
  Rng b = make_rng(5, 1);
  const auto two = sample_permutations(cands, 2, a);
  CHECK(two.size() == 2);
  CHECK(two[0] != two[1]);
  CHECK(sample_permutations(cands, 2, b) == two);
  Rng c = make_rng(1);
  CHECK(sample_permutations(std::span(cands).first(1), 2, c).size() == 1);
  CHECK_THROWS_AS(sample_permutations(std::span(cands).first(0), 1, c), DataError);
}

TEST_CASE("apply_permutation substitutes aligned words and keeps casing") {
  const auto list = builtin_wordlist("gender");
  const LexiconIndex index(list);
  const GroupPermutation swap{{0}, {1}};
  CHECK(join_tokens(apply_permutation(toks("He is a doctor ."), swap, list, index)) == "She is a doctor .");
  CHECK(join_tokens(apply_permutation(toks("his son met his uncle"), swap, list, index)) == "her daughter met her aunt");
  CHECK(join_tokens(apply_permutation(toks("HE said"), swap, list, index)) == "SHE said");
  const GroupPermutation identity{{0}, {0}};
  const auto s = toks("He told his son");
  CHECK(apply_permutation(s, identity, list, index) == s);
  const GroupPermutation wrong{{1}, {0}};
  CHECK_THROWS_AS(apply_permutation(toks("he went"), wrong, list, index), std::out_of_range);
}

TEST_CASE("augment_corpus basic cases") {
  const auto list = builtin_wordlist("gender");
  CdaOptions opt;
  opt.samples = 1;
  std::vector<std::vector<std::string>> one = {toks("He is a doctor .")};
  opt.exclude_fixed_identity = true;
  const auto out = augment_corpus(one, list, opt);
  REQUIRE(out.examples.size() == 2);
  CHECK(out.examples[0].text() == "She is a doctor .");
  CHECK(out.examples[1].is_original);

  std::vector<std::vector<std::string>> neutral = {toks("the sky is blue")};
  CHECK(augment_corpus(neutral, list, opt).examples.empty());
  opt.keep_neutral = true;
  CHECK(augment_corpus(neutral, list, opt).examples.size() == 1);

  opt.samples = 2;
  CHECK_THROWS_WITH_AS(augment_corpus(one, list, opt), doctest::Contains("input contract"), DataError);
  opt.samples = 0;
  CHECK_THROWS_AS(augment_corpus(one, list, opt), DataError);
  opt.samples = 1;
  CHECK(augment_corpus(std::vector<std::vector<std::string>>{}, list, opt).examples.empty());
}

TEST_CASE("swapping twice is an involution when the counterpart resolves to the same tuple") {
  const auto list = builtin_wordlist("gender");
  const LexiconIndex index(list);
  const GroupPermutation there{{0}, {1}};
  const GroupPermutation back{{1}, {0}};
  std::size_t checked = 0;
  for (std::size_t i = 0; i < list.tuples.size(); ++i) {
    const auto& male = list.tuples[i][0];
    const auto& female = list.tuples[i][1];
    if (index.lookup(male)->tuple != i || index.lookup(female)->tuple != i) continue;
    const std::vector<std::string> s = {"the", male, "spoke"};
    CHECK(apply_permutation(apply_permutation(s, there, list, index), back, list, index) == s);
    ++checked;
  }
  CHECK(checked > 40);
  // "her" is shared by (him, her) and (his, her); the first tuple wins.
  const std::vector<std::string> his = {"his"};
  CHECK(apply_permutation(apply_permutation(his, there, list, index), back, list, index)[0] == "him");
}

TEST_CASE("augmented output obeys consistency, collision-freedom and cardinality") {
  const auto list = builtin_wordlist("religion");
  const LexiconIndex index(list);
  std::vector<std::vector<std::string>> corpus = {
      toks("the rabbi met the imam"), toks("a priest spoke"), toks("nothing here"),
      toks("the synagogue , the church and the mosque"), toks("Jews and Christians")};
  CdaOptions opt;
  opt.samples = 2;
  opt.seed = 9;
  const auto out = augment_corpus(corpus, list, opt);
  std::size_t expected = 0;
  for (const auto& s : corpus) {
    const auto g = identify_groups(s, index);
    if (g.empty()) continue;
    expected += 1 + std::min<std::size_t>(2, falling_factorial(3, g.size()) - (g.size() == 3 ? 1 : 0));
  }
  CHECK(out.examples.size() == expected);
  for (const auto& ex : out.examples) {
    if (ex.is_original) continue;
    REQUIRE(ex.permutation);
    std::set<std::size_t> distinct(ex.permutation->targets.begin(), ex.permutation->targets.end());
    CHECK(distinct.size() == ex.permutation->targets.size());
    std::vector<std::size_t> mapped;
    for (std::size_t g : identify_groups(corpus[ex.origin], index)) mapped.push_back(ex.permutation->target_of(g));
    std::sort(mapped.begin(), mapped.end());
    CHECK(identify_groups(ex.tokens, index) == mapped);
  }
}

TEST_CASE("augment_corpus is identical across backends") {
  const auto list = builtin_wordlist("race");
  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < 60; ++i) corpus.push_back(toks(i % 2 ? "the black and white cat" : "an asian market"));
  CdaOptions opt;
  opt.samples = 2;
  kernels::set_backend(kernels::Backend::Serial);
  const auto serial = augment_corpus(corpus, list, opt);
  kernels::set_backend(kernels::Backend::Parallel);
  const auto parallel = augment_corpus(corpus, list, opt);
  REQUIRE(serial.examples.size() == parallel.examples.size());
  for (std::size_t i = 0; i < serial.examples.size(); ++i) {
    CHECK(serial.examples[i].tokens == parallel.examples[i].tokens);
    CHECK(serial.examples[i].permutation == parallel.examples[i].permutation);
  }
}

TEST_CASE("augment_corpus matches the brute-force oracle on N=3, S=2") {
  const auto list = builtin_wordlist("religion");
  std::vector<std::vector<std::string>> corpus = {
      toks("the rabbi met the imam"),      toks("a priest spoke"),
      toks("nothing here"),                toks("the synagogue , the church and the mosque"),
      toks("Jews and Christians"),         toks("Muslims pray at the mosque"),
      toks("the Torah and the Bible"),     toks("a Quran"),
      toks("JUDAISM , islam"),             toks("the church bells"),
  };
  CdaOptions opt;
  opt.samples = 2;
  opt.seed = 31;
  const auto got = augment_corpus(corpus, list, opt);
  const auto oracle = pedebias::testing::brute_force_augment(corpus, list, 2, 31);
  std::map<std::size_t, std::set<std::string>> texts;
  for (const auto& ex : got.examples) texts[ex.origin].insert(ex.text());
  CHECK(got.examples.size() == oracle.total);
  CHECK(texts == oracle.texts);
}
