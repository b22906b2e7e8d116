// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <set>

#include "pedebias/errors.hpp"
#include "pedebias/lexicon.hpp"
#include "support.hpp"

using namespace pedebias;

TEST_CASE("parse_wordlist reads aligned tuples") {
  const auto list = parse_wordlist("# comment\nhe\tshe\n\nman\twoman\n", 2, "inline");
  REQUIRE(list.tuples.size() == 2);
  CHECK(list.tuples[0] == std::vector<std::string>{"he", "she"});
  const auto rel = parse_wordlist("rabbi\tpriest\timam\n", 3, "inline");
  CHECK(rel.tuples[0] == std::vector<std::string>{"rabbi", "priest", "imam"});
}

TEST_CASE("malformed word lists report the line") {
  CHECK_THROWS_WITH_AS(parse_wordlist("", 2, "x"), doctest::Contains("empty word list"), DataError);
  CHECK_THROWS_WITH_AS(parse_wordlist("# only comments\n", 2, "x"), doctest::Contains("empty word list"), DataError);
  CHECK_THROWS_WITH_AS(parse_wordlist("he\tshe\nboy\n", 2, "x"), doctest::Contains("2"), DataError);
  CHECK_THROWS_WITH_AS(parse_wordlist("he\tshe\nshe\the\n", 2, "x"), doctest::Contains("2"), DataError);
  CHECK_THROWS_AS(parse_wordlist("he\tshe\n", 3, "x"), DataError);
}

TEST_CASE("same-position repeats resolve to the first tuple") {
  const auto list = parse_wordlist("guy\tgal\nguy\tgirl\n", 2, "x");
  const LexiconIndex index(list);
  const auto ref = index.lookup("guy");
  REQUIRE(ref);
  CHECK(ref->tuple == 0);
  CHECK(ref->group == 0);
  CHECK(index.size() == 3);
}

TEST_CASE("lookup is case-insensitive on whole tokens") {
  const LexiconIndex index(builtin_wordlist("gender"));
  const auto he = index.lookup("He");
  REQUIRE(he);
  CHECK(he->group == 0);
  CHECK(builtin_wordlist("gender").tuples[he->tuple][1] == "she");
  CHECK_FALSE(index.lookup("doctor"));
  CHECK_FALSE(index.lookup(""));
  CHECK_FALSE(index.lookup("hes"));
}

TEST_CASE("built-in lists have the expected arity") {
  CHECK(builtin_wordlist("gender").num_groups == 2);
  CHECK(builtin_wordlist("religion").num_groups == 3);
  CHECK(builtin_wordlist("race").num_groups == 3);
  CHECK_THROWS_AS(builtin_wordlist("colour"), DataError);
  const auto rel = builtin_wordlist("religion");
  bool found = false;
  for (const auto& t : rel.tuples) found = found || t == std::vector<std::string>{"rabbi", "priest", "imam"};
  CHECK(found);
}

TEST_CASE("every listed word looks up to its first position, in any case") {
  for (const auto& name : builtin_wordlist_names()) {
    const auto list = builtin_wordlist(name);
    const LexiconIndex index(list);
    std::set<std::string> distinct;
    for (std::size_t i = 0; i < list.tuples.size(); ++i) {
      for (std::size_t k = 0; k < list.num_groups; ++k) {
        const auto& w = list.tuples[i][k];
        distinct.insert(w);
        std::size_t first = i;
        for (std::size_t j = 0; j < i; ++j) {
          if (list.tuples[j][k] == w) {
            first = j;
            break;
          }
        }
        std::string upper = w;
        for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        CHECK(index.lookup(w) == AttributeRef{first, k});
        CHECK(index.lookup(upper) == AttributeRef{first, k});
      }
    }
    CHECK(index.size() == distinct.size());
  }
}

TEST_CASE("serialize and reload round-trips") {
  pedebias::testing::TempDir dir("lexicon");
  for (const auto& name : builtin_wordlist_names()) {
    const auto list = builtin_wordlist(name);
    const auto path = dir / (name + ".tsv");
    std::ofstream(path) << serialize_wordlist(list);
    CHECK(load_wordlist(path, list.num_groups) == list);
    CHECK(resolve_wordlist(path.string()) == list);
  }
}

TEST_CASE("abbreviations are the listed words ending in a period") {
  const LexiconIndex index(builtin_wordlist("gender"));
  const auto abbr = index.abbreviations();
  CHECK(std::find(abbr.begin(), abbr.end(), "mr.") != abbr.end());
  CHECK(std::find(abbr.begin(), abbr.end(), "mrs.") != abbr.end());
}
