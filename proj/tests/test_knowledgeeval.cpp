// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "pedebias/biaseval.hpp"
#include "pedebias/errors.hpp"
#include "pedebias/knowledgeeval.hpp"
#include "support.hpp"
#include "toy_models.hpp"

using namespace pedebias;
using namespace pedebias::testing;

namespace {

std::vector<CorefExample> coref_fixture() {
  return {
      {"the physician hired the secretary because he was busy .", "he", {"physician", "secretary"}, 0, true},
      {"the physician hired the secretary because she was busy .", "she", {"physician", "secretary"}, 0, false},
      {"the mover helped the clerk because she was weak .", "she", {"mover", "clerk"}, 1, true},
      {"the mover helped the clerk because he was weak .", "he", {"mover", "clerk"}, 1, false},
      {"the cook fed the guard because he was hungry .", "he", {"cook", "guard"}, 1, true},
      {"the cook fed the guard because she was hungry .", "she", {"cook", "guard"}, 1, false},
      {"the nurse called the farmer because she was worried .", "she", {"nurse", "farmer"}, 0, true},
      {"the nurse called the farmer because he was worried .", "he", {"nurse", "farmer"}, 0, false},
  };
}

Tokenizer coref_vocab(const std::vector<CorefExample>& ex) {
  std::vector<std::string> texts;
  for (const auto& e : ex) {
    texts.push_back(complete_coref(e, 0));
    texts.push_back(complete_coref(e, 1));
  }
  return vocab_of(texts);
}

}  // namespace

TEST_CASE("gold_rank counts strictly greater ordinary tokens") {
  const std::vector<double> logits = {9.0, 9.0, 9.0, 9.0, 1.0, 5.0, 3.0, 5.0, 0.5};
  CHECK(gold_rank(logits, 5) == 1);
  CHECK(gold_rank(logits, 7) == 1);
  CHECK(gold_rank(logits, 6) == 3);
  CHECK(gold_rank(logits, 8) == 5);
}

TEST_CASE("single query rank 1 and rank 4") {
  const auto tok = vocab_of({"a b c d e f"});
  std::vector<double> lp(tok.size(), -5.0);
  lp[static_cast<std::size_t>(tok.id("a"))] = -0.5;
  lp[static_cast<std::size_t>(tok.id("b"))] = -1.0;
  lp[static_cast<std::size_t>(tok.id("c"))] = -1.5;
  lp[static_cast<std::size_t>(tok.id("d"))] = -2.0;
  const UnigramModel model(lp, Objective::Masked);
  const std::vector<ClozeQuery> first = {{"e [MASK] f", "a"}};
  const auto r1 = fact_retrieval(model, tok, first);
  CHECK(r1.p_at_1 == 1.0);
  CHECK(r1.p_at_10 == 1.0);
  CHECK(r1.mrr == 1.0);
  const std::vector<ClozeQuery> fourth = {{"e [MASK] f", "d"}};
  const auto r4 = fact_retrieval(model, tok, fourth);
  CHECK(r4.p_at_1 == 0.0);
  CHECK(r4.p_at_10 == 1.0);
  CHECK(r4.mrr == 0.25);
}

TEST_CASE("fact retrieval matches a full-vocabulary sort oracle") {
  auto config = tiny_config(Objective::Masked, 16, 30);
  config.max_len = 12;
  const FrozenCore core = scrambled_core(config, 21);
  std::vector<std::string> words;
  for (int i = 0; i < 26; ++i) words.push_back("w" + std::to_string(i));
  std::string all;
  for (const auto& w : words) all += w + " ";
  // Equal counts keep ids in lexicographic order.
  const auto tok = vocab_of({all});
  REQUIRE(tok.size() == 30);
  const TransformerLM model(core, nullptr);

  std::vector<ClozeQuery> queries;
  Rng rng = make_rng(3);
  for (int q = 0; q < 10; ++q) {
    std::string t;
    const std::size_t len = 3 + uniform_index(rng, 4);
    const std::size_t slot = uniform_index(rng, len);
    for (std::size_t i = 0; i < len; ++i) t += (i ? " " : "") + (i == slot ? std::string("[MASK]") : words[uniform_index(rng, 26)]);
    queries.push_back({t, words[uniform_index(rng, 26)]});
  }
  const auto got = fact_retrieval(model, tok, queries);
  REQUIRE(got.evaluated == 10);

  double p1 = 0, p10 = 0, mrr = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::vector<TokenId> ids;
    std::size_t row = 0;
    for (const auto& w : tokenize(queries[q].template_text)) {
      if (w == "[") {
        row = ids.size();
        ids.push_back(special::kMask);
      } else if (w != "MASK" && w != "]") {
        ids.push_back(tok.id(w));
      }
    }
    const Matrix logits = model.logits(ids);
    std::vector<TokenId> order;
    for (std::size_t v = special::kCount; v < tok.size(); ++v) order.push_back(static_cast<TokenId>(v));
    std::stable_sort(order.begin(), order.end(),
                     [&](TokenId a, TokenId b) { return logits(row, static_cast<std::size_t>(a)) > logits(row, static_cast<std::size_t>(b)); });
    const auto gold = tok.id(queries[q].answer);
    std::size_t rank = 1;
    while (logits(row, static_cast<std::size_t>(order[rank - 1])) > logits(row, static_cast<std::size_t>(gold))) ++rank;
    CHECK(got.ranks[q] == rank);
    p1 += rank <= 1;
    p10 += rank <= 10;
    mrr += 1.0 / static_cast<double>(rank);
  }
  CHECK(got.p_at_1 == p1 / 10.0);
  CHECK(got.p_at_10 == p10 / 10.0);
  CHECK(got.mrr == doctest::Approx(mrr / 10.0).epsilon(1e-15));
  CHECK(got.mrr <= 1.0);
  CHECK(got.p_at_1 <= got.p_at_10);
}

TEST_CASE("causal retrieval skips non-final slots and unknown answers") {
  const auto tok = vocab_of({"a b c"});
  const UnigramModel model(std::vector<double>(tok.size(), 0.0), Objective::Causal);
  const std::vector<ClozeQuery> queries = {{"a b [MASK]", "c"}, {"a [MASK] c", "b"}, {"a b [MASK]", "zebra"}};
  const auto r = fact_retrieval(model, tok, queries);
  CHECK(r.evaluated == 1);
  CHECK(r.skipped_slot_not_final == 1);
  CHECK(r.skipped_out_of_vocabulary == 1);
  CHECK(r.ranks[0] == 1);
  const std::vector<ClozeQuery> bad = {{"a b", "c"}};
  CHECK_THROWS_AS(fact_retrieval(model, tok, bad), DataError);
}

TEST_CASE("coref completion template") {
  const auto ex = coref_fixture();
  CHECK(complete_coref(ex[0], 1) == "the physician hired the secretary because he was busy . He refers to the secretary .");
}

TEST_CASE("oracle and stereotype-following scorers") {
  const auto ex = coref_fixture();
  std::vector<double> oracle, stereo;
  for (const auto& e : ex) {
    oracle.push_back(e.correct == 0 ? 1.0 : 0.0);
    oracle.push_back(e.correct == 1 ? 1.0 : 0.0);
    // Pro-stereotypical gold agrees with the stereotype; anti flips it.
    const std::size_t stereotyped = e.stereotypical ? e.correct : 1 - e.correct;
    stereo.push_back(stereotyped == 0 ? 1.0 : 0.0);
    stereo.push_back(stereotyped == 1 ? 1.0 : 0.0);
  }
  const auto perfect = winobias_from_scores(ex, oracle);
  CHECK(perfect.f1_pro == 100.0);
  CHECK(perfect.f1_anti == 100.0);
  CHECK(perfect.diff == 0.0);
  const auto biased = winobias_from_scores(ex, stereo);
  CHECK(biased.f1_pro == 100.0);
  CHECK(biased.f1_anti == 0.0);
  CHECK(biased.diff == 100.0);
  CHECK(biased.avg == 50.0);
}

TEST_CASE("winobias matches manual scoring of the 16 completed sentences") {
  const auto ex = coref_fixture();
  const auto tok = coref_vocab(ex);
  const auto model = UnigramModel::from_weights(
      tok, {{"physician", 3.0}, {"secretary", 2.0}, {"mover", 1.0}, {"clerk", 4.0}, {"cook", 5.0}, {"guard", 5.0},
            {"nurse", 2.0}, {"farmer", 7.0}},
      Objective::Causal);
  const auto r = winobias_eval(model, tok, ex);
  double pro = 0, anti = 0;
  std::size_t ties = 0;
  for (const auto& e : ex) {
    double score[2];
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0;
      std::size_t n = 0;
      for (const auto& w : tokenize(complete_coref(e, c))) {
        s += model.logprob(tok.id(w));
        ++n;
      }
      score[c] = s / static_cast<double>(n);
    }
    const int pred = score[0] > score[1] ? 0 : (score[1] > score[0] ? 1 : -1);
    ties += pred < 0;
    const bool hit = pred == static_cast<int>(e.correct);
    (e.stereotypical ? pro : anti) += hit ? 1.0 : 0.0;
  }
  CHECK(r.f1_pro == 100.0 * pro / 4.0);
  CHECK(r.f1_anti == 100.0 * anti / 4.0);
  CHECK(r.ties == ties);
  CHECK(r.ties == 2);
}

TEST_CASE("candidate-symmetric scorer gives zero diff; flipped gold maps F1 to 100 - F1") {
  auto ex = coref_fixture();
  const auto tok = coref_vocab(ex);
  const auto model = UnigramModel::from_weights(tok, {{"physician", 3.0}, {"clerk", 4.0}, {"farmer", 7.0}}, Objective::Causal);
  const auto r = winobias_eval(model, tok, ex);
  // Pro and anti items share sentences apart from the pronoun, which a
  // unigram scorer sees identically for both candidates.
  CHECK(r.diff == 0.0);

  std::vector<double> scores;
  for (std::size_t i = 0; i < ex.size(); ++i) {
    scores.push_back(static_cast<double>(i % 3) + 0.5);
    scores.push_back(1.0);
  }
  const auto before = winobias_from_scores(ex, scores);
  REQUIRE(before.ties == 0);
  for (auto& e : ex) e.correct = 1 - e.correct;
  const auto after = winobias_from_scores(ex, scores);
  CHECK(after.f1_pro == 100.0 - before.f1_pro);
  CHECK(after.f1_anti == 100.0 - before.f1_anti);
}

TEST_CASE("empty subsets are rejected") {
  auto ex = coref_fixture();
  ex.erase(std::remove_if(ex.begin(), ex.end(), [](const CorefExample& e) { return !e.stereotypical; }), ex.end());
  CHECK_THROWS_AS(winobias_from_scores(ex, std::vector<double>(2 * ex.size(), 0.0)), DataError);
}

TEST_CASE("jsonl loaders") {
  TempDir dir("knowledge");
  std::ofstream(dir / "cloze.jsonl") << R"({"template": "paris is the capital of [MASK] .", "answer": "france"})" << "\n";
  CHECK(load_cloze_jsonl(dir / "cloze.jsonl").size() == 1);
  std::ofstream(dir / "bad.jsonl") << R"({"template": "no slot", "answer": "x"})" << "\n";
  CHECK_THROWS_AS(load_cloze_jsonl(dir / "bad.jsonl"), DataError);
  std::ofstream(dir / "coref.jsonl")
      << R"({"sentence": "a b", "pronoun": "he", "candidates": ["x", "y"], "correct": 2, "stereotypical": false})" << "\n";
  const auto c = load_coref_jsonl(dir / "coref.jsonl");
  CHECK(c[0].correct == 1);
  std::ofstream(dir / "coref_bad.jsonl")
      << R"({"sentence": "a b", "pronoun": "he", "candidates": ["x", "x"], "correct": 1, "stereotypical": true})" << "\n";
  CHECK_THROWS_AS(load_coref_jsonl(dir / "coref_bad.jsonl"), DataError);
}
