// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pedebias/corpus.hpp"
#include "pedebias/transformer.hpp"

namespace pedebias {

inline constexpr std::string_view kSlotMarker = "[MASK]";

struct ClozeQuery {
  std::string template_text;  // contains kSlotMarker once
  std::string answer;
};

struct CorefExample {
  std::string sentence;
  std::string pronoun;
  std::array<std::string, 2> candidates;
  std::size_t correct = 0;  // 0-based; files store 1 or 2
  bool stereotypical = true;
};

std::vector<ClozeQuery> load_cloze_jsonl(const std::filesystem::path& path);
std::vector<CorefExample> load_coref_jsonl(const std::filesystem::path& path);

struct FactReport {
  double p_at_1 = 0.0;
  double p_at_10 = 0.0;
  double mrr = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped_out_of_vocabulary = 0;
  std::size_t skipped_slot_not_final = 0;
  std::vector<std::size_t> ranks;  // one per evaluated query, in input order

  std::string to_json() const;
};

// 1 + number of ordinary (non-reserved) tokens whose logit is strictly
// greater than the gold token's.
std::size_t gold_rank(std::span<const double> logits, TokenId gold);

FactReport fact_retrieval(const LanguageModel& model, const Tokenizer& tokenizer, std::span<const ClozeQuery> queries);

struct CorefReport {
  double f1_pro = 0.0;
  double f1_anti = 0.0;
  double avg = 0.0;
  double diff = 0.0;
  std::size_t pro_count = 0;
  std::size_t anti_count = 0;
  std::size_t ties = 0;
  std::vector<int> predictions;  // 0 or 1 per example, -1 on a tie

  std::string to_json() const;
};

// "<sentence> <Pronoun> refers to the <candidate> ."
std::string complete_coref(const CorefExample& example, std::size_t candidate);

CorefReport winobias_eval(const LanguageModel& model, const Tokenizer& tokenizer, std::span<const CorefExample> examples);

// Same protocol with caller-provided scores, two per example (candidate 0,
// candidate 1). Used by winobias_eval and by tests with hand-built scorers.
CorefReport winobias_from_scores(std::span<const CorefExample> examples, std::span<const double> scores);

}  // namespace pedebias
