// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pedebias/corpus.hpp"
#include "pedebias/transformer.hpp"

namespace pedebias {

struct PairedExample {
  std::string sent_more;  // the more stereotyping sentence
  std::string sent_less;
  std::string bias_type;
};

// Intra-sentence item: context holds the literal marker BLANK.
struct TripleExample {
  std::string context;
  std::string stereotype;
  std::string anti_stereotype;
  std::string unrelated;
  std::string bias_type;
};

inline constexpr std::string_view kBlankMarker = "BLANK";

std::vector<PairedExample> load_paired_jsonl(const std::filesystem::path& path);
std::vector<TripleExample> load_triples_jsonl(const std::filesystem::path& path);
std::string fill_blank(const TripleExample& t, std::string_view candidate);

// Comparable sentence score: masked models use the pseudo-log-likelihood over
// all tokens; causal models use the mean per-token log-likelihood of the
// tokens after a leading BOS.
double sentence_score(const LanguageModel& model, const Tokenizer& tokenizer, std::string_view text);
double sentence_score_ids(const LanguageModel& model, std::span<const TokenId> ids);

// Scores many texts in parallel; output order follows input order.
std::vector<double> sentence_scores(const LanguageModel& model, const Tokenizer& tokenizer,
                                    std::span<const std::string> texts);

// 1 when a wins, 0 when b wins, 0.5 on an exact tie.
double preference(double a, double b);

struct BiasReport {
  double stereotype_score = 0.0;  // percent
  std::optional<double> lm_score;
  std::optional<double> perplexity;
  std::optional<double> icat;
  std::vector<double> indicators;  // per example: 1 favored the stereotype
  std::size_t count = 0;

  std::string to_json() const;
};

// 100 * mean indicator, where an example counts 1 when sent_more outscores
// sent_less.
BiasReport stereotype_score_pairs(const LanguageModel& model, const Tokenizer& tokenizer,
                                  std::span<const PairedExample> examples);

struct StereoSetScores {
  double ss = 0.0;
  double lms = 0.0;
  std::vector<double> ss_indicators;  // one per triple
  std::vector<double> lm_indicators;  // two per triple: stereotype vs unrelated, anti vs unrelated
};

StereoSetScores stereoset_scores(const LanguageModel& model, const Tokenizer& tokenizer,
                                 std::span<const TripleExample> triples);

// lms * min(ss, 100 - ss) / 50.
double icat(double ss, double lms);

// exp(-mean per-token log-likelihood). Causal: sequence log-probability
// after BOS. Masked: pseudo-log-likelihood.
double perplexity(const LanguageModel& model, const Tokenizer& tokenizer, std::span<const std::string> texts);
double perplexity_ids(const LanguageModel& model, const std::vector<std::vector<TokenId>>& sequences);

struct PermutationTestOptions {
  std::size_t resamples = 10000;
  std::uint64_t seed = 42;
  bool exhaustive = false;  // enumerate all 2^n sign patterns (n <= 30)
};

// One-sided paired sign-flip test that the debiased model favors the
// stereotype less often. Monte Carlo p = (1 + #extreme) / (1 + resamples);
// exhaustive p = #extreme / 2^n.
double permutation_test(std::span<const double> base, std::span<const double> debiased,
                        const PermutationTestOptions& options = {});

}  // namespace pedebias
