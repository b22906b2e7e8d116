// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

// Gendered occupation templates for desk-scale debiasing experiments.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pedebias/biaseval.hpp"
#include "pedebias/knowledgeeval.hpp"

namespace pedebias::synthetic {

std::span<const std::string_view> male_occupations();
std::span<const std::string_view> female_occupations();
// Each template holds one {occ} followed later by one {pro}.
std::span<const std::string_view> templates();

std::string instantiate(std::string_view tmpl, std::string_view occupation, std::string_view pronoun);

struct CorpusConfig {
  std::size_t sentences = 200;
  double skew = 0.9;  // probability of the stereotype-congruent pronoun
  std::uint64_t seed = 42;
};

// Sentence i draws occupation, template and pronoun from make_rng(seed, i).
std::vector<std::string> occupation_corpus(const CorpusConfig& config);

// One pair per occupation and template; sent_more uses the congruent pronoun.
std::vector<PairedExample> occupation_pairs();

// Small fixtures covering every evaluation format.
std::vector<TripleExample> occupation_triples();
std::vector<ClozeQuery> occupation_cloze();
std::vector<CorefExample> occupation_coref();

}  // namespace pedebias::synthetic
