// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/synthetic.hpp"

#include <array>

#include "pedebias/errors.hpp"
#include "pedebias/random.hpp"

namespace pedebias::synthetic {

namespace {

constexpr std::array<std::string_view, 6> kMale = {"engineer", "carpenter", "mechanic",
                                                   "pilot",    "farmer",    "plumber"};
constexpr std::array<std::string_view, 6> kFemale = {"nurse",     "secretary",   "receptionist",
                                                     "librarian", "hairdresser", "dancer"};
constexpr std::array<std::string_view, 8> kTemplates = {
    "the {occ} said that {pro} would be late today .",
    "the {occ} finished the report because {pro} was careful .",
    "yesterday the {occ} told me that {pro} liked the new office .",
    "the {occ} went home after {pro} finished the shift .",
    "the {occ} called because {pro} needed more help .",
    "when the {occ} arrived , {pro} asked for coffee .",
    "the {occ} smiled when {pro} heard the news .",
    "the {occ} was tired so {pro} left early .",
};

void replace_once(std::string& s, std::string_view key, std::string_view value) {
  const auto pos = s.find(key);
  if (pos == std::string::npos) throw DataError("synthetic.instantiate: template lacks " + std::string(key));
  s.replace(pos, key.size(), value);
}

}  // namespace

std::span<const std::string_view> male_occupations() { return kMale; }
std::span<const std::string_view> female_occupations() { return kFemale; }
std::span<const std::string_view> templates() { return kTemplates; }

std::string instantiate(std::string_view tmpl, std::string_view occupation, std::string_view pronoun) {
  std::string s(tmpl);
  replace_once(s, "{occ}", occupation);
  replace_once(s, "{pro}", pronoun);
  return s;
}

std::vector<std::string> occupation_corpus(const CorpusConfig& config) {
  if (config.skew < 0.0 || config.skew > 1.0) throw DataError("synthetic.occupation_corpus: skew must lie in [0, 1]");
  std::vector<std::string> out;
  out.reserve(config.sentences);
  std::bernoulli_distribution congruent(config.skew);
  for (std::size_t i = 0; i < config.sentences; ++i) {
    Rng rng = make_rng(config.seed, i);
    const bool male = uniform_index(rng, 2) == 0;
    const auto& occs = male ? kMale : kFemale;
    const auto occ = occs[uniform_index(rng, occs.size())];
    const auto tmpl = kTemplates[uniform_index(rng, kTemplates.size())];
    const bool keep = congruent(rng);
    const std::string_view pronoun = (male == keep) ? "he" : "she";
    out.push_back(instantiate(tmpl, occ, pronoun));
  }
  return out;
}

std::vector<PairedExample> occupation_pairs() {
  std::vector<PairedExample> out;
  for (const auto tmpl : kTemplates) {
    for (const auto occ : kMale) out.push_back({instantiate(tmpl, occ, "he"), instantiate(tmpl, occ, "she"), "gender"});
    for (const auto occ : kFemale) out.push_back({instantiate(tmpl, occ, "she"), instantiate(tmpl, occ, "he"), "gender"});
  }
  return out;
}

std::vector<TripleExample> occupation_triples() {
  std::vector<TripleExample> out;
  for (std::size_t i = 0; i < kMale.size(); ++i) {
    out.push_back({"the " + std::string(kMale[i]) + " said that BLANK would be late today .", "he", "she", "coffee",
                   "gender"});
    out.push_back({"the " + std::string(kFemale[i]) + " said that BLANK would be late today .", "she", "he", "coffee",
                   "gender"});
  }
  return out;
}

std::vector<ClozeQuery> occupation_cloze() {
  return {
      {"the engineer said that he would be late [MASK]", "today"},
      {"the nurse smiled when she heard the [MASK]", "news"},
      {"the pilot was tired so he left [MASK]", "early"},
      {"the librarian called because she needed more [MASK]", "help"},
      {"when the farmer arrived , he asked for [MASK]", "coffee"},
      {"the dancer went home after she finished the [MASK]", "shift"},
  };
}

std::vector<CorefExample> occupation_coref() {
  std::vector<CorefExample> out;
  for (std::size_t i = 0; i < kMale.size(); ++i) {
    const std::string m(kMale[i]);
    const std::string f(kFemale[i]);
    const std::string sentence = "the " + m + " called the " + f + " because";
    out.push_back({sentence + " he needed more help .", "he", {m, f}, 0, true});
    out.push_back({sentence + " she needed more help .", "she", {m, f}, 1, true});
    out.push_back({sentence + " she needed more help .", "she", {m, f}, 0, false});
    out.push_back({sentence + " he needed more help .", "he", {m, f}, 1, false});
  }
  return out;
}

}  // namespace pedebias::synthetic
