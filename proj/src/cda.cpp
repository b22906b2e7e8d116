// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/cda.hpp"

#include <algorithm>
#include <cctype>
#include <exception>
#include <stdexcept>

#include "pedebias/errors.hpp"
#include "pedebias/kernels.hpp"

namespace pedebias {

std::size_t GroupPermutation::target_of(std::size_t group) const {
  for (std::size_t j = 0; j < occurred.size(); ++j) {
    if (occurred[j] == group) return targets[j];
  }
  throw std::out_of_range("cda.apply_permutation: group " + std::to_string(group + 1) + " outside the permutation's domain");
}

std::string AugmentedExample::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

CaseStyle case_style(std::string_view token) {
  bool any_upper = false;
  bool any_lower = false;
  std::size_t letters = 0;
  for (char c : token) {
    const auto u = static_cast<unsigned char>(c);
    if (!std::isalpha(u)) continue;
    ++letters;
    if (std::isupper(u)) any_upper = true;
    if (std::islower(u)) any_lower = true;
  }
  if (!any_upper) return CaseStyle::Lower;
  if (!any_lower && letters > 1) return CaseStyle::Upper;
  for (char c : token) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalpha(u)) return std::isupper(u) ? CaseStyle::Capitalized : CaseStyle::Lower;
  }
  return CaseStyle::Lower;
}

std::string apply_case(std::string_view word, CaseStyle style) {
  std::string out(word);
  switch (style) {
    case CaseStyle::Lower:
      break;
    case CaseStyle::Upper:
      for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      break;
    case CaseStyle::Capitalized:
      for (auto& c : out) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
          c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
          break;
        }
      }
      break;
  }
  return out;
}

std::vector<std::size_t> identify_groups(std::span<const std::string> tokens, const LexiconIndex& index) {
  std::vector<std::size_t> groups;
  for (const auto& tok : tokens) {
    if (auto ref = index.lookup(tok)) groups.push_back(ref->group);
  }
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  return groups;
}

namespace {

void extend(std::vector<std::size_t>& prefix, std::vector<bool>& used, std::size_t n, std::size_t num_groups,
            std::vector<std::vector<std::size_t>>& out) {
  if (prefix.size() == n) {
    out.push_back(prefix);
    return;
  }
  for (std::size_t g = 0; g < num_groups; ++g) {
    if (used[g]) continue;
    used[g] = true;
    prefix.push_back(g);
    extend(prefix, used, n, num_groups, out);
    prefix.pop_back();
    used[g] = false;
  }
}

}  // namespace

std::vector<GroupPermutation> candidate_permutations(std::span<const std::size_t> occurred, std::size_t num_groups,
                                                     bool exclude_fixed_identity) {
  if (occurred.empty()) throw DataError("cda.candidate_permutations: no occurred groups");
  if (occurred.size() > num_groups) throw DataError("cda.candidate_permutations: more occurred groups than N");
  std::vector<std::size_t> sorted(occurred.begin(), occurred.end());
  std::sort(sorted.begin(), sorted.end());

  std::vector<std::vector<std::size_t>> targets;
  std::vector<std::size_t> prefix;
  std::vector<bool> used(num_groups, false);
  extend(prefix, used, sorted.size(), num_groups, targets);

  std::vector<GroupPermutation> out;
  out.reserve(targets.size());
  const bool all_groups = sorted.size() == num_groups;
  for (auto& t : targets) {
    GroupPermutation p{sorted, std::move(t)};
    if (p.is_identity() && (all_groups || exclude_fixed_identity)) continue;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<GroupPermutation> sample_permutations(std::span<const GroupPermutation> candidates, std::size_t samples,
                                                  Rng& rng) {
  if (samples == 0) throw DataError("cda.sample_permutations: S must be at least 1");
  if (candidates.empty()) throw DataError("cda.sample_permutations: empty candidate list");
  const std::size_t k = std::min(samples, candidates.size());
  std::vector<GroupPermutation> out;
  for (std::size_t i : sample_without_replacement(rng, candidates.size(), k)) out.push_back(candidates[i]);
  return out;
}

std::vector<std::string> apply_permutation(std::span<const std::string> tokens, const GroupPermutation& perm,
                                           const BiasAttributeList& list, const LexiconIndex& index) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& tok : tokens) {
    const auto ref = index.lookup(tok);
    if (!ref) {
      out.push_back(tok);
      continue;
    }
    const std::size_t target = perm.target_of(ref->group);
    out.push_back(apply_case(list.tuples[ref->tuple][target], case_style(tok)));
  }
  return out;
}

AugmentedCorpus augment_corpus(std::span<const std::vector<std::string>> corpus, const BiasAttributeList& list,
                               const CdaOptions& options) {
  const std::size_t n_groups = list.num_groups;
  if (options.samples == 0) throw DataError("cda.augment_corpus: S must be at least 1");
  if (options.samples > n_groups - 1) {
    throw DataError("cda.augment_corpus: S=" + std::to_string(options.samples) + " violates the input contract S <= N-1 (N=" +
                    std::to_string(n_groups) + ")");
  }
  const LexiconIndex index(list);

  std::vector<std::vector<AugmentedExample>> per_sentence(corpus.size());
  const auto n = static_cast<std::ptrdiff_t>(corpus.size());
  const bool par = kernels::backend() == kernels::Backend::Parallel && n > 1;
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 16) if (par)
  for (std::ptrdiff_t si = 0; si < n; ++si) {
    const auto i = static_cast<std::size_t>(si);
    try {
      const auto& sentence = corpus[i];
      auto& out = per_sentence[i];
      const auto groups = identify_groups(sentence, index);
      if (groups.empty()) {
        if (options.keep_neutral) out.push_back({sentence, i, std::nullopt, true});
        continue;
      }
      const auto candidates = candidate_permutations(groups, n_groups, options.exclude_fixed_identity);
      if (!candidates.empty()) {
        Rng rng = make_rng(options.seed, i);
        for (auto& perm : sample_permutations(candidates, options.samples, rng)) {
          out.push_back({apply_permutation(sentence, perm, list, index), i, std::move(perm), false});
        }
      }
      out.push_back({sentence, i, std::nullopt, true});
    } catch (...) {
#pragma omp critical(pedebias_cda_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  AugmentedCorpus result;
  result.seed = options.seed;
  result.num_groups = n_groups;
  result.samples = options.samples;
  for (auto& v : per_sentence) {
    for (auto& ex : v) result.examples.push_back(std::move(ex));
  }
  return result;
}

}  // namespace pedebias
