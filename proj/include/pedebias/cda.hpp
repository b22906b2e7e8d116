// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pedebias/lexicon.hpp"
#include "pedebias/random.hpp"

namespace pedebias {

// Maps the sorted occurred groups positionally onto distinct targets.
struct GroupPermutation {
  std::vector<std::size_t> occurred;
  std::vector<std::size_t> targets;

  // Throws std::out_of_range for a group outside the domain.
  std::size_t target_of(std::size_t group) const;
  bool is_identity() const { return occurred == targets; }

  friend bool operator==(const GroupPermutation&, const GroupPermutation&) = default;
  friend auto operator<=>(const GroupPermutation&, const GroupPermutation&) = default;
};

struct AugmentedExample {
  std::vector<std::string> tokens;
  std::size_t origin = 0;
  std::optional<GroupPermutation> permutation;  // set on counterfactuals only
  bool is_original = true;

  std::string text() const;
};

struct CdaOptions {
  std::size_t samples = 1;  // S, at most N - 1
  std::uint64_t seed = 42;
  bool keep_neutral = false;
  // Also drop permutations that fix every occurred group when n < N.
  bool exclude_fixed_identity = false;
};

struct AugmentedCorpus {
  std::vector<AugmentedExample> examples;
  std::uint64_t seed = 0;
  std::size_t num_groups = 0;
  std::size_t samples = 0;
};

// Sorted set of groups with at least one attribute word in tokens.
std::vector<std::size_t> identify_groups(std::span<const std::string> tokens, const LexiconIndex& index);

// All ordered selections of |occurred| distinct targets from N groups, in
// lexicographic order of the target list. The identity (0, 1, ..., N-1) is
// removed when every group occurs.
std::vector<GroupPermutation> candidate_permutations(std::span<const std::size_t> occurred, std::size_t num_groups,
                                                     bool exclude_fixed_identity = false);

// min(S, |candidates|) candidates drawn without replacement, in draw order.
std::vector<GroupPermutation> sample_permutations(std::span<const GroupPermutation> candidates, std::size_t samples,
                                                  Rng& rng);

// Replaces each attribute word w_k^(i) by w_{perm(k)}^(i), keeping the
// source token's casing style.
std::vector<std::string> apply_permutation(std::span<const std::string> tokens, const GroupPermutation& perm,
                                           const BiasAttributeList& list, const LexiconIndex& index);

// Sentence i draws from make_rng(seed, i), so output is independent of
// scheduling. Counterfactuals come first in draw order, then the original.
AugmentedCorpus augment_corpus(std::span<const std::vector<std::string>> corpus, const BiasAttributeList& list,
                               const CdaOptions& options);

// Casing helpers used for substitution.
enum class CaseStyle { Lower, Capitalized, Upper };
CaseStyle case_style(std::string_view token);
std::string apply_case(std::string_view word, CaseStyle style);

}  // namespace pedebias
