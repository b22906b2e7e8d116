// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pedebias/corpus.hpp"
#include "pedebias/lexicon.hpp"
#include "pedebias/transformer.hpp"

namespace pedebias {

using Vector = std::vector<double>;

// Maps a tokenized sentence to a fixed-size embedding. Must be deterministic
// and safe to call concurrently.
using SentenceEncoder = std::function<Vector(std::span<const std::string>)>;

// Mean of the final-layer hidden states over the sentence's tokens.
SentenceEncoder mean_hidden_encoder(const FrozenCore& core, const TuningOverlay* overlay, const Tokenizer& tokenizer);

// embedding(original) - embedding(counterfactual) for every sampled
// counterfactual of every attribute-bearing sentence.
std::vector<Vector> difference_vectors(const SentenceEncoder& encoder,
                                       std::span<const std::vector<std::string>> sentences,
                                       const BiasAttributeList& list, std::size_t samples, std::uint64_t seed);

struct SubspaceProvenance {
  std::size_t source_vectors = 0;
  std::uint64_t seed = 0;
};

struct BiasSubspace {
  std::size_t dimension = 0;
  std::vector<Vector> basis;        // orthonormal rows, strongest first
  std::vector<double> variances;    // eigenvalue per basis vector
  SubspaceProvenance provenance;

  std::size_t k() const { return basis.size(); }
  std::string to_json() const;
  static BiasSubspace from_json(std::string_view json);
  void save(const std::filesystem::path& path) const;
  static BiasSubspace load(const std::filesystem::path& path);
};

// Top-k principal directions of the mean-centered vectors. Each direction is
// signed so its largest-magnitude entry is positive.
BiasSubspace bias_subspace(std::span<const Vector> diffs, std::size_t k, SubspaceProvenance provenance = {});

// v minus its projection onto the subspace.
Vector debias_embedding(std::span<const double> v, const BiasSubspace& subspace);

}  // namespace pedebias
