// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pedebias {

using Rng = std::mt19937_64;

// Generator for an independent stream identified by (seed, stream).
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

// Unbiased draw from [0, n) by rejection on the raw 64-bit output. Spelled out
// so draw sequences do not depend on the standard library's distributions.
std::size_t uniform_index(Rng& rng, std::size_t n);

// k draws without replacement from [0, n) by partial Fisher-Yates, in draw
// order.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

// Uniform permutation of [0, n).
std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n);

double normal_draw(Rng& rng, double stddev);

// Per-stage seed: first 8 bytes of SHA-256(seed || stage name).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

}  // namespace pedebias
