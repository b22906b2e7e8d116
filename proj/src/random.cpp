// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/random.hpp"

#include <numeric>
#include <stdexcept>

#include "pedebias/hashing.hpp"

namespace pedebias {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  const std::uint64_t range = n;
  const std::uint64_t limit = Rng::max() - (Rng::max() % range + 1) % range;
  std::uint64_t x = rng();
  while (x > limit) x = rng();
  return static_cast<std::size_t>(x % range);
}

std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  return sample_without_replacement(rng, n, n);
}

double normal_draw(Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  return dist(rng);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  Sha256 h;
  h.update_u64(seed);
  h.update(stage);
  const auto d = h.digest();
  std::uint64_t out = 0;
  for (int i = 7; i >= 0; --i) out = (out << 8) | d[static_cast<std::size_t>(i)];
  return out;
}

}  // namespace pedebias
