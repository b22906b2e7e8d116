// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/core.hpp"

#include "pedebias/errors.hpp"
#include "pedebias/hashing.hpp"
#include "pedebias/random.hpp"

namespace pedebias {

std::string_view to_string(Objective o) { return o == Objective::Masked ? "masked" : "causal"; }

Objective parse_objective(std::string_view s) {
  if (s == "masked") return Objective::Masked;
  if (s == "causal") return Objective::Causal;
  throw UsageError("unknown objective '" + std::string(s) + "' (expected masked|causal)");
}

void ModelConfig::validate() const {
  if (layers == 0) throw DataError("transformer.config: layer count must be positive");
  if (d == 0 || heads == 0) throw DataError("transformer.config: d and heads must be positive");
  if (d % heads != 0) {
    throw DataError("transformer.config: d=" + std::to_string(d) + " not divisible by heads=" + std::to_string(heads));
  }
  if (max_len < 2) throw DataError("transformer.config: max_len must be at least 2");
  if (vocab_size == 0) throw DataError("transformer.config: vocab_size must be positive");
}

namespace {

Matrix gaussian(std::size_t r, std::size_t c, double stddev, Rng& rng) {
  Matrix m(r, c);
  for (auto& x : m.data) x = normal_draw(rng, stddev);
  return m;
}

}  // namespace

FrozenCore FrozenCore::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_rng(seed, 0x636f7265);
  const double s = config.init_std;
  const std::size_t d = config.d;
  const std::size_t dh = config.head_dim();
  const std::size_t ff = config.ffn_dim();

  FrozenCore core;
  core.config = config;
  core.tok_emb = gaussian(config.vocab_size, d, s, rng);
  core.pos_emb = gaussian(config.max_len, d, s, rng);
  core.layers.resize(config.layers);
  for (auto& l : core.layers) {
    for (std::size_t h = 0; h < config.heads; ++h) l.wq.push_back(gaussian(d, dh, s, rng));
    for (std::size_t h = 0; h < config.heads; ++h) l.wk.push_back(gaussian(d, dh, s, rng));
    for (std::size_t h = 0; h < config.heads; ++h) l.wv.push_back(gaussian(d, dh, s, rng));
    l.wo = gaussian(d, d, s, rng);
    l.w1 = gaussian(d, ff, s, rng);
    l.b1 = Matrix(1, ff);
    l.w2 = gaussian(ff, d, s, rng);
    l.b2 = Matrix(1, d);
    l.ln1_gain = Matrix(1, d, 1.0);
    l.ln1_bias = Matrix(1, d);
    l.ln2_gain = Matrix(1, d, 1.0);
    l.ln2_bias = Matrix(1, d);
  }
  core.out_w = gaussian(d, config.vocab_size, s, rng);
  core.out_b = Matrix(1, config.vocab_size);
  return core;
}

FrozenCore FrozenCore::zeros_like() const {
  FrozenCore z = *this;
  z.for_each_tensor([](Matrix& m) { m.set_zero(); });
  return z;
}

std::size_t FrozenCore::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const Matrix& m) { n += m.size(); });
  return n;
}

std::string FrozenCore::fingerprint() const {
  Sha256 h;
  h.update("pedebias-core-v1");
  for (std::size_t v : {config.layers, config.d, config.heads, config.max_len, config.vocab_size, config.ffn_dim()}) {
    h.update_u64(v);
  }
  h.update_u64(config.objective == Objective::Masked ? 0 : 1);
  h.update_f64(config.ln_eps);
  for_each_tensor([&](const Matrix& m) {
    h.update_u64(m.rows);
    h.update_u64(m.cols);
    for (double x : m.data) h.update_f64(x);
  });
  return h.hex_digest();
}

std::size_t core_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d;
  const std::size_t ff = c.ffn_dim();
  const std::size_t per_layer = 3 * d * d + d * d + d * ff + ff + ff * d + d + 4 * d;
  return c.vocab_size * d + c.max_len * d + c.layers * per_layer + d * c.vocab_size + c.vocab_size;
}

}  // namespace pedebias
