// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pedebias/matrix.hpp"

namespace pedebias {

using TokenId = std::int32_t;

// Reserved ids shared by the tokenizer and the model.
namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kMask = 2;
inline constexpr TokenId kBos = 3;
inline constexpr std::size_t kCount = 4;
}  // namespace special

enum class Objective { Masked, Causal };

std::string_view to_string(Objective o);
Objective parse_objective(std::string_view s);

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t d = 32;
  std::size_t heads = 4;
  std::size_t max_len = 64;
  std::size_t vocab_size = 0;
  std::size_t d_ff = 0;  // 0 means 4 * d
  Objective objective = Objective::Causal;
  double ln_eps = 1e-12;
  double init_std = 0.02;

  std::size_t ffn_dim() const { return d_ff == 0 ? 4 * d : d_ff; }
  std::size_t head_dim() const { return d / heads; }
  // Throws DataError on inconsistent dimensions.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// One transformer block: multi-head attention, add & norm, ReLU feed-forward,
// add & norm.
struct LayerParams {
  std::vector<Matrix> wq, wk, wv;  // per head, d x d/heads
  Matrix wo;                       // d x d
  Matrix w1, b1;                   // d x d_ff, 1 x d_ff
  Matrix w2, b2;                   // d_ff x d, 1 x d
  Matrix ln1_gain, ln1_bias;       // 1 x d
  Matrix ln2_gain, ln2_bias;       // 1 x d

  template <class F>
  void for_each_tensor(F&& f) {
    for (auto& m : wq) f(m);
    for (auto& m : wk) f(m);
    for (auto& m : wv) f(m);
    for (Matrix* m : {&wo, &w1, &b1, &w2, &b2, &ln1_gain, &ln1_bias, &ln2_gain, &ln2_bias}) f(*m);
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    const_cast<LayerParams*>(this)->for_each_tensor([&](Matrix& m) { f(static_cast<const Matrix&>(m)); });
  }
};

// The pretrained parameters (theta_0). Tensors are visited in a fixed
// declared order, which is also the checkpoint order.
struct FrozenCore {
  ModelConfig config;
  Matrix tok_emb;  // vocab x d
  Matrix pos_emb;  // max_len x d
  std::vector<LayerParams> layers;
  Matrix out_w;  // d x vocab
  Matrix out_b;  // 1 x vocab

  // Gaussian(0, init_std) weights, unit layer-norm gains, zero biases.
  static FrozenCore initialize(const ModelConfig& config, std::uint64_t seed);
  // Same shapes, all zero.
  FrozenCore zeros_like() const;

  template <class F>
  void for_each_tensor(F&& f) {
    f(tok_emb);
    f(pos_emb);
    for (auto& l : layers) l.for_each_tensor(f);
    f(out_w);
    f(out_b);
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    const_cast<FrozenCore*>(this)->for_each_tensor([&](Matrix& m) { f(static_cast<const Matrix&>(m)); });
  }

  std::size_t parameter_count() const;
  // SHA-256 over the config and every tensor's shape and bits.
  std::string fingerprint() const;
};

// Closed-form parameter count for a config, matching FrozenCore::parameter_count.
std::size_t core_parameter_count(const ModelConfig& config);

}  // namespace pedebias
