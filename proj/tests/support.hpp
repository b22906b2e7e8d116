// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unistd.h>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pedebias/core.hpp"
#include "pedebias/peft.hpp"
#include "pedebias/random.hpp"
#include "pedebias/transformer.hpp"

namespace pedebias::testing {

inline ModelConfig tiny_config(Objective objective, std::size_t d = 16, std::size_t vocab = 12) {
  ModelConfig c;
  c.layers = 2;
  c.d = d;
  c.heads = 2;
  c.max_len = 16;
  c.vocab_size = vocab;
  c.objective = objective;
  c.init_std = 0.3;
  return c;
}

// Fills every tensor with Gaussian noise so no gradient is trivially zero.
template <class Params>
void scramble(Params& params, std::uint64_t seed, double sd = 0.3) {
  Rng rng = make_rng(seed, 99);
  params.for_each_tensor([&](Matrix& m) {
    for (double& x : m.data) x = normal_draw(rng, sd);
  });
}

inline FrozenCore scrambled_core(const ModelConfig& config, std::uint64_t seed) {
  FrozenCore core = FrozenCore::initialize(config, seed);
  Rng rng = make_rng(seed, 7);
  for (auto& layer : core.layers) {
    for (Matrix* m : {&layer.ln1_gain, &layer.ln2_gain}) {
      for (double& x : m->data) x = 1.0 + normal_draw(rng, 0.2);
    }
    for (Matrix* m : {&layer.ln1_bias, &layer.ln2_bias, &layer.b1, &layer.b2}) {
      for (double& x : m->data) x = normal_draw(rng, 0.2);
    }
  }
  for (double& x : core.out_b.data) x = normal_draw(rng, 0.2);
  return core;
}

inline std::vector<TokenId> random_tokens(Rng& rng, std::size_t length, std::size_t vocab) {
  std::vector<TokenId> out(length);
  for (auto& t : out) t = static_cast<TokenId>(special::kCount + uniform_index(rng, vocab - special::kCount));
  return out;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Largest relative error between analytic gradients and central differences
// of lm_loss over every tunable parameter.
inline double max_gradient_error(FrozenCore& core, TuningOverlay* overlay, std::span<const TrainingExample> batch,
                                 double h = 1e-5) {
  ModelGrads grads = grad_tunable(core, overlay, batch);
  auto params = tunable_tensors(core, overlay);
  auto gtensors = tunable_tensors(grads, overlay);
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t]->data.size(); ++i) {
      double& x = params[t]->data[i];
      const double saved = x;
      x = saved + h;
      const double up = lm_loss(core, overlay, batch);
      x = saved - h;
      const double down = lm_loss(core, overlay, batch);
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, relative_error(gtensors[t]->data[i], numeric));
    }
  }
  return worst;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("pedebias-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace pedebias::testing
