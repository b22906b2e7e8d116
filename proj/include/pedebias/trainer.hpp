// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pedebias/core.hpp"
#include "pedebias/peft.hpp"

namespace pedebias {

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t epochs = 2;
  std::size_t batch_size = 16;
  double weight_decay = 0.01;
  std::uint64_t seed = 42;
  std::optional<double> clip_norm;  // off unless set
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double mask_rate = 0.15;

  void validate() const;
};

// Initial learning rates searched for the debiasing runs.
std::vector<double> default_learning_rate_grid();

struct TrainReport {
  std::vector<double> step_loss;
  std::vector<double> epoch_val_loss;
  double initial_val_loss = 0.0;
  std::size_t total_steps = 0;
  std::string checkpoint;
  double elapsed_seconds = 0.0;
  std::string fingerprint_before;
  std::string fingerprint_after;

  double final_val_loss() const { return epoch_val_loss.empty() ? initial_val_loss : epoch_val_loss.back(); }
  // Everything except timing, as JSON text.
  std::string to_json(bool include_timing = true) const;
};

// Decoupled-weight-decay Adam: bias-corrected moment step, then
// p -= lr * weight_decay * p.
class AdamW {
 public:
  AdamW(double beta1, double beta2, double epsilon, double weight_decay)
      : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), weight_decay_(weight_decay) {}

  void step(std::span<Matrix* const> params, std::span<Matrix* const> grads, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, epsilon_, weight_decay_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

// initial * (1 - step / total), never negative.
double linear_learning_rate(double initial, std::size_t step, std::size_t total);

// Minimizes the LM loss over the overlay's parameters (the core's for
// Full). Sequences are token ids in the core's vocabulary; causal sequences
// should already carry BOS. Throws NumericalError naming the step on a
// non-finite loss.
TrainReport train(FrozenCore& core, TuningOverlay& overlay, const std::vector<std::vector<TokenId>>& train_set,
                  const std::vector<std::vector<TokenId>>& val_set, const TrainConfig& config);

// Validation loss with the fixed masking plan that train() uses.
double validation_loss(const FrozenCore& core, const TuningOverlay* overlay, const std::vector<std::vector<TokenId>>& val_set,
                       const TrainConfig& config);

struct GridRun {
  TrainConfig config;
  std::optional<double> val_loss;  // empty when the run diverged
};

struct GridSelection {
  TrainConfig best;
  double best_val_loss = 0.0;
  std::vector<GridRun> runs;
  FrozenCore core;  // trained copy for the best run
  TuningOverlay overlay;
};

// Trains every grid entry from the same starting point and keeps the lowest
// final validation loss; ties go to the smaller learning rate.
GridSelection grid_select(const FrozenCore& core, const MethodSpec& method, std::span<const TrainConfig> grid,
                          const std::vector<std::vector<TokenId>>& train_set,
                          const std::vector<std::vector<TokenId>>& val_set, std::uint64_t overlay_seed);

}  // namespace pedebias
