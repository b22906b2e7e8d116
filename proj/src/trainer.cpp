// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/trainer.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "pedebias/errors.hpp"
#include "pedebias/random.hpp"
#include "pedebias/transformer.hpp"

namespace pedebias {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("trainer: learning rate must be positive");
  if (epochs == 0) throw UsageError("trainer: epochs must be positive");
  if (batch_size == 0) throw UsageError("trainer: batch size must be positive");
  if (weight_decay < 0.0) throw UsageError("trainer: weight decay must be non-negative");
  if (clip_norm && !(*clip_norm > 0.0)) throw UsageError("trainer: clip norm must be positive");
}

std::vector<double> default_learning_rate_grid() { return {5e-1, 5e-2, 5e-3, 5e-4, 5e-5, 5e-6, 5e-7}; }

std::string TrainReport::to_json(bool include_timing) const {
  nlohmann::json j;
  j["step_loss"] = step_loss;
  j["epoch_val_loss"] = epoch_val_loss;
  j["initial_val_loss"] = initial_val_loss;
  j["final_val_loss"] = final_val_loss();
  j["total_steps"] = total_steps;
  j["checkpoint"] = checkpoint;
  j["fingerprint_before"] = fingerprint_before;
  j["fingerprint_after"] = fingerprint_after;
  if (include_timing) j["elapsed_seconds"] = elapsed_seconds;
  return j.dump(2);
}

void AdamW::step(std::span<Matrix* const> params, std::span<Matrix* const> grads, double lr) {
  if (params.size() != grads.size()) throw std::invalid_argument("AdamW: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.push_back(zeros_like(*p));
      v_.push_back(zeros_like(*p));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i]->data;
    const auto& g = grads[i]->data;
    auto& m = m_[i].data;
    auto& v = v_[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + epsilon_);
      p[j] -= lr * weight_decay_ * p[j];
    }
  }
}

double linear_learning_rate(double initial, std::size_t step, std::size_t total) {
  if (total == 0 || step >= total) return 0.0;
  return initial * (1.0 - static_cast<double>(step) / static_cast<double>(total));
}

namespace {

std::uint64_t val_mask_seed(const TrainConfig& c) { return derive_seed(c.seed, "validation-mask"); }

void clip_gradients(std::span<Matrix* const> grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix* g : grads)
    for (double x : g->data) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (Matrix* g : grads)
    for (auto& x : g->data) x *= s;
}

}  // namespace

double validation_loss(const FrozenCore& core, const TuningOverlay* overlay, const std::vector<std::vector<TokenId>>& val_set,
                       const TrainConfig& config) {
  const auto batch = make_examples(val_set, core.config.objective, val_mask_seed(config), config.mask_rate);
  return lm_loss(core, overlay, batch);
}

TrainReport train(FrozenCore& core, TuningOverlay& overlay, const std::vector<std::vector<TokenId>>& train_set,
                  const std::vector<std::vector<TokenId>>& val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw DataError("trainer.train: empty training set");
  if (val_set.empty()) throw DataError("trainer.train: empty validation set");
  const auto start = std::chrono::steady_clock::now();

  TrainReport report;
  report.fingerprint_before = core.fingerprint();
  if (!overlay.is_full() && overlay.core_fingerprint != report.fingerprint_before) {
    throw DataError("trainer.train: overlay is bound to a different core");
  }
  report.initial_val_loss = validation_loss(core, &overlay, val_set, config);

  const std::size_t steps_per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
  report.total_steps = steps_per_epoch * config.epochs;
  AdamW optimizer(config.beta1, config.beta2, config.epsilon, config.weight_decay);
  const auto params = tunable_tensors(core, &overlay);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng order_rng = make_rng(derive_seed(config.seed, "batch-order"), epoch);
    const auto order = random_permutation(order_rng, train_set.size());
    const std::uint64_t mask_seed = derive_seed(config.seed, "train-mask-" + std::to_string(epoch));
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      std::vector<std::vector<TokenId>> seqs;
      std::vector<TrainingExample> batch;
      const std::size_t end = std::min(train_set.size(), (b + 1) * config.batch_size);
      for (std::size_t k = b * config.batch_size; k < end; ++k) {
        const std::size_t idx = order[k];
        if (core.config.objective == Objective::Causal) {
          batch.push_back(make_causal_example(train_set[idx]));
        } else {
          Rng rng = make_rng(mask_seed, idx);
          batch.push_back(make_masked_example(train_set[idx], rng, config.mask_rate));
        }
      }
      auto lg = loss_and_grad(core, &overlay, batch);
      if (!std::isfinite(lg.loss)) {
        throw NumericalError("trainer.train: non-finite loss at step " + std::to_string(step));
      }
      report.step_loss.push_back(lg.loss);
      auto grads = tunable_tensors(lg.grads, &overlay);
      if (config.clip_norm) clip_gradients(grads, *config.clip_norm);
      optimizer.step(params, grads, linear_learning_rate(config.learning_rate, step, report.total_steps));
      ++step;
    }
    const double val = validation_loss(core, &overlay, val_set, config);
    if (!std::isfinite(val)) {
      throw NumericalError("trainer.train: non-finite validation loss after step " + std::to_string(step - 1));
    }
    report.epoch_val_loss.push_back(val);
  }

  report.fingerprint_after = core.fingerprint();
  if (overlay.is_full()) overlay.core_fingerprint = report.fingerprint_after;
  report.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

GridSelection grid_select(const FrozenCore& core, const MethodSpec& method, std::span<const TrainConfig> grid,
                          const std::vector<std::vector<TokenId>>& train_set,
                          const std::vector<std::vector<TokenId>>& val_set, std::uint64_t overlay_seed) {
  if (grid.empty()) throw UsageError("trainer.grid_select: empty grid");
  GridSelection sel;
  bool found = false;
  for (const auto& cfg : grid) {
    FrozenCore c = core;
    TuningOverlay o = attach(c, method, overlay_seed);
    GridRun run{cfg, std::nullopt};
    try {
      const auto report = train(c, o, train_set, val_set, cfg);
      const double loss = report.final_val_loss();
      if (std::isfinite(loss)) run.val_loss = loss;
    } catch (const NumericalError&) {
    }
    if (run.val_loss) {
      const bool better = !found || *run.val_loss < sel.best_val_loss ||
                          (*run.val_loss == sel.best_val_loss && cfg.learning_rate < sel.best.learning_rate);
      if (better) {
        found = true;
        sel.best = cfg;
        sel.best_val_loss = *run.val_loss;
        sel.core = std::move(c);
        sel.overlay = std::move(o);
      }
    }
    sel.runs.push_back(run);
  }
  if (!found) throw NumericalError("trainer.grid_select: every run diverged");
  return sel;
}

}  // namespace pedebias
