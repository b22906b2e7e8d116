// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pedebias/core.hpp"
#include "pedebias/matrix.hpp"
#include "pedebias/peft.hpp"
#include "pedebias/random.hpp"

namespace pedebias {

struct LayerNormTrace {
  Matrix normalized;  // before gain and bias
  std::vector<double> inv_std;
};

// Intermediate activations of one block, kept for the backward pass.
struct LayerTrace {
  Matrix input;                       // H0, S x d
  std::vector<Matrix> q, k, v;        // per head; k and v carry the prefix rows first
  std::vector<Matrix> attn;           // per head, S x (prefix + S)
  Matrix heads;                       // concatenated head outputs, S x d
  LayerNormTrace ln1;
  Matrix h3;
  Matrix ffn_pre, ffn_act;            // S x d_ff
  Matrix h4;                          // feed-forward output before the adapter
  LayerNormTrace adapter_ln;          // layer-norm adapter variant only
  Matrix adapter_in, adapter_pre, adapter_act;
  Matrix h4_out;                      // after the adapter (== h4 without one)
  LayerNormTrace ln2;
  Matrix h5;
};

struct ForwardTrace {
  std::size_t prompt_len = 0;
  std::size_t prefix_len = 0;
  std::size_t text_len = 0;
  std::vector<TokenId> tokens;
  std::vector<LayerTrace> layers;
  Matrix logits;  // text_len x vocab
};

// Full forward pass with every activation retained. The causal objective
// masks attention to later positions; prefix keys stay visible to every query.
ForwardTrace trace_forward(const FrozenCore& core, const TuningOverlay* overlay, std::span<const TokenId> tokens);

// Forward from explicit input embeddings (rows before positional encoding).
// Logits are produced for rows [text_offset, rows).
ForwardTrace trace_forward_embeddings(const FrozenCore& core, const TuningOverlay* overlay, const Matrix& embeddings,
                                      std::size_t text_offset);

// Logits for every text position, tokens.size() x vocab.
Matrix forward(const FrozenCore& core, const TuningOverlay* overlay, std::span<const TokenId> tokens);

// Final-layer hidden states at the text positions.
Matrix final_hidden(const FrozenCore& core, const TuningOverlay* overlay, std::span<const TokenId> tokens);

// Gradient buffers. core is populated only when core gradients are wanted
// (no overlay, or a Full overlay).
struct ModelGrads {
  bool has_core = false;
  FrozenCore core;
  TuningOverlay overlay;
};

ModelGrads make_grads(const FrozenCore& core, const TuningOverlay* overlay);

// Accumulates d(loss)/d(params) into grads given d(loss)/d(logits).
void backward(const FrozenCore& core, const TuningOverlay* overlay, const ForwardTrace& trace, const Matrix& dlogits,
              ModelGrads& grads);

// One sequence with its prediction targets: logits row positions[j] should
// predict targets[j].
struct TrainingExample {
  std::vector<TokenId> input;
  std::vector<std::size_t> positions;
  std::vector<TokenId> targets;
};

// Next-token targets: row t predicts ids[t + 1].
TrainingExample make_causal_example(std::span<const TokenId> ids);
// Selects max(1, round(rate * L)) positions, replaces them with MASK, and
// predicts the originals.
TrainingExample make_masked_example(std::span<const TokenId> ids, Rng& rng, double rate = 0.15);
// Builds a batch for the objective; masked plans draw from make_rng(seed, i).
std::vector<TrainingExample> make_examples(const std::vector<std::vector<TokenId>>& seqs, Objective objective,
                                           std::uint64_t seed, double mask_rate = 0.15);

// Mean negative log-likelihood (natural log) per predicted token.
double lm_loss(const FrozenCore& core, const TuningOverlay* overlay, std::span<const TrainingExample> batch);

struct LossAndGrad {
  double loss = 0.0;
  std::size_t predicted = 0;
  ModelGrads grads;
};

// Loss and exact gradients. Examples run in parallel; per-example gradients
// are reduced in example order, so results do not depend on thread count.
LossAndGrad loss_and_grad(const FrozenCore& core, const TuningOverlay* overlay, std::span<const TrainingExample> batch);

// Serial reference of loss_and_grad.
LossAndGrad loss_and_grad_serial(const FrozenCore& core, const TuningOverlay* overlay,
                                 std::span<const TrainingExample> batch);

// Gradients with respect to the tunable parameters only.
ModelGrads grad_tunable(const FrozenCore& core, const TuningOverlay* overlay, std::span<const TrainingExample> batch);

// Tunable tensors in visiting order: the core's for Full (or no overlay),
// otherwise the overlay's.
std::vector<Matrix*> tunable_tensors(FrozenCore& core, TuningOverlay* overlay);
std::vector<Matrix*> tunable_tensors(ModelGrads& grads, const TuningOverlay* overlay);

Matrix log_softmax_rows(const Matrix& logits);

// Anything that maps a token sequence to per-position logits. Causal models
// predict the next token at each row; masked models predict the token at the
// same row.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual Objective objective() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual Matrix logits(std::span<const TokenId> tokens) const = 0;
};

class TransformerLM final : public LanguageModel {
 public:
  TransformerLM(const FrozenCore& core, const TuningOverlay* overlay) : core_(&core), overlay_(overlay) {}

  Objective objective() const override { return core_->config.objective; }
  std::size_t vocab_size() const override { return core_->config.vocab_size; }
  Matrix logits(std::span<const TokenId> tokens) const override { return forward(*core_, overlay_, tokens); }

  const FrozenCore& core() const { return *core_; }
  const TuningOverlay* overlay() const { return overlay_; }

 private:
  const FrozenCore* core_;
  const TuningOverlay* overlay_;
};

// Sum over t >= 1 of log P(tokens[t] | tokens[<t]). Causal models only.
double sequence_logprob(const LanguageModel& model, std::span<const TokenId> tokens);

// Sum over t of log P(tokens[t] | tokens with t replaced by MASK); one
// forward pass per position. Masked models only.
double pseudo_logprob(const LanguageModel& model, std::span<const TokenId> tokens);

}  // namespace pedebias
