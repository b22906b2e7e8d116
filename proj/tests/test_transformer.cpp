// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "pedebias/errors.hpp"
#include "pedebias/kernels.hpp"
#include "pedebias/transformer.hpp"
#include "support.hpp"

using namespace pedebias;
using namespace pedebias::testing;

namespace {

std::vector<TrainingExample> batch_for(Objective objective, std::uint64_t seed) {
  Rng rng = make_rng(seed, 1);
  std::vector<std::vector<TokenId>> seqs;
  for (std::size_t len : {5u, 7u}) {
    auto ids = random_tokens(rng, len, 12);
    if (objective == Objective::Causal) ids.insert(ids.begin(), special::kBos);
    seqs.push_back(ids);
  }
  return make_examples(seqs, objective, seed, 0.3);
}

MethodSpec spec_of(Method m) {
  MethodSpec s;
  s.method = m;
  if (m == Method::Prefix || m == Method::Prompt) s.length = 2;
  if (m == Method::Adapter) s.reduction = 8;
  return s;
}

}  // namespace

TEST_CASE("analytic gradients match central differences for every overlay") {
  for (Objective objective : {Objective::Causal, Objective::Masked}) {
    for (Method method : {Method::Prefix, Method::Prompt, Method::Adapter, Method::Full}) {
      CAPTURE(to_string(objective));
      CAPTURE(to_string(method));
      auto config = tiny_config(objective);
      FrozenCore core = scrambled_core(config, 3);
      TuningOverlay overlay = attach(core, spec_of(method), 5);
      scramble(overlay, 11);
      const auto batch = batch_for(objective, 17);
      CHECK(max_gradient_error(core, &overlay, batch) < 1e-4);
    }
  }
}

TEST_CASE("layer-norm adapter and tanh activation gradients") {
  auto config = tiny_config(Objective::Causal);
  FrozenCore core = scrambled_core(config, 4);
  MethodSpec spec = spec_of(Method::Adapter);
  spec.adapter_layer_norm = true;
  spec.activation = Activation::Tanh;
  TuningOverlay overlay = attach(core, spec, 6);
  scramble(overlay, 12);
  CHECK(max_gradient_error(core, &overlay, batch_for(Objective::Causal, 21)) < 1e-4);
}

TEST_CASE("zero-length prefix and zero-initialized adapter leave the forward pass unchanged") {
  auto config = tiny_config(Objective::Causal);
  FrozenCore core = scrambled_core(config, 8);
  MethodSpec prefix = spec_of(Method::Prefix);
  prefix.length = 0;
  const TuningOverlay empty_prefix = attach(core, prefix, 1);
  const TuningOverlay adapter = attach(core, spec_of(Method::Adapter), 1);
  Rng rng = make_rng(9);
  for (int i = 0; i < 20; ++i) {
    const auto ids = random_tokens(rng, 1 + uniform_index(rng, 15), 12);
    const Matrix base = forward(core, nullptr, ids);
    CHECK(forward(core, &empty_prefix, ids) == base);
    CHECK(forward(core, &adapter, ids) == base);
  }
}

TEST_CASE("prompt tuning equals prepending the prompt rows to the embeddings") {
  auto config = tiny_config(Objective::Masked);
  FrozenCore core = scrambled_core(config, 10);
  MethodSpec spec = spec_of(Method::Prompt);
  spec.length = 3;
  TuningOverlay overlay = attach(core, spec, 2);
  scramble(overlay, 3);
  Rng rng = make_rng(4);
  const auto ids = random_tokens(rng, 6, 12);

  Matrix emb(3 + ids.size(), config.d);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < config.d; ++c) emb(r, c) = overlay.prompt()->prompt(r, c);
  }
  for (std::size_t t = 0; t < ids.size(); ++t) {
    for (std::size_t c = 0; c < config.d; ++c) emb(3 + t, c) = core.tok_emb(static_cast<std::size_t>(ids[t]), c);
  }
  const auto direct = trace_forward_embeddings(core, nullptr, emb, 3).logits;
  const Matrix via_overlay = forward(core, &overlay, ids);
  REQUIRE(direct.same_shape(via_overlay));
  for (std::size_t i = 0; i < direct.data.size(); ++i) CHECK(std::abs(direct.data[i] - via_overlay.data[i]) <= 1e-12);
}

TEST_CASE("parallel loss and gradient are bit-identical to the serial reference") {
  auto config = tiny_config(Objective::Causal);
  FrozenCore core = scrambled_core(config, 12);
  TuningOverlay overlay = attach(core, spec_of(Method::Adapter), 3);
  scramble(overlay, 4);
  Rng rng = make_rng(5);
  std::vector<std::vector<TokenId>> seqs;
  for (int i = 0; i < 9; ++i) {
    auto ids = random_tokens(rng, 3 + uniform_index(rng, 10), 12);
    ids.insert(ids.begin(), special::kBos);
    seqs.push_back(ids);
  }
  const auto batch = make_examples(seqs, Objective::Causal, 1);
  const auto serial = loss_and_grad_serial(core, &overlay, batch);
  const auto parallel = loss_and_grad(core, &overlay, batch);
  CHECK(serial.loss == parallel.loss);
  CHECK(serial.predicted == parallel.predicted);
  bool same = true;
  auto a = serial.grads;
  auto b = parallel.grads;
  auto ta = tunable_tensors(a, &overlay);
  auto tb = tunable_tensors(b, &overlay);
  for (std::size_t i = 0; i < ta.size(); ++i) same = same && (*ta[i] == *tb[i]);
  CHECK(same);
}

TEST_CASE("causal attention ignores later tokens") {
  auto config = tiny_config(Objective::Causal);
  FrozenCore core = scrambled_core(config, 13);
  std::vector<TokenId> a = {3, 5, 6, 7, 8};
  std::vector<TokenId> b = {3, 5, 6, 9, 10};
  const Matrix la = forward(core, nullptr, a);
  const Matrix lb = forward(core, nullptr, b);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < la.cols; ++c) CHECK(la(r, c) == lb(r, c));
  }
}

TEST_CASE("masked examples mask max(1, round(rate * L)) positions") {
  Rng rng = make_rng(1);
  std::vector<TokenId> ids = {4, 5, 6, 7, 8, 9, 10, 11, 4, 5};
  const auto ex = make_masked_example(ids, rng, 0.15);
  CHECK(ex.positions.size() == 2);
  for (std::size_t j = 0; j < ex.positions.size(); ++j) {
    CHECK(ex.input[ex.positions[j]] == special::kMask);
    CHECK(ex.targets[j] == ids[ex.positions[j]]);
  }
  const auto one = make_masked_example(std::vector<TokenId>{4, 5}, rng, 0.15);
  CHECK(one.positions.size() == 1);
}

TEST_CASE("uniform logits give loss ln(V)") {
  auto config = tiny_config(Objective::Causal);
  FrozenCore core = FrozenCore::initialize(config, 1);
  core.out_w.set_zero();
  core.out_b.set_zero();
  const auto batch = make_examples({{3, 4, 5, 6}}, Objective::Causal, 1);
  CHECK(std::abs(lm_loss(core, nullptr, batch) - std::log(12.0)) <= 1e-12);
}

TEST_CASE("inputs longer than the context window are rejected") {
  auto config = tiny_config(Objective::Causal);
  FrozenCore core = FrozenCore::initialize(config, 1);
  std::vector<TokenId> ids(17, 4);
  CHECK_THROWS_AS(forward(core, nullptr, ids), DataError);
  MethodSpec spec = spec_of(Method::Prefix);
  TuningOverlay overlay = attach(core, spec, 1);
  std::vector<TokenId> fits(15, 4);
  CHECK_THROWS_AS(forward(core, &overlay, fits), DataError);
  std::vector<TokenId> bad = {3, 40};
  CHECK_THROWS_AS(forward(core, nullptr, bad), DataError);
}
