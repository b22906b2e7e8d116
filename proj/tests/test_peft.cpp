// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "pedebias/errors.hpp"
#include "pedebias/peft.hpp"
#include "pedebias/transformer.hpp"
#include "support.hpp"

using namespace pedebias;
using namespace pedebias::testing;

namespace {

ModelConfig base_size() {
  ModelConfig c;
  c.layers = 12;
  c.d = 768;
  c.heads = 12;
  c.max_len = 512;
  c.vocab_size = 30522;
  return c;
}

}  // namespace

TEST_CASE("tunable parameter counts") {
  const auto c = base_size();
  MethodSpec prefix{Method::Prefix, 16, 1, Activation::Relu, false};
  MethodSpec prompt{Method::Prompt, 16, 1, Activation::Relu, false};
  MethodSpec adapter{Method::Adapter, 0, 48, Activation::Relu, false};
  CHECK(count_tunable(prefix, c) == 294912);
  CHECK(count_tunable(prompt, c) == 12288);
  CHECK(count_tunable(adapter, c) == 304320);
  CHECK(count_tunable(adapter, c) - 12 * (16 + 768) == count_tunable(prefix, c));
  adapter.adapter_layer_norm = true;
  CHECK(count_tunable(adapter, c) == 304320 + 12 * 2 * 768);
  MethodSpec full{Method::Full, 0, 1, Activation::Relu, false};
  CHECK(count_tunable(full, c) == core_parameter_count(c));
}

TEST_CASE("attached overlays own exactly the counted parameters") {
  auto c = tiny_config(Objective::Causal);
  const FrozenCore core = FrozenCore::initialize(c, 1);
  CHECK(core.parameter_count() == core_parameter_count(c));
  for (Method m : {Method::Prefix, Method::Prompt, Method::Adapter}) {
    MethodSpec s;
    s.method = m;
    s.length = 3;
    s.reduction = 4;
    const auto ov = attach(core, s, 2);
    CHECK(ov.own_parameter_count() == count_tunable(s, c));
    CHECK(ov.core_fingerprint == core.fingerprint());
  }
}

TEST_CASE("adapter at r=48 on d=768 has a 16-wide bottleneck") {
  auto c = base_size();
  c.layers = 1;
  c.vocab_size = 8;
  c.max_len = 4;
  const FrozenCore core = FrozenCore::initialize(c, 1);
  MethodSpec s;
  s.method = Method::Adapter;
  s.reduction = 48;
  const auto ov = attach(core, s, 1);
  CHECK(ov.adapter()->layers[0].down.cols == 16);
  CHECK(ov.adapter()->layers[0].up.rows == 16);
}

TEST_CASE("dimension constraints") {
  auto c = tiny_config(Objective::Causal);
  MethodSpec s;
  s.method = Method::Adapter;
  s.reduction = 5;
  CHECK_THROWS_AS(validate_method(s, c), DataError);
  s.reduction = 0;
  CHECK_THROWS_AS(validate_method(s, c), DataError);
  s.method = Method::Prefix;
  s.length = 15;
  CHECK_THROWS_AS(validate_method(s, c), DataError);
}

TEST_CASE("a zero-length prompt is a no-op") {
  auto c = tiny_config(Objective::Masked);
  const FrozenCore core = scrambled_core(c, 2);
  MethodSpec s;
  s.method = Method::Prompt;
  s.length = 0;
  const auto ov = attach(core, s, 1);
  const std::vector<TokenId> ids = {4, 5, 6, 7};
  CHECK(forward(core, &ov, ids) == forward(core, nullptr, ids));
}

TEST_CASE("prefix attention rows still sum to one") {
  auto c = tiny_config(Objective::Causal);
  const FrozenCore core = scrambled_core(c, 3);
  MethodSpec s;
  s.method = Method::Prefix;
  s.length = 3;
  auto ov = attach(core, s, 4);
  scramble(ov, 5);
  const std::vector<TokenId> ids = {3, 4, 5, 6, 7};
  const auto trace = trace_forward(core, &ov, ids);
  for (const auto& layer : trace.layers) {
    for (const auto& a : layer.attn) {
      CHECK(a.cols == 3 + ids.size());
      for (std::size_t r = 0; r < a.rows; ++r) {
        double sum = 0.0;
        for (std::size_t col = 0; col < a.cols; ++col) sum += a(r, col);
        CHECK(std::abs(sum - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("zero-initialized adapter: up gradient nonzero, down gradient zero") {
  auto c = tiny_config(Objective::Causal);
  FrozenCore core = scrambled_core(c, 6);
  MethodSpec s;
  s.method = Method::Adapter;
  s.reduction = 4;
  TuningOverlay ov = attach(core, s, 7);
  const auto batch = make_examples({{3, 4, 5, 6, 7, 8}}, Objective::Causal, 1);
  auto g = grad_tunable(core, &ov, batch);
  double up = 0.0, down = 0.0;
  for (const auto& l : g.overlay.adapter()->layers) {
    for (double x : l.up.data) up = std::max(up, std::abs(x));
    for (double x : l.down.data) down = std::max(down, std::abs(x));
  }
  CHECK(up > 0.0);
  CHECK(down == 0.0);
}

TEST_CASE("layer norm rows are standardized") {
  auto c = tiny_config(Objective::Causal);
  const FrozenCore core = scrambled_core(c, 8);
  const auto trace = trace_forward(core, nullptr, std::vector<TokenId>{3, 4, 5, 6});
  for (const auto& layer : trace.layers) {
    for (const auto* ln : {&layer.ln1, &layer.ln2}) {
      for (std::size_t r = 0; r < ln->normalized.rows; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t col = 0; col < ln->normalized.cols; ++col) mean += ln->normalized(r, col);
        mean /= static_cast<double>(ln->normalized.cols);
        for (std::size_t col = 0; col < ln->normalized.cols; ++col) var += std::pow(ln->normalized(r, col) - mean, 2);
        var /= static_cast<double>(ln->normalized.cols);
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(var - 1.0) < 1e-6);
      }
    }
  }
}
