// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/peft.hpp"

#include "pedebias/errors.hpp"
#include "pedebias/random.hpp"

namespace pedebias {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Full: return "full";
    case Method::Prefix: return "prefix";
    case Method::Prompt: return "prompt";
    case Method::Adapter: return "adapter";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  if (s == "full") return Method::Full;
  if (s == "prefix") return Method::Prefix;
  if (s == "prompt") return Method::Prompt;
  if (s == "adapter") return Method::Adapter;
  throw UsageError("unknown method '" + std::string(s) + "' (expected full|prefix|prompt|adapter)");
}

std::string_view to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw UsageError("unknown activation '" + std::string(s) + "' (expected relu|tanh)");
}

void validate_method(const MethodSpec& spec, const ModelConfig& config) {
  switch (spec.method) {
    case Method::Full:
      return;
    case Method::Prefix:
    case Method::Prompt:
      // Leave at least two positions for real text.
      if (spec.length + 2 > config.max_len) {
        throw DataError("peft.attach: length l=" + std::to_string(spec.length) + " leaves no room for text within max_len=" +
                        std::to_string(config.max_len));
      }
      return;
    case Method::Adapter:
      if (spec.reduction == 0) throw DataError("peft.attach: reduction factor r must be positive");
      if (config.d % spec.reduction != 0) {
        throw DataError("peft.attach: d=" + std::to_string(config.d) + " not divisible by r=" + std::to_string(spec.reduction));
      }
      return;
  }
}

TuningOverlay attach(const FrozenCore& core, const MethodSpec& spec, std::uint64_t seed) {
  const auto& c = core.config;
  validate_method(spec, c);
  Rng rng = make_rng(seed, 0x70656674);
  constexpr double kStd = 0.02;
  auto gaussian = [&](std::size_t r, std::size_t cols) {
    Matrix m(r, cols);
    for (auto& x : m.data) x = normal_draw(rng, kStd);
    return m;
  };

  TuningOverlay o;
  o.spec = spec;
  o.core_fingerprint = core.fingerprint();
  switch (spec.method) {
    case Method::Full:
      o.params = FullTuning{};
      break;
    case Method::Prefix: {
      PrefixParams p;
      p.length = spec.length;
      p.keys.resize(c.layers);
      p.values.resize(c.layers);
      for (std::size_t i = 0; i < c.layers; ++i) {
        for (std::size_t h = 0; h < c.heads; ++h) p.keys[i].push_back(gaussian(spec.length, c.head_dim()));
        for (std::size_t h = 0; h < c.heads; ++h) p.values[i].push_back(gaussian(spec.length, c.head_dim()));
      }
      o.params = std::move(p);
      break;
    }
    case Method::Prompt:
      o.params = PromptParams{gaussian(spec.length, c.d)};
      break;
    case Method::Adapter: {
      AdapterParams a;
      a.reduction = spec.reduction;
      a.activation = spec.activation;
      a.layer_norm = spec.adapter_layer_norm;
      const std::size_t m = c.d / spec.reduction;
      for (std::size_t i = 0; i < c.layers; ++i) {
        AdapterLayer l;
        l.down = gaussian(c.d, m);
        l.down_b = Matrix(1, m);
        l.up = Matrix(m, c.d);
        l.up_b = Matrix(1, c.d);
        if (a.layer_norm) {
          l.ln_gain = Matrix(1, c.d, 1.0);
          l.ln_bias = Matrix(1, c.d);
        }
        a.layers.push_back(std::move(l));
      }
      o.params = std::move(a);
      break;
    }
  }
  return o;
}

TuningOverlay TuningOverlay::zeros_like() const {
  TuningOverlay z = *this;
  z.for_each_tensor([](Matrix& m) { m.set_zero(); });
  return z;
}

std::size_t TuningOverlay::own_parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const Matrix& m) { n += m.size(); });
  return n;
}

std::size_t count_tunable(const MethodSpec& spec, const ModelConfig& c) {
  switch (spec.method) {
    case Method::Full:
      return core_parameter_count(c);
    case Method::Prefix:
      return 2 * spec.length * c.d * c.layers;
    case Method::Prompt:
      return spec.length * c.d;
    case Method::Adapter: {
      if (spec.reduction == 0 || c.d % spec.reduction != 0) {
        throw DataError("peft.count_tunable: d=" + std::to_string(c.d) + " not divisible by r=" + std::to_string(spec.reduction));
      }
      const std::size_t m = c.d / spec.reduction;
      std::size_t per_layer = 2 * c.d * m + m + c.d;
      if (spec.adapter_layer_norm) per_layer += 2 * c.d;
      return c.layers * per_layer;
    }
  }
  return 0;
}

}  // namespace pedebias
