// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pedebias/core.hpp"

namespace pedebias {

enum class Method { Full, Prefix, Prompt, Adapter };
enum class Activation { Relu, Tanh };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);
std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

struct MethodSpec {
  Method method = Method::Adapter;
  std::size_t length = 0;     // prefix / prompt length l
  std::size_t reduction = 1;  // adapter reduction factor r
  Activation activation = Activation::Relu;
  // Adds a tunable layer norm in front of each adapter. Off in the headline
  // configuration.
  bool adapter_layer_norm = false;

  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

struct FullTuning {};

// Per layer, per head: l x d/heads key and value prefixes.
struct PrefixParams {
  std::size_t length = 0;
  std::vector<std::vector<Matrix>> keys;
  std::vector<std::vector<Matrix>> values;
};

// l x d continuous tokens prepended to the input embeddings.
struct PromptParams {
  Matrix prompt;
};

struct AdapterLayer {
  Matrix down, down_b;  // d x d/r, 1 x d/r
  Matrix up, up_b;      // d/r x d, 1 x d
  Matrix ln_gain, ln_bias;  // 1 x d when the layer-norm variant is on, else empty
};

// Bottleneck residual block after each feed-forward sublayer.
struct AdapterParams {
  std::size_t reduction = 1;
  Activation activation = Activation::Relu;
  bool layer_norm = false;
  std::vector<AdapterLayer> layers;
};

// The tunable parameter set phi, bound to one core by fingerprint.
struct TuningOverlay {
  MethodSpec spec;
  std::variant<FullTuning, PrefixParams, PromptParams, AdapterParams> params;
  std::string core_fingerprint;

  bool is_full() const { return std::holds_alternative<FullTuning>(params); }
  const PrefixParams* prefix() const { return std::get_if<PrefixParams>(&params); }
  const PromptParams* prompt() const { return std::get_if<PromptParams>(&params); }
  const AdapterParams* adapter() const { return std::get_if<AdapterParams>(&params); }
  PrefixParams* prefix() { return std::get_if<PrefixParams>(&params); }
  PromptParams* prompt() { return std::get_if<PromptParams>(&params); }
  AdapterParams* adapter() { return std::get_if<AdapterParams>(&params); }

  std::size_t prefix_length() const { return prefix() ? prefix()->length : 0; }
  std::size_t prompt_length() const { return prompt() ? prompt()->prompt.rows : 0; }

  // Visits the overlay's own tensors (none for Full).
  template <class F>
  void for_each_tensor(F&& f) {
    if (auto* p = prefix()) {
      for (auto& layer : p->keys)
        for (auto& m : layer) f(m);
      for (auto& layer : p->values)
        for (auto& m : layer) f(m);
    } else if (auto* q = prompt()) {
      f(q->prompt);
    } else if (auto* a = adapter()) {
      for (auto& l : a->layers) {
        f(l.down);
        f(l.down_b);
        f(l.up);
        f(l.up_b);
        if (a->layer_norm) {
          f(l.ln_gain);
          f(l.ln_bias);
        }
      }
    }
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    const_cast<TuningOverlay*>(this)->for_each_tensor([&](Matrix& m) { f(static_cast<const Matrix&>(m)); });
  }

  TuningOverlay zeros_like() const;
  std::size_t own_parameter_count() const;
};

// Builds and initializes an overlay for core. Prefix and prompt vectors and
// adapter down-projections are Gaussian(0, 0.02); adapter up-projections are
// zero so the adapter starts as the identity.
TuningOverlay attach(const FrozenCore& core, const MethodSpec& spec, std::uint64_t seed);

// Checks method-specific dimension constraints against a config.
void validate_method(const MethodSpec& spec, const ModelConfig& config);

// Prefix: 2*l*d*layers. Prompt: l*d. Adapter: layers*(2*d*(d/r) + d/r + d),
// plus 2*d per layer with the layer-norm variant. Full: every core parameter.
std::size_t count_tunable(const MethodSpec& spec, const ModelConfig& config);

}  // namespace pedebias
