// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>

#include "pedebias/checkpoint.hpp"
#include "pedebias/errors.hpp"
#include "support.hpp"

using namespace pedebias;
using namespace pedebias::testing;

TEST_CASE("core and overlay checkpoints round-trip") {
  TempDir dir("ckpt");
  auto c = tiny_config(Objective::Masked);
  const FrozenCore core = scrambled_core(c, 1);
  save_core(dir / "core.bin", core);
  const FrozenCore back = load_core(dir / "core.bin");
  CHECK(back.fingerprint() == core.fingerprint());

  for (Method m : {Method::Prefix, Method::Prompt, Method::Adapter, Method::Full}) {
    MethodSpec s;
    s.method = m;
    s.length = 2;
    s.reduction = 4;
    s.adapter_layer_norm = m == Method::Adapter;
    auto ov = attach(core, s, 3);
    scramble(ov, 4);
    save_overlay(dir / "ov.bin", ov);
    const auto loaded = load_overlay(dir / "ov.bin", back);
    CHECK(loaded.spec == ov.spec);
    std::vector<Matrix> a, b;
    ov.for_each_tensor([&](const Matrix& x) { a.push_back(x); });
    loaded.for_each_tensor([&](const Matrix& x) { b.push_back(x); });
    CHECK(a == b);
  }
}

TEST_CASE("overlays refuse a different core") {
  TempDir dir("ckpt2");
  auto c = tiny_config(Objective::Causal);
  const FrozenCore core = FrozenCore::initialize(c, 1);
  const FrozenCore other = FrozenCore::initialize(c, 2);
  MethodSpec s;
  s.method = Method::Adapter;
  s.reduction = 4;
  save_overlay(dir / "ov.bin", attach(core, s, 1));
  CHECK_THROWS_AS(load_overlay(dir / "ov.bin", other), DataError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir("ckpt3");
  const FrozenCore core = FrozenCore::initialize(tiny_config(Objective::Causal), 1);
  save_core(dir / "core.bin", core);
  std::string bytes;
  {
    std::ifstream in(dir / "core.bin", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::ofstream(dir / "trunc.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_core(dir / "trunc.bin"), DataError);
  std::ofstream(dir / "magic.bin", std::ios::binary) << "NOTACORE" << bytes.substr(8);
  CHECK_THROWS_AS(load_core(dir / "magic.bin"), DataError);
  std::ofstream(dir / "extra.bin", std::ios::binary) << bytes << "x";
  CHECK_THROWS_AS(load_core(dir / "extra.bin"), DataError);
  CHECK_THROWS_AS(load_core(dir / "missing.bin"), DataError);
}
