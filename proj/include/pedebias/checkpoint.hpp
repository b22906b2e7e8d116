// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "pedebias/core.hpp"
#include "pedebias/peft.hpp"

// Binary checkpoints. Layout (all integers u64 and all reals f64,
// little-endian):
//
//   core:    "PEDBCORE" u32 version | layers d heads max_len vocab d_ff
//            objective | ln_eps init_std | tensor count | tensors
//   overlay: "PEDBOVLY" u32 version | method length reduction activation
//            layer_norm | 64-char core fingerprint | tensor count | tensors
//
// Each tensor is rows, cols, then rows*cols values in row-major order, in
// the same order as for_each_tensor.
namespace pedebias {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_core(const std::filesystem::path& path, const FrozenCore& core);
FrozenCore load_core(const std::filesystem::path& path);

void save_overlay(const std::filesystem::path& path, const TuningOverlay& overlay);
// Rejects an overlay whose recorded fingerprint differs from core's.
TuningOverlay load_overlay(const std::filesystem::path& path, const FrozenCore& core);

}  // namespace pedebias
