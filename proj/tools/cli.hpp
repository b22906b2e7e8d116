// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pedebias::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

// args excludes the program name. JSON goes to out, everything for humans to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pedebias::cli
