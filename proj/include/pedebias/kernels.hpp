// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pedebias/matrix.hpp"

// Dense kernels used by the transformer. Every kernel exists twice: a serial
// reference and an OpenMP version. Both compute each output element with the
// same summation order, so their results are bit-identical for any thread
// count.
namespace pedebias::kernels {

enum class Backend { Serial, Parallel };

void set_backend(Backend b);
Backend backend();

// Caps the OpenMP worker count (0 leaves the runtime default).
void set_threads(int n);
int max_threads();

// c = a * b, or c += a * b when accumulate is set.
void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
// c = a^T * b (or +=).
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
// c = a * b^T (or +=).
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);

namespace serial {
void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
}  // namespace serial

namespace parallel {
void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);
}  // namespace parallel

// Row-wise helpers shared by forward and backward passes.
void add_row_vector(Matrix& m, const Matrix& v);
void column_sums(const Matrix& m, Matrix& out, bool accumulate);

}  // namespace pedebias::kernels
