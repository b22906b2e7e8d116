// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/kernels.hpp"

#include <atomic>
#include <cassert>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pedebias::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::Parallel};

// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

void prepare(Matrix& c, std::size_t rows, std::size_t cols, bool accumulate) {
  if (accumulate) {
    if (c.rows != rows || c.cols != cols) throw std::invalid_argument("kernels: accumulate shape mismatch");
    return;
  }
  if (c.rows != rows || c.cols != cols) {
    c = Matrix(rows, cols);
  } else {
    c.set_zero();
  }
}

void check_nn(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("kernels::matmul: inner dimension mismatch");
}
void check_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw std::invalid_argument("kernels::matmul_tn: inner dimension mismatch");
}
void check_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw std::invalid_argument("kernels::matmul_nt: inner dimension mismatch");
}

// Row kernels. Output row i depends only on row i of the inputs, and the
// reduction index runs in ascending order, so splitting rows across threads
// leaves every element bit-identical to the serial loop.
inline void nn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  double* ci = c.data.data() + i * c.cols;
  const double* ai = a.data.data() + i * a.cols;
  for (std::size_t k = 0; k < a.cols; ++k) {
    const double aik = ai[k];
    if (aik == 0.0) continue;
    const double* bk = b.data.data() + k * b.cols;
    for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
  }
}

inline void tn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  double* ci = c.data.data() + i * c.cols;
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double aki = a.data[k * a.cols + i];
    if (aki == 0.0) continue;
    const double* bk = b.data.data() + k * b.cols;
    for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
  }
}

inline void nt_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  double* ci = c.data.data() + i * c.cols;
  const double* ai = a.data.data() + i * a.cols;
  for (std::size_t j = 0; j < b.rows; ++j) {
    const double* bj = b.data.data() + j * b.cols;
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
    ci[j] += s;
  }
}

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_nn(a, b);
  prepare(c, a.rows, b.cols, accumulate);
  for (std::size_t i = 0; i < a.rows; ++i) nn_row(a, b, c, i);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_tn(a, b);
  prepare(c, a.cols, b.cols, accumulate);
  for (std::size_t i = 0; i < a.cols; ++i) tn_row(a, b, c, i);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_nt(a, b);
  prepare(c, a.rows, b.rows, accumulate);
  for (std::size_t i = 0; i < a.rows; ++i) nt_row(a, b, c, i);
}

}  // namespace serial

namespace parallel {

void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_nn(a, b);
  prepare(c, a.rows, b.cols, accumulate);
  const auto n = static_cast<std::ptrdiff_t>(a.rows);
  const bool big = a.rows * a.cols * b.cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < n; ++i) nn_row(a, b, c, static_cast<std::size_t>(i));
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_tn(a, b);
  prepare(c, a.cols, b.cols, accumulate);
  const auto n = static_cast<std::ptrdiff_t>(a.cols);
  const bool big = a.rows * a.cols * b.cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < n; ++i) tn_row(a, b, c, static_cast<std::size_t>(i));
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  check_nt(a, b);
  prepare(c, a.rows, b.rows, accumulate);
  const auto n = static_cast<std::ptrdiff_t>(a.rows);
  const bool big = a.rows * a.cols * b.rows >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < n; ++i) nt_row(a, b, c, static_cast<std::size_t>(i));
}

}  // namespace parallel

void matmul(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (backend() == Backend::Parallel) {
    parallel::matmul(a, b, c, accumulate);
  } else {
    serial::matmul(a, b, c, accumulate);
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (backend() == Backend::Parallel) {
    parallel::matmul_tn(a, b, c, accumulate);
  } else {
    serial::matmul_tn(a, b, c, accumulate);
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  if (backend() == Backend::Parallel) {
    parallel::matmul_nt(a, b, c, accumulate);
  } else {
    serial::matmul_nt(a, b, c, accumulate);
  }
}

void add_row_vector(Matrix& m, const Matrix& v) {
  assert(v.size() == m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) r[j] += v.data[j];
  }
}

void column_sums(const Matrix& m, Matrix& out, bool accumulate) {
  if (!accumulate || out.size() != m.cols) out = Matrix(1, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) out.data[j] += r[j];
  }
}

}  // namespace pedebias::kernels
