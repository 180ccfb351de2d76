// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrlora/kernels.hpp"

#include <string>
#include <vector>

#include "qrlora/error.hpp"

namespace qrlora::kernels {

namespace {

// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 15;

void check_inner(std::size_t lhs, std::size_t rhs, const char* what) {
  if (lhs != rhs) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": inner dimensions " +
                                               std::to_string(lhs) + " and " +
                                               std::to_string(rhs) + " differ");
  }
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorCode::kShapeMismatch, "vector lengths differ");
}

}  // namespace

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner(a.cols(), b.rows(), "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  DenseMatrix c(m, n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  const bool par = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner(a.rows(), b.rows(), "matmul_tn");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  DenseMatrix c(m, n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  const bool par = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double api = pa[p * m + i];
      const double* brow = pb + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner(a.cols(), b.cols(), "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  DenseMatrix c(m, n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  const bool par = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      pc[i * n + j] = s;
    }
  }
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_lengths(a.size(), b.size());
  const std::size_t n = a.size();
  const std::size_t chunks = (n + kReduceChunk - 1) / kReduceChunk;
  std::vector<double> partial(chunks, 0.0);
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
  for (std::ptrdiff_t cc = 0; cc < static_cast<std::ptrdiff_t>(chunks); ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    const std::size_t end = std::min(n, (c + 1) * kReduceChunk);
    double s = 0.0;
    for (std::size_t i = c * kReduceChunk; i < end; ++i) s += a[i] * b[i];
    partial[c] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

double sum_squares(std::span<const double> a) { return dot(a, a); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_lengths(x.size(), y.size());
  const std::size_t n = x.size();
#pragma omp parallel for simd schedule(static) if (n >= kParallelWork)
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

namespace serial {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner(a.cols(), b.rows(), "matmul");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double aip = a(i, p);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aip * b(p, j);
    }
  }
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner(a.rows(), b.rows(), "matmul_tn");
  DenseMatrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t p = 0; p < a.rows(); ++p) {
      const double api = a(p, i);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += api * b(p, j);
    }
  }
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner(a.cols(), b.cols(), "matmul_nt");
  DenseMatrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      c(i, j) = s;
    }
  }
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_lengths(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sum_squares(std::span<const double> a) { return dot(a, a); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_lengths(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace serial

}  // namespace qrlora::kernels
