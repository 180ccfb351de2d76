// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "qrlora/matrix.hpp"

// Data-parallel inner loops. The OpenMP versions in qrlora::kernels are what
// the library calls; qrlora::kernels::serial holds plain single-threaded
// references kept for tests and benchmarks.
//
// Every parallel kernel is deterministic for any thread count: output
// entries are computed by one thread each, and reductions use fixed-size
// chunks combined in chunk order.

namespace qrlora::kernels {

/// Chunk length used by the chunked reductions.
inline constexpr std::size_t kReduceChunk = 4096;

/// a * b
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// a^T * b
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
/// a * b^T
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double sum_squares(std::span<const double> a);

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace serial {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
double dot(std::span<const double> a, std::span<const double> b);
double sum_squares(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace serial

}  // namespace qrlora::kernels
