// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "qrlora/matrix.hpp"

namespace qrlora {

/// Thin SVD W = U diag(sigma) Vt with s = min(m, n).
///
/// sigma is non-increasing. Each column of u has its largest-magnitude
/// entry positive (lowest row wins a tie); the matching row of vt carries
/// the compensating sign. Ties between equal singular values are left in
/// whatever order the sweep produced.
struct SvdFactors {
  DenseMatrix u;              // m x s
  std::vector<double> sigma;  // s
  DenseMatrix vt;             // s x n
};

/// One-sided Jacobi SVD. Throws NonFinite, NoConvergence.
SvdFactors svd(const DenseMatrix& w);

/// Reduced QR of a tall n x r matrix, r_tri with non-negative diagonal.
struct QrFactors {
  DenseMatrix q;      // n x r, orthonormal columns
  DenseMatrix r_tri;  // r x r, upper triangular
  // Set when some |r_tri(k, k)| < 1e-12 * ||s||_F. The factors are still
  // valid; the trailing columns of q are then an arbitrary orthonormal
  // completion.
  bool rank_deficient = false;
};

/// Householder reduced QR. Throws ShapeError when rows < cols, NonFinite.
QrFactors reduced_qr(const DenseMatrix& s);

double frobenius_norm(const DenseMatrix& m);

/// Cosine of the row-major flattenings of a and b, clamped to [-1, 1].
/// Throws ShapeMismatch, ZeroMatrix (either norm below 1e-300), NonFinite.
double cosine_similarity(const DenseMatrix& a, const DenseMatrix& b);

/// ||Q^T Q - I||_F
double orthonormality_defect(const DenseMatrix& q);

/// U[:, :r] diag(sigma[:r]) Vt[:r, :]
DenseMatrix truncated_product(const SvdFactors& f, std::size_t r);

}  // namespace qrlora
