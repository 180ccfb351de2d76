// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>

#include "qrlora/linalg.hpp"
#include "qrlora/matrix.hpp"

namespace qrlora {

/// Rank-r split of a weight W (m x n) into its truncated-SVD core and the
/// residual: w_core + w_comp = W.
struct CoreSplit {
  DenseMatrix w_core;
  DenseMatrix w_comp;
  SvdFactors svd;
  std::size_t rank = 0;
};

/// Frozen orthogonal basis of one layer.
///
/// q is n x r with orthonormal columns, r_mat is r x m, and
/// W = w_comp + (q * r_mat)^T. Immutable once built; share it through
/// std::shared_ptr<const QrBasis>.
struct QrBasis {
  DenseMatrix q;
  DenseMatrix r_mat;
  DenseMatrix w_comp;
  std::size_t rank = 0;
  std::uint64_t fingerprint = 0;
  bool rank_deficient = false;

  std::size_t in_dim() const noexcept { return w_comp.rows(); }   // m
  std::size_t out_dim() const noexcept { return w_comp.cols(); }  // n
};

/// 64-bit FNV-1a over the little-endian bytes of q, r_mat, w_comp (in that
/// order) followed by the rank as a little-endian uint64.
std::uint64_t basis_fingerprint(const DenseMatrix& q, const DenseMatrix& r_mat,
                                const DenseMatrix& w_comp, std::size_t rank);

/// Throws RankOutOfRange unless 1 <= rank <= min(m, n); NonFinite.
CoreSplit extract_core(const DenseMatrix& w, std::size_t rank);

/// S = V_r diag(sigma_r), T = U_r^T, (Q_s, R_s) = qr(S), R = R_s T.
/// A rank-deficient core still yields a basis, with rank_deficient set.
QrBasis build_orthogonal_basis(const CoreSplit& split);

/// Validates shapes and recomputes the fingerprint. Used when a basis is
/// reassembled from stored tensors.
QrBasis assemble_basis(DenseMatrix q, DenseMatrix r_mat, DenseMatrix w_comp);

/// extract_core followed by build_orthogonal_basis.
std::shared_ptr<const QrBasis> decompose(const DenseMatrix& w, std::size_t rank);

/// W_comp + (Q R)^T
DenseMatrix reconstruct_origin(const QrBasis& basis);

}  // namespace qrlora
