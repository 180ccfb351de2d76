// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrlora/decomposition.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

#include "qrlora/error.hpp"
#include "qrlora/kernels.hpp"

namespace qrlora {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_u64(std::uint64_t& h, std::uint64_t bits) {
  for (int b = 0; b < 8; ++b) {
    h ^= (bits >> (8 * b)) & 0xffU;
    h *= kFnvPrime;
  }
}

void fnv_matrix(std::uint64_t& h, const DenseMatrix& m) {
  for (double v : m.data()) fnv_u64(h, std::bit_cast<std::uint64_t>(v));
}

}  // namespace

std::uint64_t basis_fingerprint(const DenseMatrix& q, const DenseMatrix& r_mat,
                                const DenseMatrix& w_comp, std::size_t rank) {
  std::uint64_t h = kFnvOffset;
  fnv_matrix(h, q);
  fnv_matrix(h, r_mat);
  fnv_matrix(h, w_comp);
  fnv_u64(h, static_cast<std::uint64_t>(rank));
  return h;
}

CoreSplit extract_core(const DenseMatrix& w, std::size_t rank) {
  if (w.empty()) throw Error(ErrorCode::kShapeError, "extract_core: empty weight");
  const std::size_t s = std::min(w.rows(), w.cols());
  if (rank < 1 || rank > s) {
    throw Error(ErrorCode::kRankOutOfRange, "extract_core: rank " + std::to_string(rank) +
                                                " outside [1, " + std::to_string(s) + "]");
  }
  CoreSplit split;
  split.svd = svd(w);
  split.rank = rank;
  if (rank == s) {
    // Full rank keeps the whole weight in the core; the split is exact.
    split.w_core = w;
    split.w_comp = DenseMatrix(w.rows(), w.cols());
  } else {
    split.w_core = truncated_product(split.svd, rank);
    split.w_comp = w - split.w_core;
  }
  return split;
}

QrBasis build_orthogonal_basis(const CoreSplit& split) {
  const std::size_t r = split.rank;
  const SvdFactors& f = split.svd;
  // S = V[:, :r] diag(sigma[:r]), stored n x r.
  DenseMatrix s = take_rows(f.vt, 0, r).transpose();
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t k = 0; k < r; ++k) s(i, k) *= f.sigma[k];
  }
  const DenseMatrix t = take_cols(f.u, 0, r).transpose();  // r x m
  QrFactors qr = reduced_qr(s);

  QrBasis basis = assemble_basis(std::move(qr.q), kernels::matmul(qr.r_tri, t), split.w_comp);
  basis.rank_deficient = qr.rank_deficient;
  return basis;
}

QrBasis assemble_basis(DenseMatrix q, DenseMatrix r_mat, DenseMatrix w_comp) {
  const std::size_t r = q.cols();
  if (q.empty() || r_mat.rows() != r || w_comp.rows() != r_mat.cols() ||
      w_comp.cols() != q.rows() || r > q.rows()) {
    throw Error(ErrorCode::kShapeError, "basis tensors have inconsistent shapes");
  }
  require_finite(q, "basis q");
  require_finite(r_mat, "basis r");
  require_finite(w_comp, "basis w_comp");
  QrBasis b;
  b.rank = r;
  b.fingerprint = basis_fingerprint(q, r_mat, w_comp, r);
  b.q = std::move(q);
  b.r_mat = std::move(r_mat);
  b.w_comp = std::move(w_comp);
  return b;
}

std::shared_ptr<const QrBasis> decompose(const DenseMatrix& w, std::size_t rank) {
  return std::make_shared<const QrBasis>(build_orthogonal_basis(extract_core(w, rank)));
}

DenseMatrix reconstruct_origin(const QrBasis& basis) {
  return basis.w_comp + kernels::matmul(basis.q, basis.r_mat).transpose();
}

}  // namespace qrlora
