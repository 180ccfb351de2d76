// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrlora/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qrlora/error.hpp"
#include "qrlora/kernels.hpp"

namespace qrlora {

namespace {

constexpr int kMaxSweeps = 80;
constexpr double kJacobiTol = 1e-15;

struct TallSvd {
  DenseMatrix u;  // m x n
  std::vector<double> sigma;
  DenseMatrix v;  // n x n
};

// Hestenes one-sided Jacobi on a tall matrix (m >= n). Works on columns, so
// the matrix is kept transposed (one column per row) for contiguous access.
TallSvd jacobi_tall(const DenseMatrix& w) {
  const std::size_t m = w.rows(), n = w.cols();
  DenseMatrix cols = w.transpose();  // n x m
  DenseMatrix vcols = DenseMatrix::identity(n);

  bool converged = n == 1;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto ap = cols.row(p);
        auto aq = cols.row(q);
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += ap[i] * ap[i];
          beta += aq[i] * aq[i];
          gamma += ap[i] * aq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = ap[i], y = aq[i];
          ap[i] = c * x - s * y;
          aq[i] = s * x + c * y;
        }
        auto vp = vcols.row(p);
        auto vq = vcols.row(q);
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i], y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    throw Error(ErrorCode::kNoConvergence, "svd: Jacobi sweeps exceeded iteration cap");
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(kernels::serial::sum_squares(cols.row(j)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

  TallSvd out{DenseMatrix(m, n), std::vector<double>(n), DenseMatrix(n, n)};
  std::vector<bool> filled(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = norms[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = vcols(j, i);
    if (norms[j] > 0.0 && std::isnormal(norms[j])) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, k) = cols(j, i) / norms[j];
      filled[k] = true;
    }
  }

  // Exactly-zero singular values leave U columns undetermined: complete
  // them to an orthonormal set with Gram-Schmidt over the unit vectors.
  std::size_t candidate = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (filled[k]) continue;
    for (; candidate < m; ++candidate) {
      std::vector<double> e(m, 0.0);
      e[candidate] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t c = 0; c < n; ++c) {
          if (!filled[c]) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < m; ++i) proj += out.u(i, c) * e[i];
          for (std::size_t i = 0; i < m; ++i) e[i] -= proj * out.u(i, c);
        }
      }
      const double len = std::sqrt(kernels::serial::sum_squares(e));
      if (len > 0.5) {
        for (std::size_t i = 0; i < m; ++i) out.u(i, k) = e[i] / len;
        filled[k] = true;
        ++candidate;
        break;
      }
    }
  }
  return out;
}

void apply_sign_convention(SvdFactors& f) {
  const std::size_t m = f.u.rows(), s = f.u.cols(), n = f.vt.cols();
  for (std::size_t k = 0; k < s; ++k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < m; ++i) {
      if (std::abs(f.u(i, k)) > std::abs(f.u(best, k))) best = i;
    }
    if (f.u(best, k) < 0.0) {
      for (std::size_t i = 0; i < m; ++i) f.u(i, k) = -f.u(i, k);
      for (std::size_t j = 0; j < n; ++j) f.vt(k, j) = -f.vt(k, j);
    }
  }
}

}  // namespace

SvdFactors svd(const DenseMatrix& w) {
  if (w.empty()) throw Error(ErrorCode::kShapeError, "svd: empty matrix");
  require_finite(w, "svd");
  SvdFactors f;
  if (w.rows() >= w.cols()) {
    TallSvd t = jacobi_tall(w);
    f.u = std::move(t.u);
    f.sigma = std::move(t.sigma);
    f.vt = t.v.transpose();
  } else {
    // W^T = U' S V'^T  =>  W = V' S U'^T
    TallSvd t = jacobi_tall(w.transpose());
    f.u = std::move(t.v);
    f.sigma = std::move(t.sigma);
    f.vt = t.u.transpose();
  }
  apply_sign_convention(f);
  return f;
}

QrFactors reduced_qr(const DenseMatrix& s) {
  if (s.empty()) throw Error(ErrorCode::kShapeError, "reduced_qr: empty matrix");
  const std::size_t n = s.rows(), r = s.cols();
  if (n < r) {
    throw Error(ErrorCode::kShapeError, "reduced_qr: needs rows >= cols, got " +
                                            std::to_string(n) + "x" + std::to_string(r));
  }
  require_finite(s, "reduced_qr");
  const double scale = frobenius_norm(s);

  DenseMatrix a = s;
  std::vector<std::vector<double>> reflectors(r);
  for (std::size_t k = 0; k < r; ++k) {
    std::vector<double> v(n - k);
    for (std::size_t i = k; i < n; ++i) v[i - k] = a(i, k);
    const double xnorm = std::sqrt(kernels::serial::sum_squares(v));
    if (xnorm == 0.0) continue;
    const double alpha = -std::copysign(xnorm, v[0]);
    v[0] -= alpha;
    const double vnorm = std::sqrt(kernels::serial::sum_squares(v));
    if (vnorm == 0.0) continue;
    for (double& x : v) x /= vnorm;
    for (std::size_t j = k; j < r; ++j) {
      double proj = 0.0;
      for (std::size_t i = k; i < n; ++i) proj += v[i - k] * a(i, j);
      for (std::size_t i = k; i < n; ++i) a(i, j) -= 2.0 * proj * v[i - k];
    }
    reflectors[k] = std::move(v);
  }

  QrFactors out{DenseMatrix(n, r), DenseMatrix(r, r), false};
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = i; j < r; ++j) out.r_tri(i, j) = a(i, j);
  }
  for (std::size_t j = 0; j < r; ++j) out.q(j, j) = 1.0;
  for (std::size_t kk = r; kk-- > 0;) {
    const auto& v = reflectors[kk];
    if (v.empty()) continue;
    for (std::size_t j = 0; j < r; ++j) {
      double proj = 0.0;
      for (std::size_t i = kk; i < n; ++i) proj += v[i - kk] * out.q(i, j);
      for (std::size_t i = kk; i < n; ++i) out.q(i, j) -= 2.0 * proj * v[i - kk];
    }
  }

  for (std::size_t k = 0; k < r; ++k) {
    if (out.r_tri(k, k) < 0.0) {
      for (std::size_t j = k; j < r; ++j) out.r_tri(k, j) = -out.r_tri(k, j);
      for (std::size_t i = 0; i < n; ++i) out.q(i, k) = -out.q(i, k);
    }
    if (!(out.r_tri(k, k) >= 1e-12 * scale) || scale == 0.0) out.rank_deficient = true;
  }
  return out;
}

double frobenius_norm(const DenseMatrix& m) {
  require_finite(m, "frobenius_norm");
  return std::sqrt(kernels::sum_squares(m.data()));
}

double cosine_similarity(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "cosine_similarity");
  const double na = frobenius_norm(a);
  const double nb = frobenius_norm(b);
  if (na < 1e-300 || nb < 1e-300) {
    throw Error(ErrorCode::kZeroMatrix, "cosine_similarity: zero matrix");
  }
  const double c = kernels::dot(a.data(), b.data()) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

double orthonormality_defect(const DenseMatrix& q) {
  DenseMatrix g = kernels::matmul_tn(q, q);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
  return frobenius_norm(g);
}

DenseMatrix truncated_product(const SvdFactors& f, std::size_t r) {
  if (r == 0 || r > f.sigma.size()) {
    throw Error(ErrorCode::kRankOutOfRange, "truncated_product: rank out of range");
  }
  DenseMatrix us = take_cols(f.u, 0, r);
  for (std::size_t i = 0; i < us.rows(); ++i) {
    for (std::size_t k = 0; k < r; ++k) us(i, k) *= f.sigma[k];
  }
  return kernels::matmul(us, take_rows(f.vt, 0, r));
}

}  // namespace qrlora
