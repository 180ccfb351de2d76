// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "qrlora/adapter.hpp"
#include "qrlora/analysis.hpp"
#include "support.hpp"

using namespace qrlora;

namespace {

std::shared_ptr<const QrBasis> seeded_basis(std::size_t m = 8, std::size_t n = 6,
                                            std::size_t r = 4, std::uint64_t seed = 17) {
  return decompose(oracle::random_matrix(m, n, seed), r);
}

Adapter with_delta(std::shared_ptr<const QrBasis> b, std::uint64_t seed, const char* role = "content") {
  Adapter a = init_adapter(b, "layer", role);
  a.delta_r = oracle::random_matrix(a.delta_r.rows(), a.delta_r.cols(), seed);
  return a;
}

}  // namespace

TEST_CASE("init_adapter") {
  const auto b = seeded_basis();
  const Adapter a = init_adapter(b, "blk.0", "style");
  CHECK(a.delta_r == DenseMatrix(4, 8));
  CHECK(a.rank() == 4);
  CHECK(a.layer_name == "blk.0");
  const DenseMatrix w = reconstruct_origin(*b);
  CHECK(oracle::fro_diff(effective_weight(a), w) <= 1e-10 * oracle::fro(w));
  CHECK(code_of([&] { init_adapter(b, "x", "painting"); }) == ErrorCode::kUsage);
  CHECK(code_of([&] { init_adapter(nullptr, "x", "content"); }) == ErrorCode::kShapeError);
}

TEST_CASE("effective_weight") {
  const DenseMatrix w = oracle::random_matrix(8, 6, 17);
  const auto b = decompose(w, 4);
  Adapter a = init_adapter(b, "l", "generic");
  SUBCASE("delta R = R doubles the core") {
    a.delta_r = b->r_mat;
    const DenseMatrix core = extract_core(w, 4).w_core;
    CHECK(oracle::fro_diff(effective_weight(a), w + core) <= 1e-10 * oracle::fro(w + core));
  }
  SUBCASE("seeded delta R against the three-matrix product") {
    a.delta_r = oracle::random_matrix(4, 8, 5);
    const DenseMatrix expect =
        b->w_comp + oracle::transpose(oracle::matmul(b->q, b->r_mat + a.delta_r));
    CHECK(oracle::max_abs_diff(effective_weight(a), expect) <= 1e-12);
    CHECK(oracle::max_abs_diff(delta_w(a), oracle::transpose(oracle::matmul(b->q, a.delta_r))) <=
          1e-12);
  }
  SUBCASE("zero delta gives a zero delta_w") { CHECK(delta_w(a) == DenseMatrix(8, 6)); }
}

TEST_CASE("norm preservation over random delta R") {
  const auto b = seeded_basis(24, 20, 7, 3);
  REQUIRE(orthonormality_defect(b->q) <= 1e-12 * 7);
  Adapter a = init_adapter(b, "l", "generic");
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    a.delta_r = oracle::random_matrix(7, 24, seed, 0.01 + seed * 0.01);
    const double nr = oracle::fro(a.delta_r);
    CHECK(std::abs(oracle::fro(delta_w(a)) - nr) <= 1e-10 * nr);
    CHECK(norm_preservation_residual(b->q, a.delta_r) <= 1e-10 * nr);
  }
}

TEST_CASE("grad_delta_r") {
  const auto b = seeded_basis();
  const Adapter a = init_adapter(b, "l", "generic");
  CHECK(grad_delta_r(a, DenseMatrix(8, 6)) == DenseMatrix(4, 8));
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const DenseMatrix m = oracle::random_matrix(4, 8, seed);
    const DenseMatrix g = oracle::transpose(oracle::matmul(b->q, m));
    CHECK(oracle::max_abs_diff(grad_delta_r(a, g), m) <= 1e-12);
  }
  CHECK(code_of([&] { grad_delta_r(a, DenseMatrix(6, 8)); }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("sgd_step") {
  const auto b = seeded_basis();
  Adapter a = init_adapter(b, "l", "generic");
  const DenseMatrix g = oracle::random_matrix(4, 8, 2);
  sgd_step(a, DenseMatrix(4, 8), 0.3);
  CHECK(a.delta_r == DenseMatrix(4, 8));
  sgd_step(a, g, 1.0);
  CHECK(a.delta_r == -1.0 * g);
  Adapter c = init_adapter(b, "l", "generic");
  sgd_step(c, g, 0.5);
  sgd_step(c, g, 0.5);
  CHECK(oracle::max_abs_diff(c.delta_r, -1.0 * g) == 0.0);
  const std::uint64_t fp = b->fingerprint;
  CHECK(basis_fingerprint(b->q, b->r_mat, b->w_comp, b->rank) == fp);
}

TEST_CASE("sgd_step leaves the adapter untouched on non-finite results") {
  const auto b = seeded_basis();
  Adapter a = with_delta(b, 3);
  const DenseMatrix before = a.delta_r;
  DenseMatrix g(4, 8);
  g(1, 1) = std::numeric_limits<double>::infinity();
  CHECK(code_of([&] { sgd_step(a, g, 0.1); }) == ErrorCode::kNonFinite);
  CHECK(a.delta_r == before);
  CHECK(code_of([&] { sgd_step(a, DenseMatrix(4, 8, 1e300), 1e300); }) == ErrorCode::kNonFinite);
  CHECK(a.delta_r == before);
}

TEST_CASE("adam_update first step moves by about lr against the gradient") {
  DenseMatrix p(2, 2);
  AdamState st;
  const DenseMatrix g{{1.0, -2.0}, {0.5, 0.0}};
  adam_update(p, st, g, 0.01);
  CHECK(p(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p(0, 1) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(p(1, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p(1, 1) == 0.0);
  CHECK(st.step == 1);
}

TEST_CASE("merge examples") {
  const auto b = seeded_basis();
  const Adapter c = with_delta(b, 1, "content");
  const Adapter s = with_delta(b, 2, "style");
  SUBCASE("lambda (1, 0)") {
    const Adapter m = merge({{{&c, 1.0}, {&s, 0.0}}});
    CHECK(m.delta_r == c.delta_r);
    CHECK(m.basis == b);
    CHECK(m.role == "generic");
  }
  SUBCASE("cancellation") {
    Adapter neg = c;
    neg.delta_r = -1.0 * c.delta_r;
    const Adapter m = merge({{{&c, 1.0}, {&neg, 1.0}}});
    CHECK(m.delta_r == DenseMatrix(4, 8));
    CHECK(oracle::fro_diff(effective_weight(m), reconstruct_origin(*b)) == 0.0);
  }
  SUBCASE("lambda (0.7, 0.6) entrywise") {
    MergeSpec spec{{{&c, 0.7}, {&s, 0.6}}, "content", "merged"};
    const Adapter m = merge(spec);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(std::abs(m.delta_r(i, j) - (0.7 * c.delta_r(i, j) + 0.6 * s.delta_r(i, j))) <= 1e-15);
      }
    }
    CHECK(m.role == "content");
    CHECK(m.layer_name == "merged");
  }
}

TEST_CASE("merge errors") {
  const auto b1 = seeded_basis(8, 6, 4, 1);
  const auto b2 = seeded_basis(8, 6, 4, 2);
  const Adapter a = with_delta(b1, 1), c = with_delta(b2, 2);
  CHECK(code_of([] { merge(MergeSpec{}); }) == ErrorCode::kEmptySpec);
  CHECK(code_of([&] { merge({{{&a, 1.0}, {&c, 1.0}}}); }) == ErrorCode::kBasisMismatch);
  CHECK(code_of([&] { merge({{{&a, 1.0}, {&c, 1.0}}}, {true, 1e-8}); }) ==
        ErrorCode::kBasisMismatch);
  CHECK(code_of([&] { merge({{{&a, std::nan("")}}}); }) == ErrorCode::kNonFinite);
}

TEST_CASE("forced merge accepts a copy with identical Q but distinct fingerprint") {
  const auto b = seeded_basis();
  auto other = std::make_shared<QrBasis>(*b);
  other->w_comp(0, 0) += 1e-3;
  other->fingerprint = basis_fingerprint(other->q, other->r_mat, other->w_comp, other->rank);
  const Adapter a = with_delta(b, 1), c = with_delta(other, 2);
  CHECK(code_of([&] { merge({{{&a, 1.0}, {&c, 1.0}}}); }) == ErrorCode::kBasisMismatch);
  const Adapter m = merge({{{&a, 1.0}, {&c, 1.0}}}, {true, 1e-8});
  CHECK(m.basis == b);
}

TEST_CASE("merge linearity over a coefficient grid") {
  const auto b = seeded_basis(12, 10, 5, 8);
  const Adapter c = with_delta(b, 3), s = with_delta(b, 4);
  const DenseMatrix w = reconstruct_origin(*b);
  const DenseMatrix dc = delta_w(c), ds = delta_w(s);
  for (int i = 0; i <= 5; ++i) {
    for (int j = 0; j <= 5; ++j) {
      const double lc = 0.5 + 0.1 * i, ls = 0.5 + 0.1 * j;
      const Adapter m = merge({{{&c, lc}, {&s, ls}}});
      const DenseMatrix lhs = effective_weight(m) - w;
      const DenseMatrix rhs = lc * dc + ls * ds;
      CHECK(oracle::fro_diff(lhs, rhs) <= 1e-10 * oracle::fro(rhs));
    }
  }
}
