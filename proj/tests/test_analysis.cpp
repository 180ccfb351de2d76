// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "qrlora/analysis.hpp"
#include "support.hpp"

using namespace qrlora;

namespace {

StudyConfig quick_config() {
  StudyConfig cfg;
  cfg.steps = 60;
  cfg.n_pairs = 2;
  return cfg;
}

}  // namespace

TEST_CASE("a run compared with itself is 1 everywhere") {
  const StudyConfig cfg = quick_config();
  for (Strategy s : cfg.strategies) {
    const TrainedRun run = train_study_run(cfg, s, 5);
    for (MatrixKind k : kAllKinds) {
      if (strategy_for(k) != s) continue;
      const SimilarityReport rep = compare_adapters(run, run, k);
      REQUIRE(rep.layers.size() == 3);
      for (const LayerCosine& c : rep.layers) CHECK(*c.cosine == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(*rep.max == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(*rep.min == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(*rep.mean == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("negated delta R gives -1") {
  const TrainedRun a = train_study_run(quick_config(), Strategy::kDeltaROnly, 5);
  TrainedRun b = a;
  for (Layer& l : b.model.layers) {
    Adapter& ad = std::get<Adapter>(l.adaptation);
    ad.delta_r = -1.0 * ad.delta_r;
  }
  const SimilarityReport rep = compare_adapters(a, b, MatrixKind::kDeltaR);
  for (const LayerCosine& c : rep.layers) CHECK(*c.cosine == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("independent runs match the flatten-and-dot oracle") {
  const StudyConfig cfg = quick_config();
  const TrainedRun a = train_study_run(cfg, Strategy::kDeltaROnly, 11);
  const TrainedRun b = train_study_run(cfg, Strategy::kDeltaROnly, 12);
  const SimilarityReport ab = compare_adapters(a, b, MatrixKind::kDeltaR);
  const SimilarityReport ba = compare_adapters(b, a, MatrixKind::kDeltaR);
  double mx = -2, mn = 2, sum = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double expect = oracle::cosine(std::get<Adapter>(a.model.layers[i].adaptation).delta_r,
                                         std::get<Adapter>(b.model.layers[i].adaptation).delta_r);
    CHECK(std::abs(*ab.layers[i].cosine - expect) <= 1e-12);
    CHECK(*ab.layers[i].cosine == *ba.layers[i].cosine);
    CHECK(ab.layers[i].layer_name == a.model.layers[i].name);
    mx = std::max(mx, expect);
    mn = std::min(mn, expect);
    sum += expect;
  }
  CHECK(std::abs(*ab.max - mx) <= 1e-12);
  CHECK(std::abs(*ab.min - mn) <= 1e-12);
  CHECK(std::abs(*ab.mean - sum / 3) <= 1e-12);
  CHECK(*ab.max >= *ab.mean);
  CHECK(*ab.mean >= *ab.min);
}

TEST_CASE("untrained delta R is reported as undefined") {
  StudyConfig cfg = quick_config();
  cfg.steps = 0;
  const TrainedRun a = train_study_run(cfg, Strategy::kDeltaROnly, 1);
  const SimilarityReport rep = compare_adapters(a, a, MatrixKind::kDeltaR);
  for (const LayerCosine& c : rep.layers) CHECK_FALSE(c.cosine.has_value());
  CHECK_FALSE(rep.max.has_value());
  std::ostringstream os;
  write_layer_series(os, rep);
  CHECK(os.str() == "layer_index,layer_name,cosine\n0,layer_0,undefined\n1,layer_1,undefined\n"
                    "2,layer_2,undefined\n");
}

TEST_CASE("compare errors") {
  const StudyConfig cfg = quick_config();
  const TrainedRun a = train_study_run(cfg, Strategy::kDeltaROnly, 1);
  const TrainedRun l = train_study_run(cfg, Strategy::kVanillaLora, 1);
  CHECK(code_of([&] { compare_adapters(a, l, MatrixKind::kDeltaR); }) == ErrorCode::kKindUnavailable);
  CHECK(code_of([&] { compare_adapters(a, a, MatrixKind::kQ); }) == ErrorCode::kKindUnavailable);
  StudyConfig other = cfg;
  other.model.seed = 99;
  const TrainedRun c = train_study_run(other, Strategy::kDeltaROnly, 1);
  CHECK(code_of([&] { compare_adapters(a, c, MatrixKind::kDeltaR); }) == ErrorCode::kTemplateMismatch);
  CHECK(parse_matrix_kind("deltaR") == MatrixKind::kDeltaR);
  CHECK(code_of([] { parse_matrix_kind("W"); }) == ErrorCode::kUsage);
}

TEST_CASE("study boundaries") {
  StudyConfig cfg = quick_config();
  cfg.n_pairs = 0;
  CHECK(code_of([&] { run_similarity_study(cfg); }) == ErrorCode::kEmptyStudy);

  cfg.n_pairs = 1;
  cfg.identical_pair_tasks = true;
  const std::vector<StudyRow> rows = run_similarity_study(cfg);
  REQUIRE(rows.size() == 1);
  for (MatrixKind k : {MatrixKind::kQ, MatrixKind::kDeltaR}) {
    CHECK(*rows[0].find(k)->max == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(*rows[0].find(k)->min == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("study table is deterministic across thread counts and matches per-pair compares") {
  const StudyConfig cfg = quick_config();
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  std::ostringstream one;
  write_study_table(one, run_similarity_study(cfg));
  omp_set_num_threads(3);
  std::ostringstream three;
  const std::vector<StudyRow> rows = run_similarity_study(cfg);
  write_study_table(three, rows);
  omp_set_num_threads(saved);
  CHECK(one.str() == three.str());
  CHECK(one.str().rfind("sample_index,Q_max,Q_min,R_max,R_min,dR_max,dR_min,A_max,A_min,B_max,B_min\n",
                        0) == 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].sample_index == i);
    const auto seeds = pair_task_seeds(cfg, i);
    const TrainedRun a = train_study_run(cfg, Strategy::kDeltaROnly, seeds[0]);
    const TrainedRun b = train_study_run(cfg, Strategy::kDeltaROnly, seeds[1]);
    const SimilarityReport direct = compare_adapters(a, b, MatrixKind::kDeltaR);
    CHECK(*rows[i].find(MatrixKind::kDeltaR)->max == *direct.max);
    CHECK(*rows[i].find(MatrixKind::kDeltaR)->min == *direct.min);
  }
}

TEST_CASE("norm preservation residual") {
  const DenseMatrix q = reduced_qr(oracle::random_matrix(10, 4, 1)).q;
  const DenseMatrix dr = oracle::random_matrix(4, 7, 2);
  CHECK(norm_preservation_residual(q, dr) <= 1e-10 * oracle::fro(dr));
  CHECK(std::abs(norm_preservation_residual(2.0 * q, dr) - oracle::fro(dr)) <= 1e-10 * oracle::fro(dr));

  const TrainedRun run = train_study_run(StudyConfig{}, Strategy::kDirectQr, 3);
  const DenseMatrix& tq = std::get<DirectQr>(run.model.layers[0].adaptation).q;
  const DenseMatrix dr8 = oracle::random_matrix(tq.cols(), 16, 5);
  const double res = norm_preservation_residual(tq, dr8);
  const double expect = std::abs(oracle::fro(oracle::matmul(tq, dr8)) - oracle::fro(dr8));
  CHECK(res > 0.0);
  CHECK(std::abs(res - expect) <= 1e-12 * oracle::fro(dr8));
}

TEST_CASE("projection independence probe") {
  const DenseMatrix q = reduced_qr(oracle::random_matrix(32, 6, 4)).q;
  const DenseMatrix m = projection_independence_probe(q, 100000, 7);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(m(i, i) >= 0.96);
    CHECK(m(i, i) <= 1.04);
    for (std::size_t j = 0; j < 6; ++j) {
      if (i != j) CHECK(std::abs(m(i, j)) <= 0.0127);
    }
  }
  CHECK(m == serial::projection_independence_probe(q, 100000, 7));

  DenseMatrix dup = q;
  for (std::size_t i = 0; i < dup.rows(); ++i) dup(i, 1) = dup(i, 0);
  const DenseMatrix md = projection_independence_probe(dup, 20000, 8);
  CHECK(md(0, 1) == doctest::Approx(md(0, 0)).epsilon(1e-12));
  CHECK(std::abs(md(0, 1) - 1.0) < 0.05);

  const int saved = omp_get_max_threads();
  omp_set_num_threads(2);
  const DenseMatrix two = projection_independence_probe(q, 30000, 9);
  omp_set_num_threads(1);
  const DenseMatrix single = projection_independence_probe(q, 30000, 9);
  omp_set_num_threads(saved);
  CHECK(two == single);
  CHECK(code_of([&] { projection_independence_probe(q, 0, 1); }) == ErrorCode::kUsage);
}
