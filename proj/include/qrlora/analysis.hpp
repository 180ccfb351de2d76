// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "qrlora/matrix.hpp"
#include "qrlora/training.hpp"

namespace qrlora {

enum class MatrixKind { kQ, kR, kDeltaR, kA, kB };

inline constexpr std::array<MatrixKind, 5> kAllKinds = {
    MatrixKind::kQ, MatrixKind::kR, MatrixKind::kDeltaR, MatrixKind::kA, MatrixKind::kB};

std::string_view to_string(MatrixKind k);
MatrixKind parse_matrix_kind(std::string_view s);
/// Strategy whose runs carry matrices of this kind.
Strategy strategy_for(MatrixKind k);

/// A trained model plus the identity of the template it started from.
struct TrainedRun {
  Strategy strategy = Strategy::kDeltaROnly;
  std::uint64_t seed = 0;
  std::uint64_t template_fingerprint = 0;
  ToyModel model;
};

/// FNV-1a over layer shapes, names and base-weight bytes.
std::uint64_t template_fingerprint(const ToyModel& model);

struct LayerCosine {
  std::string layer_name;
  // Empty when either matrix is zero and the cosine is undefined.
  std::optional<double> cosine;
};

struct SimilarityReport {
  MatrixKind kind = MatrixKind::kDeltaR;
  std::vector<LayerCosine> layers;
  // Over the defined cells only; empty if none is defined.
  std::optional<double> max;
  std::optional<double> min;
  std::optional<double> mean;
  std::string pair_id;
};

/// Fills max/min/mean from the series.
void summarize(SimilarityReport& report);

/// Per-layer cosine of one kind of matrix between two runs. Throws
/// KindUnavailable, TemplateMismatch.
SimilarityReport compare_adapters(const TrainedRun& a, const TrainedRun& b, MatrixKind kind);

/// Same comparison over bare per-layer matrices (used for adapters loaded
/// from files). Throws TemplateMismatch on count or shape mismatch.
SimilarityReport compare_matrices(const std::vector<std::string>& names,
                                  const std::vector<DenseMatrix>& a,
                                  const std::vector<DenseMatrix>& b, MatrixKind kind);

struct StudyConfig {
  std::size_t n_pairs = 10;
  std::vector<Strategy> strategies = {Strategy::kDirectQr, Strategy::kDeltaROnly,
                                      Strategy::kVanillaLora};
  ModelConfig model = default_study_model();
  std::size_t rank = 8;
  std::size_t batch = 64;
  std::size_t steps = 500;
  double lr = 0.05;
  Optimizer optimizer = Optimizer::kSgd;
  std::size_t rank_gap = 8;
  double perturb_scale = 0.1;
  std::uint64_t seed = 0;
  // Both runs of a pair train on the same task (sanity mode).
  bool identical_pair_tasks = false;

  static ModelConfig default_study_model();
};

struct StudyRow {
  std::size_t sample_index = 0;
  std::vector<SimilarityReport> reports;  // one per available kind

  const SimilarityReport* find(MatrixKind kind) const;
};

/// Task seeds of the two runs in pair `index`.
std::array<std::uint64_t, 2> pair_task_seeds(const StudyConfig& cfg, std::size_t index);

/// Trains one run of the study: fresh template, adaptations for `strategy`,
/// task from `task_seed`.
TrainedRun train_study_run(const StudyConfig& cfg, Strategy strategy, std::uint64_t task_seed);

/// Observer of each trained pair. Called from worker threads, once per
/// (pair, strategy).
using PairSink = std::function<void(std::size_t pair, Strategy strategy, const TrainedRun& a,
                                    const TrainedRun& b)>;

/// Trains both runs of every pair per strategy and compares them. Pairs run
/// in parallel; rows come back ordered by pair index. Throws EmptyStudy.
std::vector<StudyRow> run_similarity_study(const StudyConfig& cfg, const PairSink& sink = {});

/// Writes the ten-column summary table (sample_index, Q_max, ..., B_min).
void write_study_table(std::ostream& out, const std::vector<StudyRow>& rows);
/// Writes layer_index, layer_name, cosine.
void write_layer_series(std::ostream& out, const SimilarityReport& report);

/// | ||Q delta_r||_F - ||delta_r||_F |. Throws ShapeMismatch.
double norm_preservation_residual(const DenseMatrix& q, const DenseMatrix& delta_r);

/// r x r empirical E[(q_i^T x)(q_j^T x)] over x ~ N(0, I_n). Samples are
/// drawn in fixed chunks, one RNG stream per chunk, so the result does not
/// depend on the thread count.
DenseMatrix projection_independence_probe(const DenseMatrix& q, std::size_t samples,
                                          std::uint64_t seed);

namespace serial {
DenseMatrix projection_independence_probe(const DenseMatrix& q, std::size_t samples,
                                          std::uint64_t seed);
}  // namespace serial

}  // namespace qrlora
