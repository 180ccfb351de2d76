// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrlora/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <string>

#include "qrlora/error.hpp"
#include "qrlora/kernels.hpp"
#include "qrlora/linalg.hpp"
#include "qrlora/rng.hpp"

namespace qrlora {

namespace {

constexpr std::size_t kProbeChunk = 4096;

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string format_cell(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string("undefined");
}

const DenseMatrix& kind_matrix(const Layer& layer, MatrixKind kind) {
  const DenseMatrix* m = nullptr;
  switch (kind) {
    case MatrixKind::kQ:
      if (auto* d = std::get_if<DirectQr>(&layer.adaptation)) m = &d->q;
      break;
    case MatrixKind::kR:
      if (auto* d = std::get_if<DirectQr>(&layer.adaptation)) m = &d->r_mat;
      break;
    case MatrixKind::kDeltaR:
      if (auto* a = std::get_if<Adapter>(&layer.adaptation)) m = &a->delta_r;
      break;
    case MatrixKind::kA:
      if (auto* p = std::get_if<LoraPair>(&layer.adaptation)) m = &p->a;
      break;
    case MatrixKind::kB:
      if (auto* p = std::get_if<LoraPair>(&layer.adaptation)) m = &p->b;
      break;
  }
  if (!m) {
    throw Error(ErrorCode::kKindUnavailable, "layer '" + layer.name + "' carries no " +
                                                 std::string(to_string(kind)) + " matrix");
  }
  return *m;
}

// Accumulates p p^T for p = Q^T x over the samples of one chunk.
void probe_chunk(const DenseMatrix& q, std::size_t count, std::uint64_t seed,
                 std::span<double> acc) {
  const std::size_t n = q.rows(), r = q.cols();
  Rng rng(seed);
  std::vector<double> x(n), p(r);
  for (std::size_t s = 0; s < count; ++s) {
    for (double& v : x) v = rng.normal();
    std::fill(p.begin(), p.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto qrow = q.row(i);
      for (std::size_t k = 0; k < r; ++k) p[k] += qrow[k] * x[i];
    }
    for (std::size_t a = 0; a < r; ++a) {
      for (std::size_t b = 0; b < r; ++b) acc[a * r + b] += p[a] * p[b];
    }
  }
}

void check_probe_args(const DenseMatrix& q, std::size_t samples) {
  if (q.empty()) throw Error(ErrorCode::kShapeError, "probe: empty basis");
  if (samples == 0) throw Error(ErrorCode::kUsage, "probe: samples must be positive");
  require_finite(q, "probe");
}

}  // namespace

std::string_view to_string(MatrixKind k) {
  switch (k) {
    case MatrixKind::kQ: return "Q";
    case MatrixKind::kR: return "R";
    case MatrixKind::kDeltaR: return "deltaR";
    case MatrixKind::kA: return "A";
    case MatrixKind::kB: return "B";
  }
  return "?";
}

MatrixKind parse_matrix_kind(std::string_view s) {
  if (s == "Q" || s == "q") return MatrixKind::kQ;
  if (s == "R" || s == "r") return MatrixKind::kR;
  if (s == "deltaR" || s == "dR" || s == "delta_r") return MatrixKind::kDeltaR;
  if (s == "A" || s == "a") return MatrixKind::kA;
  if (s == "B" || s == "b") return MatrixKind::kB;
  throw Error(ErrorCode::kUsage, "unknown matrix kind '" + std::string(s) + "'");
}

Strategy strategy_for(MatrixKind k) {
  switch (k) {
    case MatrixKind::kQ:
    case MatrixKind::kR: return Strategy::kDirectQr;
    case MatrixKind::kDeltaR: return Strategy::kDeltaROnly;
    case MatrixKind::kA:
    case MatrixKind::kB: return Strategy::kVanillaLora;
  }
  return Strategy::kDeltaROnly;
}

std::uint64_t template_fingerprint(const ToyModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t bits) {
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  for (const Layer& layer : model.layers) {
    for (char c : layer.name) mix(static_cast<unsigned char>(c));
    mix(layer.weight.rows());
    mix(layer.weight.cols());
    for (double v : layer.weight.data()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

void summarize(SimilarityReport& report) {
  report.max.reset();
  report.min.reset();
  report.mean.reset();
  double sum = 0.0;
  std::size_t count = 0;
  for (const LayerCosine& c : report.layers) {
    if (!c.cosine) continue;
    const double v = *c.cosine;
    report.max = report.max ? std::max(*report.max, v) : v;
    report.min = report.min ? std::min(*report.min, v) : v;
    sum += v;
    ++count;
  }
  if (count > 0) report.mean = sum / static_cast<double>(count);
}

SimilarityReport compare_matrices(const std::vector<std::string>& names,
                                  const std::vector<DenseMatrix>& a,
                                  const std::vector<DenseMatrix>& b, MatrixKind kind) {
  if (a.size() != b.size() || a.size() != names.size() || a.empty()) {
    throw Error(ErrorCode::kTemplateMismatch, "runs have different layer counts");
  }
  SimilarityReport report;
  report.kind = kind;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].same_shape(b[i])) {
      throw Error(ErrorCode::kTemplateMismatch, "layer '" + names[i] + "' shapes differ");
    }
    LayerCosine cell{names[i], std::nullopt};
    try {
      cell.cosine = cosine_similarity(a[i], b[i]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kZeroMatrix) throw;
    }
    report.layers.push_back(std::move(cell));
  }
  summarize(report);
  return report;
}

SimilarityReport compare_adapters(const TrainedRun& a, const TrainedRun& b, MatrixKind kind) {
  if (a.template_fingerprint != b.template_fingerprint ||
      a.model.layers.size() != b.model.layers.size()) {
    throw Error(ErrorCode::kTemplateMismatch, "runs were trained from different templates");
  }
  std::vector<std::string> names;
  std::vector<DenseMatrix> ma, mb;
  for (std::size_t i = 0; i < a.model.layers.size(); ++i) {
    names.push_back(a.model.layers[i].name);
    ma.push_back(kind_matrix(a.model.layers[i], kind));
    mb.push_back(kind_matrix(b.model.layers[i], kind));
  }
  SimilarityReport report = compare_matrices(names, ma, mb, kind);
  report.pair_id = std::string(to_string(a.strategy)) + ":" + std::to_string(a.seed) + "|" +
                   std::string(to_string(b.strategy)) + ":" + std::to_string(b.seed);
  return report;
}

ModelConfig StudyConfig::default_study_model() {
  ModelConfig m;
  m.dims = {16, 16, 16, 16};
  m.activation = Activation::kLinear;
  m.weight_scale = 0.5;
  m.seed = 2024;
  return m;
}

const SimilarityReport* StudyRow::find(MatrixKind kind) const {
  for (const SimilarityReport& r : reports) {
    if (r.kind == kind) return &r;
  }
  return nullptr;
}

std::array<std::uint64_t, 2> pair_task_seeds(const StudyConfig& cfg, std::size_t index) {
  const std::uint64_t a = derive_seed(cfg.seed, {0x7a5c, index, 0});
  const std::uint64_t b = cfg.identical_pair_tasks ? a : derive_seed(cfg.seed, {0x7a5c, index, 1});
  return {a, b};
}

TrainedRun train_study_run(const StudyConfig& cfg, Strategy strategy, std::uint64_t task_seed) {
  TrainedRun run;
  run.strategy = strategy;
  run.seed = task_seed;
  run.model = make_base_model(cfg.model);
  run.template_fingerprint = template_fingerprint(run.model);
  install_adaptations(run.model, strategy, cfg.rank, derive_seed(cfg.seed, {0x10a}));
  TaskParams tp;
  tp.seed = task_seed;
  tp.batch = cfg.batch;
  tp.rank_gap = cfg.rank_gap;
  tp.perturb_scale = cfg.perturb_scale;
  const TaskSpec task = make_task(run.model, tp);
  TrainRun tr;
  tr.strategy = strategy;
  tr.optimizer = cfg.optimizer;
  tr.lr = cfg.lr;
  tr.steps = cfg.steps;
  tr.seed = task_seed;
  train(run.model, task, tr);
  return run;
}

std::vector<StudyRow> run_similarity_study(const StudyConfig& cfg, const PairSink& sink) {
  if (cfg.n_pairs == 0) throw Error(ErrorCode::kEmptyStudy, "study needs at least one pair");
  std::vector<StudyRow> rows(cfg.n_pairs);
  std::vector<std::exception_ptr> failures(cfg.n_pairs);

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(cfg.n_pairs); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      const auto seeds = pair_task_seeds(cfg, i);
      StudyRow row;
      row.sample_index = i;
      for (Strategy s : cfg.strategies) {
        const TrainedRun a = train_study_run(cfg, s, seeds[0]);
        const TrainedRun b = train_study_run(cfg, s, seeds[1]);
        if (sink) sink(i, s, a, b);
        for (MatrixKind k : kAllKinds) {
          if (strategy_for(k) == s) row.reports.push_back(compare_adapters(a, b, k));
        }
      }
      rows[i] = std::move(row);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }

  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i]) continue;
    try {
      std::rethrow_exception(failures[i]);
    } catch (const Error& e) {
      throw Error(e.code(), "pair " + std::to_string(i) + ": " + e.what());
    }
  }
  return rows;
}

void write_study_table(std::ostream& out, const std::vector<StudyRow>& rows) {
  out << "sample_index,Q_max,Q_min,R_max,R_min,dR_max,dR_min,A_max,A_min,B_max,B_min\n";
  for (const StudyRow& row : rows) {
    out << row.sample_index;
    for (MatrixKind k : kAllKinds) {
      const SimilarityReport* r = row.find(k);
      out << ',' << (r ? format_cell(r->max) : "undefined") << ','
          << (r ? format_cell(r->min) : "undefined");
    }
    out << '\n';
  }
}

void write_layer_series(std::ostream& out, const SimilarityReport& report) {
  out << "layer_index,layer_name,cosine\n";
  for (std::size_t i = 0; i < report.layers.size(); ++i) {
    out << i << ',' << report.layers[i].layer_name << ',' << format_cell(report.layers[i].cosine)
        << '\n';
  }
}

double norm_preservation_residual(const DenseMatrix& q, const DenseMatrix& delta_r) {
  const DenseMatrix qd = kernels::matmul(q, delta_r);
  return std::abs(frobenius_norm(qd) - frobenius_norm(delta_r));
}

DenseMatrix projection_independence_probe(const DenseMatrix& q, std::size_t samples,
                                          std::uint64_t seed) {
  check_probe_args(q, samples);
  const std::size_t r = q.cols();
  const std::size_t chunks = (samples + kProbeChunk - 1) / kProbeChunk;
  std::vector<double> partial(chunks * r * r, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t cc = 0; cc < static_cast<std::ptrdiff_t>(chunks); ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    const std::size_t count = std::min(kProbeChunk, samples - c * kProbeChunk);
    probe_chunk(q, count, derive_seed(seed, {c}), std::span(partial).subspan(c * r * r, r * r));
  }
  DenseMatrix m(r, r);
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t k = 0; k < r * r; ++k) m.data()[k] += partial[c * r * r + k];
  }
  m *= 1.0 / static_cast<double>(samples);
  return m;
}

namespace serial {

DenseMatrix projection_independence_probe(const DenseMatrix& q, std::size_t samples,
                                          std::uint64_t seed) {
  check_probe_args(q, samples);
  const std::size_t r = q.cols();
  DenseMatrix m(r, r);
  std::vector<double> acc(r * r);
  for (std::size_t c = 0, done = 0; done < samples; ++c) {
    const std::size_t count = std::min(kProbeChunk, samples - done);
    std::fill(acc.begin(), acc.end(), 0.0);
    probe_chunk(q, count, derive_seed(seed, {c}), acc);
    for (std::size_t k = 0; k < r * r; ++k) m.data()[k] += acc[k];
    done += count;
  }
  m *= 1.0 / static_cast<double>(samples);
  return m;
}

}  // namespace serial

}  // namespace qrlora
