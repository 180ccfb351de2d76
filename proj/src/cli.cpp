// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrlora/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "qrlora/adapter.hpp"
#include "qrlora/analysis.hpp"
#include "qrlora/artifacts.hpp"
#include "qrlora/container.hpp"
#include "qrlora/decomposition.hpp"
#include "qrlora/error.hpp"
#include "qrlora/linalg.hpp"
#include "qrlora/rng.hpp"
#include "qrlora/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace qrlora {

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string log_level = "warn";
  int threads = 0;
};

struct GenWeightsArgs {
  std::string shape;
  std::optional<std::uint64_t> seed;
  double scale = 0.5;
  std::string layer_name = "layer_0";
  std::string dtype = "f64";
  std::string out;
};

struct DecomposeArgs {
  std::string weights;
  std::size_t rank = 64;
  std::string layer_name;
  std::string out;
};

struct InitArgs {
  std::string basis;
  std::string role = "generic";
  std::string layer_name;
  std::string out;
};

struct TrainArgs {
  std::string adapter;
  std::string strategy = "delta-r-only";
  std::uint64_t task_seed = 0;
  std::size_t steps = 500;
  double lr = 0.05;
  std::string trace;
  std::string out;
  std::size_t batch = 64;
  std::optional<std::size_t> rank_gap;
  double perturb_scale = 0.1;
  std::string optimizer = "sgd";
  std::string activation = "linear";
  double lora_sigma = 0.0;
};

struct MergeArgs {
  std::string inputs;
  std::string lambdas;
  std::string out;
  std::string role = "generic";
  bool force = false;
};

struct SimilarityArgs {
  std::string a;
  std::string b;
  std::string kind = "deltaR";
  std::string out;
};

struct StudyArgs {
  std::size_t pairs = 10;
  std::string out;
  std::string series_dir;
  std::string save_runs;
  std::string from_files;
  std::size_t steps = 500;
  double lr = 0.05;
  std::size_t rank = 8;
  std::size_t rank_gap = 8;
  std::size_t batch = 64;
  double perturb_scale = 0.1;
  std::string optimizer = "sgd";
  bool identical_tasks = false;
};

struct VerifyArgs {
  std::string path;
};

struct SweepArgs {
  std::string adapter_c;
  std::string adapter_s;
  std::string grid = "0.5:1.0:0.1";
  std::string out;
  bool force = false;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::kUsage, "not a finite number: '" + s + "'");
  }
  return v;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void configure_runtime(const Globals& g) {
  auto logger = spdlog::get("qrlora");
  if (!logger) {
    logger = spdlog::stderr_logger_mt("qrlora");
    spdlog::set_default_logger(logger);
  }
  const auto level = spdlog::level::from_str(g.log_level);
  if (level == spdlog::level::off && g.log_level != "off") {
    throw Error(ErrorCode::kUsage, "unknown log level '" + g.log_level + "'");
  }
  spdlog::set_level(level);
  if (g.threads < 0) throw Error(ErrorCode::kUsage, "--threads must be non-negative");
  if (g.threads > 0) omp_set_num_threads(g.threads);
}

Optimizer parse_optimizer(const std::string& s) {
  if (s == "sgd") return Optimizer::kSgd;
  if (s == "adam") return Optimizer::kAdam;
  throw Error(ErrorCode::kUsage, "unknown optimizer '" + s + "'");
}

const char* tensor_role_for(MatrixKind k) {
  switch (k) {
    case MatrixKind::kQ: return "q";
    case MatrixKind::kR: return "r";
    case MatrixKind::kDeltaR: return "delta_r";
    case MatrixKind::kA: return "lora_a";
    case MatrixKind::kB: return "lora_b";
  }
  return "";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw Error(ErrorCode::kIo, "short write to '" + path.string() + "'");
}

// Containers of one run: a single file, or every *.qrla in a directory,
// keyed by layer name.
std::map<std::string, Container> load_run(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.is_regular_file() && e.path().extension() == ".qrla") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  if (files.empty()) throw Error(ErrorCode::kIo, "no .qrla files in '" + path.string() + "'");
  std::map<std::string, Container> run;
  for (const fs::path& f : files) {
    Container c = read_container(f);
    run[container_layer_name(c)] = std::move(c);
  }
  return run;
}

SimilarityReport compare_run_files(const std::map<std::string, Container>& a,
                                   const std::map<std::string, Container>& b, MatrixKind kind) {
  std::vector<std::string> names;
  std::vector<DenseMatrix> ma, mb;
  for (const auto& [name, ca] : a) {
    auto it = b.find(name);
    if (it == b.end()) {
      throw Error(ErrorCode::kTemplateMismatch, "layer '" + name + "' missing from second run");
    }
    names.push_back(name);
    ma.push_back(ca.require(tensor_role_for(kind)).value);
    mb.push_back(it->second.require(tensor_role_for(kind)).value);
  }
  if (a.size() != b.size()) throw Error(ErrorCode::kTemplateMismatch, "runs differ in layers");
  return compare_matrices(names, ma, mb, kind);
}

json report_json(const SimilarityReport& r) {
  json layers = json::array();
  for (const LayerCosine& c : r.layers) {
    layers.push_back({{"layer_name", c.layer_name}, {"cosine", opt_json(c.cosine)}});
  }
  return {{"kind", to_string(r.kind)},
          {"max", opt_json(r.max)},
          {"min", opt_json(r.min)},
          {"mean", opt_json(r.mean)},
          {"layers", layers}};
}

int run_gen_weights(const Globals& g, const GenWeightsArgs& a, std::ostream& out) {
  const auto [m, n] = parse_shape(a.shape);
  if (a.dtype != "f64" && a.dtype != "f32") throw Error(ErrorCode::kUsage, "dtype must be f64 or f32");
  ModelConfig cfg;
  cfg.dims = {m, n};
  cfg.weight_scale = a.scale;
  cfg.seed = a.seed.value_or(g.seed);
  const DenseMatrix w = make_base_model(cfg).layers.front().weight;
  write_container(a.out, weight_container(w, a.layer_name, a.dtype == "f32" ? Dtype::kF32 : Dtype::kF64));
  out << json{{"out", a.out}, {"shape", {m, n}}, {"seed", cfg.seed}}.dump() << '\n';
  return 0;
}

int run_decompose(const DecomposeArgs& a, std::ostream& out) {
  const Container in = read_container(a.weights);
  const DenseMatrix w = load_weight(in);
  const std::string name = a.layer_name.empty() ? container_layer_name(in) : a.layer_name;
  const QrBasis basis = build_orthogonal_basis(extract_core(w, a.rank));
  if (basis.rank_deficient) spdlog::warn("basis for '{}' is rank deficient", name);
  write_container(a.out, basis_container(basis, name, frobenius_norm(w)));
  out << json{{"out", a.out},
              {"rank", basis.rank},
              {"fingerprint", fingerprint_hex(basis.fingerprint)},
              {"rank_deficient", basis.rank_deficient}}
             .dump()
      << '\n';
  return 0;
}

int run_init(const InitArgs& a, std::ostream& out) {
  const Container in = read_container(a.basis);
  const std::string name = a.layer_name.empty() ? container_layer_name(in) : a.layer_name;
  const Adapter adapter = init_adapter(load_basis(in), name, a.role);
  write_container(a.out, adapter_container(adapter));
  out << json{{"out", a.out},
              {"role", adapter.role},
              {"trainable_parameters", adapter.trainable_parameters()},
              {"fingerprint", fingerprint_hex(adapter.basis->fingerprint)}}
             .dump()
      << '\n';
  return 0;
}

int run_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  const Strategy strategy = parse_strategy(a.strategy);
  const Optimizer optimizer = parse_optimizer(a.optimizer);
  const Activation activation = parse_activation(a.activation);
  if (!(a.lr >= 0.0)) throw Error(ErrorCode::kUsage, "--lr must be non-negative");

  const Adapter adapter = load_adapter(read_container(a.adapter));
  const QrBasis& basis = *adapter.basis;

  ToyModel model;
  Layer layer;
  layer.name = adapter.layer_name.empty() ? "layer_0" : adapter.layer_name;
  layer.weight = reconstruct_origin(basis);
  layer.activation = activation;
  model.layers.push_back(layer);

  TaskParams tp;
  tp.seed = a.task_seed;
  tp.batch = a.batch;
  tp.rank_gap = a.rank_gap.value_or(basis.rank);
  tp.perturb_scale = a.perturb_scale;
  const TaskSpec task = make_task(model, tp);

  Layer& l = model.layers.front();
  switch (strategy) {
    case Strategy::kDeltaROnly:
      l.adaptation = adapter;
      break;
    case Strategy::kDirectQr:
      l.adaptation = DirectQr{basis.q, basis.r_mat + adapter.delta_r, basis.w_comp};
      break;
    case Strategy::kVanillaLora: {
      const double sigma = a.lora_sigma > 0.0 ? a.lora_sigma
                                              : 1.0 / std::sqrt(static_cast<double>(basis.rank));
      l.adaptation = vanilla_lora_init(l.weight, basis.rank, sigma, derive_seed(g.seed, {0x10a, 0}));
      break;
    }
  }

  TrainRun run;
  run.strategy = strategy;
  run.optimizer = optimizer;
  run.lr = a.lr;
  run.steps = a.steps;
  run.seed = a.task_seed;
  std::optional<Error> failure;
  try {
    train(model, task, run);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNonFinite) throw;
    failure = e;
  }

  if (!a.trace.empty()) {
    std::ostringstream csv;
    csv << "step,loss\n";
    for (std::size_t i = 0; i < run.loss_trace.size(); ++i) {
      csv << i << ',' << num(run.loss_trace[i]) << '\n';
    }
    write_text(a.trace, csv.str());
  }
  if (failure) throw *failure;

  std::string out_path = a.out;
  if (out_path.empty()) {
    fs::path p(a.adapter);
    out_path = (p.parent_path() / (p.stem().string() + "." + a.strategy + ".qrla")).string();
  }
  write_container(out_path, layer_container(model.layers.front()));
  out << json{{"out", out_path},
              {"strategy", a.strategy},
              {"steps", run.steps},
              {"initial_loss", run.loss_trace.front()},
              {"final_loss", run.loss_trace.back()},
              {"trainable_parameters", trainable_parameter_count(model.layers.front())}}
             .dump()
      << '\n';
  return 0;
}

int run_merge(const MergeArgs& a, std::ostream& out) {
  const std::vector<std::string> paths = split(a.inputs, ',');
  if (paths.empty()) throw Error(ErrorCode::kEmptySpec, "merge: no inputs");
  std::vector<double> lambdas;
  if (a.lambdas.empty()) {
    lambdas.assign(paths.size(), 1.0);
  } else {
    for (const std::string& s : split(a.lambdas, ',')) lambdas.push_back(parse_double(s));
  }
  if (lambdas.size() != paths.size()) {
    throw Error(ErrorCode::kUsage, "merge: " + std::to_string(paths.size()) + " inputs but " +
                                       std::to_string(lambdas.size()) + " lambdas");
  }
  std::vector<Adapter> adapters;
  for (const std::string& p : paths) adapters.push_back(load_adapter(read_container(p)));
  MergeSpec spec;
  spec.role = a.role;
  for (std::size_t i = 0; i < adapters.size(); ++i) spec.inputs.push_back({&adapters[i], lambdas[i]});
  if (!is_known_role(spec.role)) throw Error(ErrorCode::kUsage, "unknown role '" + spec.role + "'");
  const Adapter merged = merge(spec, MergeOptions{a.force});
  write_container(a.out, adapter_container(merged));
  out << json{{"out", a.out},
              {"inputs", paths.size()},
              {"delta_r_fro", frobenius_norm(merged.delta_r)},
              {"fingerprint", fingerprint_hex(merged.basis->fingerprint)}}
             .dump()
      << '\n';
  return 0;
}

int run_similarity(const SimilarityArgs& a, std::ostream& out) {
  const MatrixKind kind = parse_matrix_kind(a.kind);
  const auto run_a = load_run(a.a);
  const auto run_b = load_run(a.b);
  SimilarityReport report = compare_run_files(run_a, run_b, kind);
  report.pair_id = a.a + "|" + a.b;
  std::ostringstream csv;
  write_layer_series(csv, report);
  if (!a.out.empty()) write_text(a.out, csv.str());
  out << report_json(report).dump() << '\n';
  return 0;
}

std::vector<StudyRow> study_from_files(const StudyArgs& a) {
  std::vector<StudyRow> rows;
  for (std::size_t i = 0; i < a.pairs; ++i) {
    StudyRow row;
    row.sample_index = i;
    const fs::path pair_dir = fs::path(a.from_files) / ("pair_" + std::to_string(i));
    for (Strategy s : {Strategy::kDirectQr, Strategy::kDeltaROnly, Strategy::kVanillaLora}) {
      const std::string tag(to_string(s));
      const fs::path da = pair_dir / (tag + "_a"), db = pair_dir / (tag + "_b");
      if (!fs::is_directory(da) || !fs::is_directory(db)) continue;
      const auto ra = load_run(da), rb = load_run(db);
      for (MatrixKind k : kAllKinds) {
        if (strategy_for(k) != s) continue;
        row.reports.push_back(compare_run_files(ra, rb, k));
      }
    }
    if (row.reports.empty()) {
      throw Error(ErrorCode::kIo, "no runs found under '" + pair_dir.string() + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_run(const fs::path& dir, const TrainedRun& run) {
  fs::create_directories(dir);
  for (const Layer& layer : run.model.layers) {
    write_container(dir / (layer.name + ".qrla"), layer_container(layer));
  }
}

int run_study(const Globals& g, const StudyArgs& a, std::ostream& out) {
  if (a.pairs == 0) throw Error(ErrorCode::kEmptyStudy, "study needs at least one pair");
  std::vector<StudyRow> rows;
  if (!a.from_files.empty()) {
    rows = study_from_files(a);
  } else {
    StudyConfig cfg;
    cfg.n_pairs = a.pairs;
    cfg.steps = a.steps;
    cfg.lr = a.lr;
    cfg.rank = a.rank;
    cfg.rank_gap = a.rank_gap;
    cfg.batch = a.batch;
    cfg.perturb_scale = a.perturb_scale;
    cfg.optimizer = parse_optimizer(a.optimizer);
    cfg.identical_pair_tasks = a.identical_tasks;
    cfg.seed = g.seed;
    PairSink sink;
    if (!a.save_runs.empty()) {
      sink = [&](std::size_t pair, Strategy s, const TrainedRun& ra, const TrainedRun& rb) {
        const fs::path base = fs::path(a.save_runs) / ("pair_" + std::to_string(pair));
        const std::string tag(to_string(s));
        save_run(base / (tag + "_a"), ra);
        save_run(base / (tag + "_b"), rb);
      };
    }
    rows = run_similarity_study(cfg, sink);
  }

  std::ostringstream table;
  write_study_table(table, rows);
  write_text(a.out, table.str());
  if (!a.series_dir.empty()) {
    fs::create_directories(a.series_dir);
    for (const StudyRow& row : rows) {
      for (const SimilarityReport& r : row.reports) {
        std::ostringstream csv;
        write_layer_series(csv, r);
        write_text(fs::path(a.series_dir) / ("pair_" + std::to_string(row.sample_index) + "_" +
                                             std::string(to_string(r.kind)) + ".csv"),
                   csv.str());
      }
    }
  }
  out << json{{"out", a.out}, {"pairs", rows.size()}}.dump() << '\n';
  return 0;
}

int run_verify(const VerifyArgs& a, std::ostream& out) {
  const Container c = read_container(a.path);
  const std::vector<CheckResult> checks = verify_container(c);
  bool ok = true;
  json arr = json::array();
  for (const CheckResult& r : checks) {
    ok = ok && r.passed;
    arr.push_back({{"check", r.name}, {"passed", r.passed}, {"detail", r.detail}});
  }
  out << json{{"path", a.path}, {"kind", container_kind(c)}, {"ok", ok}, {"checks", arr}}.dump()
      << '\n';
  if (!ok) throw Error(ErrorCode::kVerificationFailed, "'" + a.path + "' failed verification");
  return 0;
}

int run_sweep(const SweepArgs& a, std::ostream& out) {
  const std::vector<double> grid = parse_lambda_grid(a.grid);
  const Adapter content = load_adapter(read_container(a.adapter_c));
  const Adapter style = load_adapter(read_container(a.adapter_s));
  const double origin_fro = frobenius_norm(reconstruct_origin(*content.basis));
  // Fail fast on a basis mismatch before fanning out.
  (void)merge(MergeSpec{{{&content, 1.0}, {&style, 1.0}}, "generic", ""}, MergeOptions{a.force});

  const std::size_t n = grid.size();
  std::vector<std::array<double, 2>> cells(n * n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t kk = 0; kk < static_cast<std::ptrdiff_t>(n * n); ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    const double lc = grid[k / n], ls = grid[k % n];
    const Adapter merged =
        merge(MergeSpec{{{&content, lc}, {&style, ls}}, "generic", ""}, MergeOptions{a.force});
    const double dw = frobenius_norm(delta_w(merged));
    cells[k] = {dw, origin_fro > 0.0 ? dw / origin_fro : 0.0};
  }
  std::ostringstream csv;
  csv << "lambda_c,lambda_s,delta_w_fro,delta_w_rel\n";
  for (std::size_t k = 0; k < n * n; ++k) {
    csv << num(grid[k / n]) << ',' << num(grid[k % n]) << ',' << num(cells[k][0]) << ','
        << num(cells[k][1]) << '\n';
  }
  write_text(a.out, csv.str());
  out << json{{"out", a.out}, {"rows", n * n}}.dump() << '\n';
  return 0;
}

void emit_error(std::ostream& err, std::string_view code, const std::string& message, int exit_code) {
  err << json{{"error", {{"code", code}, {"message", message}, {"exit_code", exit_code}}}}.dump()
      << '\n';
}

}  // namespace

std::vector<double> parse_lambda_grid(const std::string& spec) {
  const std::vector<std::string> parts = split(spec, ':');
  if (parts.size() != 3) throw Error(ErrorCode::kUsage, "lambda grid must be start:end:step");
  const double start = parse_double(parts[0]);
  const double end = parse_double(parts[1]);
  const double step = parse_double(parts[2]);
  if (!(step > 0.0)) throw Error(ErrorCode::kUsage, "lambda grid step must be positive");
  if (end < start - 1e-9) throw Error(ErrorCode::kUsage, "lambda grid end precedes start");
  std::vector<double> values;
  for (std::size_t k = 0;; ++k) {
    const double v = start + static_cast<double>(k) * step;
    if (v > end + 1e-9) break;
    values.push_back(v);
    if (values.size() > 1'000'000) throw Error(ErrorCode::kUsage, "lambda grid too large");
  }
  return values;
}

std::pair<std::size_t, std::size_t> parse_shape(const std::string& spec) {
  const auto x = spec.find_first_of("xX");
  auto parse_dim = [&](const std::string& s) -> std::size_t {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw Error(ErrorCode::kUsage, "shape must be MxN, got '" + spec + "'");
    }
    const auto v = std::stoull(s);
    if (v == 0) throw Error(ErrorCode::kUsage, "shape dimensions must be positive");
    return static_cast<std::size_t>(v);
  };
  if (x == std::string::npos) throw Error(ErrorCode::kUsage, "shape must be MxN, got '" + spec + "'");
  return {parse_dim(spec.substr(0, x)), parse_dim(spec.substr(x + 1))};
}

int cli_dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"QR-decomposed low-rank adapters: decompose, train, merge, analyze"};
  app.name(argv.empty() ? "qrlora" : fs::path(argv.front()).filename().string());
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Global RNG seed");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");
  app.add_option("--threads", g.threads, "Worker threads (0: OpenMP default)");

  GenWeightsArgs gw;
  auto* c_gen = app.add_subcommand("gen-weights", "Write a synthetic weight checkpoint");
  c_gen->add_option("--shape", gw.shape, "MxN")->required();
  c_gen->add_option("--seed", gw.seed, "Seed (defaults to the global seed)");
  c_gen->add_option("--scale", gw.scale, "Entries are N(0, scale^2 / M)");
  c_gen->add_option("--layer-name", gw.layer_name);
  c_gen->add_option("--dtype", gw.dtype, "f64|f32");
  c_gen->add_option("--out", gw.out)->required();

  DecomposeArgs de;
  auto* c_dec = app.add_subcommand("decompose", "SVD core split and orthogonal basis");
  c_dec->add_option("--weights", de.weights)->required();
  c_dec->add_option("--rank", de.rank, "Core rank");
  c_dec->add_option("--layer-name", de.layer_name);
  c_dec->add_option("--out", de.out)->required();

  InitArgs in;
  auto* c_init = app.add_subcommand("init", "Zero-initialized adapter on a basis");
  c_init->add_option("--basis", in.basis)->required();
  c_init->add_option("--role", in.role, "content|style|generic");
  c_init->add_option("--layer-name", in.layer_name);
  c_init->add_option("--out", in.out)->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train an adapter on a synthetic task");
  c_train->add_option("--adapter", tr.adapter)->required();
  c_train->add_option("--strategy", tr.strategy, "delta-r-only|direct-qr|vanilla-lora");
  c_train->add_option("--task-seed", tr.task_seed);
  c_train->add_option("--steps", tr.steps);
  c_train->add_option("--lr", tr.lr);
  c_train->add_option("--trace", tr.trace, "Loss trace CSV (step,loss)");
  c_train->add_option("--out", tr.out);
  c_train->add_option("--batch", tr.batch);
  c_train->add_option("--rank-gap", tr.rank_gap, "Target perturbation rank (default: adapter rank)");
  c_train->add_option("--perturb-scale", tr.perturb_scale);
  c_train->add_option("--optimizer", tr.optimizer, "sgd|adam");
  c_train->add_option("--activation", tr.activation, "linear|relu|tanh");
  c_train->add_option("--lora-sigma", tr.lora_sigma, "A init std (default 1/sqrt(rank))");

  MergeArgs me;
  auto* c_merge = app.add_subcommand("merge", "Linear combination of adapters on one basis");
  c_merge->add_option("--inputs", me.inputs, "a.qrla,b.qrla")->required();
  c_merge->add_option("--lambdas", me.lambdas, "Comma-separated (default all 1.0)");
  c_merge->add_option("--out", me.out)->required();
  c_merge->add_option("--role", me.role);
  c_merge->add_flag("--force", me.force, "Accept differing fingerprints when Q matches to 1e-8");

  SimilarityArgs si;
  auto* c_sim = app.add_subcommand("similarity", "Layer-wise cosine similarity of two runs");
  c_sim->add_option("--a", si.a)->required();
  c_sim->add_option("--b", si.b)->required();
  c_sim->add_option("--kind", si.kind, "Q|R|deltaR|A|B");
  c_sim->add_option("--out", si.out);

  StudyArgs st;
  auto* c_study = app.add_subcommand("study", "Similarity study over task pairs");
  c_study->add_option("--pairs", st.pairs)->required();
  c_study->add_option("--out", st.out)->required();
  c_study->add_option("--series-dir", st.series_dir, "Per-pair layer series CSVs");
  c_study->add_option("--save-runs", st.save_runs, "Write trained runs as containers");
  c_study->add_option("--from-files", st.from_files, "Read runs saved by --save-runs");
  c_study->add_option("--steps", st.steps);
  c_study->add_option("--lr", st.lr);
  c_study->add_option("--rank", st.rank);
  c_study->add_option("--rank-gap", st.rank_gap);
  c_study->add_option("--batch", st.batch);
  c_study->add_option("--perturb-scale", st.perturb_scale);
  c_study->add_option("--optimizer", st.optimizer, "sgd|adam");
  c_study->add_flag("--identical-tasks", st.identical_tasks, "Both runs of a pair share a task");

  VerifyArgs ve;
  auto* c_verify = app.add_subcommand("verify", "Re-check every invariant of a container");
  c_verify->add_option("path", ve.path)->required();

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "Merge-coefficient grid over two adapters");
  c_sweep->add_option("--adapter-c", sw.adapter_c)->required();
  c_sweep->add_option("--adapter-s", sw.adapter_s)->required();
  c_sweep->add_option("--lambda-grid", sw.grid, "start:end:step");
  c_sweep->add_option("--out", sw.out)->required();
  c_sweep->add_flag("--force", sw.force);

  std::vector<const char*> raw;
  raw.reserve(argv.size());
  for (const std::string& s : argv) raw.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(raw.size()), raw.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    emit_error(err, error_code_name(ErrorCode::kUsage), e.what(), 1);
    return 1;
  }

  try {
    configure_runtime(g);
    if (c_gen->parsed()) return run_gen_weights(g, gw, out);
    if (c_dec->parsed()) return run_decompose(de, out);
    if (c_init->parsed()) return run_init(in, out);
    if (c_train->parsed()) return run_train(g, tr, out);
    if (c_merge->parsed()) return run_merge(me, out);
    if (c_sim->parsed()) return run_similarity(si, out);
    if (c_study->parsed()) return run_study(g, st, out);
    if (c_verify->parsed()) return run_verify(ve, out);
    if (c_sweep->parsed()) return run_sweep(sw, out);
  } catch (const Error& e) {
    const int code = exit_code_for(e.code());
    emit_error(err, error_code_name(e.code()), e.what(), code);
    return code;
  } catch (const fs::filesystem_error& e) {
    emit_error(err, error_code_name(ErrorCode::kIo), e.what(), 3);
    return 3;
  } catch (const std::exception& e) {
    emit_error(err, "INTERNAL", e.what(), 4);
    return 4;
  }
  emit_error(err, error_code_name(ErrorCode::kUsage), "no subcommand", 1);
  return 1;
}

}  // namespace qrlora
