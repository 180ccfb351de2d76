// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrlora/training.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qrlora/error.hpp"
#include "qrlora/kernels.hpp"
#include "qrlora/linalg.hpp"
#include "qrlora/rng.hpp"

namespace qrlora {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double activate(Activation act, double z) {
  switch (act) {
    case Activation::kLinear: return z;
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kTanh: return std::tanh(z);
  }
  return z;
}

double activate_slope(Activation act, double z) {
  switch (act) {
    case Activation::kLinear: return 1.0;
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

struct Trace {
  std::vector<DenseMatrix> inputs;  // y_i fed into layer i
  std::vector<DenseMatrix> pre;     // z_i = y_i W_i
  std::vector<DenseMatrix> weights;
  DenseMatrix output;
};

Trace run_forward(const ToyModel& model, const DenseMatrix& x) {
  if (model.layers.empty()) throw Error(ErrorCode::kShapeError, "forward: model has no layers");
  Trace t;
  DenseMatrix y = x;
  for (const Layer& layer : model.layers) {
    DenseMatrix w = effective_layer_weight(layer);
    if (y.cols() != w.rows()) {
      throw Error(ErrorCode::kShapeError, "forward: layer '" + layer.name + "' expects " +
                                              std::to_string(w.rows()) + " inputs, got " +
                                              std::to_string(y.cols()));
    }
    DenseMatrix z = kernels::matmul(y, w);
    DenseMatrix next = z;
    for (double& v : next.data()) v = activate(layer.activation, v);
    t.inputs.push_back(std::move(y));
    t.pre.push_back(std::move(z));
    t.weights.push_back(std::move(w));
    y = std::move(next);
  }
  t.output = std::move(y);
  return t;
}

std::size_t strategy_index(Strategy s) {
  switch (s) {
    case Strategy::kDeltaROnly: return 1;
    case Strategy::kDirectQr: return 2;
    case Strategy::kVanillaLora: return 3;
  }
  return 0;
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kDeltaROnly: return "delta-r-only";
    case Strategy::kDirectQr: return "direct-qr";
    case Strategy::kVanillaLora: return "vanilla-lora";
  }
  return "?";
}

std::string_view to_string(ParamKind k) {
  switch (k) {
    case ParamKind::kWeight: return "weight";
    case ParamKind::kDeltaR: return "delta_r";
    case ParamKind::kQ: return "q";
    case ParamKind::kR: return "r";
    case ParamKind::kLoraA: return "lora_a";
    case ParamKind::kLoraB: return "lora_b";
  }
  return "?";
}

Activation parse_activation(std::string_view s) {
  if (s == "linear") return Activation::kLinear;
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw Error(ErrorCode::kUsage, "unknown activation '" + std::string(s) + "'");
}

Strategy parse_strategy(std::string_view s) {
  if (s == "delta-r-only") return Strategy::kDeltaROnly;
  if (s == "direct-qr") return Strategy::kDirectQr;
  if (s == "vanilla-lora") return Strategy::kVanillaLora;
  throw Error(ErrorCode::kUsage, "unknown strategy '" + std::string(s) + "'");
}

ToyModel make_base_model(const ModelConfig& cfg) {
  if (cfg.dims.size() < 2) throw Error(ErrorCode::kDimError, "model needs at least two dims");
  ToyModel model;
  for (std::size_t i = 0; i + 1 < cfg.dims.size(); ++i) {
    if (cfg.dims[i] == 0 || cfg.dims[i + 1] == 0) {
      throw Error(ErrorCode::kDimError, "model dims must be positive");
    }
    Layer layer;
    layer.name = "layer_" + std::to_string(i);
    layer.weight = normal_matrix(cfg.dims[i], cfg.dims[i + 1], derive_seed(cfg.seed, {0x77, i}),
                                 cfg.weight_scale / std::sqrt(static_cast<double>(cfg.dims[i])));
    layer.activation = cfg.activation;
    model.layers.push_back(std::move(layer));
  }
  return model;
}

ModelConfig single_layer_config(std::uint64_t seed, std::size_t d_in, std::size_t d_out) {
  ModelConfig cfg;
  cfg.dims = {d_in, d_out};
  cfg.seed = seed;
  return cfg;
}

DenseMatrix effective_layer_weight(const Layer& layer) {
  return std::visit(
      Overloaded{
          [&](const std::monostate&) { return layer.weight; },
          [](const Adapter& a) { return effective_weight(a); },
          [](const DirectQr& d) {
            return d.w_comp + kernels::matmul(d.q, d.r_mat).transpose();
          },
          [&](const LoraPair& p) { return layer.weight + kernels::matmul(p.b, p.a); },
      },
      layer.adaptation);
}

LoraPair vanilla_lora_init(const DenseMatrix& w, std::size_t r, double sigma, std::uint64_t seed) {
  if (r < 1 || r > std::min(w.rows(), w.cols())) {
    throw Error(ErrorCode::kRankOutOfRange, "vanilla_lora_init: rank out of range");
  }
  if (!(sigma > 0.0)) throw Error(ErrorCode::kUsage, "vanilla_lora_init: sigma must be positive");
  LoraPair p;
  p.a = normal_matrix(r, w.cols(), seed, sigma);
  p.b = DenseMatrix(w.rows(), r);
  p.sigma = sigma;
  return p;
}

void install_adaptations(ToyModel& model, Strategy strategy, std::size_t rank,
                         std::uint64_t lora_seed, double lora_sigma) {
  const double sigma = lora_sigma > 0.0 ? lora_sigma : 1.0 / std::sqrt(static_cast<double>(rank));
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    Layer& layer = model.layers[i];
    switch (strategy) {
      case Strategy::kDeltaROnly:
        layer.adaptation = init_adapter(decompose(layer.weight, rank), layer.name, "generic");
        break;
      case Strategy::kDirectQr: {
        QrBasis b = build_orthogonal_basis(extract_core(layer.weight, rank));
        layer.adaptation = DirectQr{std::move(b.q), std::move(b.r_mat), std::move(b.w_comp)};
        break;
      }
      case Strategy::kVanillaLora:
        layer.adaptation =
            vanilla_lora_init(layer.weight, rank, sigma, derive_seed(lora_seed, {0x10a, i}));
        break;
    }
  }
}

TaskSpec make_task(const ToyModel& base, const TaskParams& params) {
  if (base.layers.empty()) throw Error(ErrorCode::kDimError, "make_task: model has no layers");
  if (params.batch == 0) throw Error(ErrorCode::kDimError, "make_task: batch must be positive");
  for (const Layer& layer : base.layers) {
    if (params.rank_gap > std::min(layer.weight.rows(), layer.weight.cols())) {
      throw Error(ErrorCode::kDimError, "make_task: rank_gap exceeds layer '" + layer.name + "'");
    }
  }
  TaskSpec task;
  task.seed = params.seed;
  task.description = "seed=" + std::to_string(params.seed) +
                     " batch=" + std::to_string(params.batch) +
                     " rank_gap=" + std::to_string(params.rank_gap);
  task.x = normal_matrix(params.batch, base.in_dim(), derive_seed(params.seed, {0x5a}));

  ToyModel target;
  for (std::size_t i = 0; i < base.layers.size(); ++i) {
    const Layer& layer = base.layers[i];
    DenseMatrix delta(layer.weight.rows(), layer.weight.cols());
    if (params.rank_gap > 0) {
      const std::size_t k = params.rank_gap;
      const SvdFactors f = svd(layer.weight);
      const double scale = params.perturb_scale / std::sqrt(static_cast<double>(k));
      DenseMatrix g = normal_matrix(layer.weight.rows(), k, derive_seed(params.seed, {0xd7, i}), scale);
      delta = kernels::matmul(g, take_rows(f.vt, 0, k));
    }
    Layer t;
    t.name = layer.name;
    t.weight = layer.weight + delta;
    t.activation = layer.activation;
    target.layers.push_back(std::move(t));
    task.perturbations.push_back(std::move(delta));
  }
  task.y = forward(target, task.x);
  return task;
}

DenseMatrix forward(const ToyModel& model, const DenseMatrix& x) {
  return run_forward(model, x).output;
}

double task_loss(const ToyModel& model, const TaskSpec& task) {
  const DenseMatrix out = forward(model, task.x);
  require_same_shape(out, task.y, "task_loss");
  DenseMatrix diff = out - task.y;
  const double loss = kernels::sum_squares(diff.data()) / static_cast<double>(task.x.rows());
  if (!std::isfinite(loss)) throw Error(ErrorCode::kNonFinite, "task_loss: non-finite loss");
  return loss;
}

std::vector<DenseMatrix> backward(const ToyModel& model, const TaskSpec& task) {
  Trace t = run_forward(model, task.x);
  require_same_shape(t.output, task.y, "backward");
  DenseMatrix d_out = t.output - task.y;
  d_out *= 2.0 / static_cast<double>(task.x.rows());

  std::vector<DenseMatrix> grads(model.layers.size());
  for (std::size_t i = model.layers.size(); i-- > 0;) {
    DenseMatrix dz = std::move(d_out);
    const Activation act = model.layers[i].activation;
    if (act != Activation::kLinear) {
      auto pz = t.pre[i].data();
      auto pd = dz.data();
      for (std::size_t k = 0; k < pd.size(); ++k) pd[k] *= activate_slope(act, pz[k]);
    }
    grads[i] = kernels::matmul_tn(t.inputs[i], dz);
    require_finite(grads[i], "backward");
    if (i > 0) d_out = kernels::matmul_nt(dz, t.weights[i]);
  }
  return grads;
}

DenseMatrix& parameter(ToyModel& model, ParamRef ref) {
  const ToyModel& cm = model;
  return const_cast<DenseMatrix&>(parameter(cm, ref));
}

const DenseMatrix& parameter(const ToyModel& model, ParamRef ref) {
  if (ref.layer >= model.layers.size()) {
    throw Error(ErrorCode::kKindUnavailable, "parameter: layer index out of range");
  }
  const Layer& layer = model.layers[ref.layer];
  const DenseMatrix* found = nullptr;
  switch (ref.kind) {
    case ParamKind::kWeight:
      found = &layer.weight;
      break;
    case ParamKind::kDeltaR:
      if (auto* a = std::get_if<Adapter>(&layer.adaptation)) found = &a->delta_r;
      break;
    case ParamKind::kQ:
      if (auto* d = std::get_if<DirectQr>(&layer.adaptation)) found = &d->q;
      break;
    case ParamKind::kR:
      if (auto* d = std::get_if<DirectQr>(&layer.adaptation)) found = &d->r_mat;
      break;
    case ParamKind::kLoraA:
      if (auto* p = std::get_if<LoraPair>(&layer.adaptation)) found = &p->a;
      break;
    case ParamKind::kLoraB:
      if (auto* p = std::get_if<LoraPair>(&layer.adaptation)) found = &p->b;
      break;
  }
  if (!found) {
    throw Error(ErrorCode::kKindUnavailable, "layer '" + layer.name + "' has no " +
                                                 std::string(to_string(ref.kind)) + " tensor");
  }
  return *found;
}

std::vector<ParamRef> trainable_params(const ToyModel& model) {
  std::vector<ParamRef> refs;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    std::visit(Overloaded{
                   [](const std::monostate&) {},
                   [&](const Adapter&) { refs.push_back({i, ParamKind::kDeltaR}); },
                   [&](const DirectQr&) {
                     refs.push_back({i, ParamKind::kQ});
                     refs.push_back({i, ParamKind::kR});
                   },
                   [&](const LoraPair&) {
                     refs.push_back({i, ParamKind::kLoraA});
                     refs.push_back({i, ParamKind::kLoraB});
                   },
               },
               model.layers[i].adaptation);
  }
  return refs;
}

std::size_t trainable_parameter_count(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const std::monostate&) { return std::size_t{0}; },
                        [](const Adapter& a) { return a.delta_r.size(); },
                        [](const DirectQr& d) { return d.q.size() + d.r_mat.size(); },
                        [](const LoraPair& p) { return p.a.size() + p.b.size(); },
                    },
                    layer.adaptation);
}

DenseMatrix param_gradient(const Layer& layer, ParamKind kind, const DenseMatrix& grad_w) {
  switch (kind) {
    case ParamKind::kWeight:
      return grad_w;
    case ParamKind::kDeltaR:
      if (auto* a = std::get_if<Adapter>(&layer.adaptation)) return grad_delta_r(*a, grad_w);
      break;
    case ParamKind::kQ:
      // W = W_comp + R^T Q^T  =>  dL/dQ = G^T R^T
      if (auto* d = std::get_if<DirectQr>(&layer.adaptation)) {
        return kernels::matmul_nt(grad_w.transpose(), d->r_mat);
      }
      break;
    case ParamKind::kR:
      if (auto* d = std::get_if<DirectQr>(&layer.adaptation)) {
        return kernels::matmul(grad_w, d->q).transpose();
      }
      break;
    case ParamKind::kLoraA:
      // W = W0 + B A  =>  dL/dA = B^T G, dL/dB = G A^T
      if (auto* p = std::get_if<LoraPair>(&layer.adaptation)) return kernels::matmul_tn(p->b, grad_w);
      break;
    case ParamKind::kLoraB:
      if (auto* p = std::get_if<LoraPair>(&layer.adaptation)) return kernels::matmul_nt(grad_w, p->a);
      break;
  }
  throw Error(ErrorCode::kKindUnavailable,
              "layer '" + layer.name + "' has no " + std::string(to_string(kind)) + " tensor");
}

double central_difference(const std::function<double(double)>& f, double at, double eps) {
  return (f(at + eps) - f(at - eps)) / (2.0 * eps);
}

DenseMatrix finite_diff_grad(const ToyModel& model, const TaskSpec& task, ParamRef which,
                             double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::kUsage, "finite_diff_grad: eps must be positive");
  ToyModel probe = model;
  DenseMatrix& p = parameter(probe, which);
  DenseMatrix g(p.rows(), p.cols());
  for (std::size_t k = 0; k < p.size(); ++k) {
    double& slot = p.data()[k];
    const double saved = slot;
    g.data()[k] = central_difference(
        [&](double v) {
          slot = v;
          return task_loss(probe, task);
        },
        saved, eps);
    slot = saved;
  }
  return g;
}

void train(ToyModel& model, const TaskSpec& task, TrainRun& run) {
  const std::size_t want = strategy_index(run.strategy);
  bool any = false;
  for (const Layer& layer : model.layers) {
    if (layer.adaptation.index() == 0) continue;
    if (layer.adaptation.index() != want) {
      throw Error(ErrorCode::kUsage, "layer '" + layer.name + "' is not adapted for strategy " +
                                         std::string(to_string(run.strategy)));
    }
    any = true;
  }
  if (!any) throw Error(ErrorCode::kUsage, "train: model carries no adaptations");
  if (!(run.lr >= 0.0)) throw Error(ErrorCode::kUsage, "train: lr must be non-negative");

  std::vector<std::uint64_t> frozen;
  auto frozen_prints = [&] {
    std::vector<std::uint64_t> out;
    for (const Layer& layer : model.layers) {
      if (auto* a = std::get_if<Adapter>(&layer.adaptation)) {
        const QrBasis& b = *a->basis;
        out.push_back(basis_fingerprint(b.q, b.r_mat, b.w_comp, b.rank));
      }
    }
    return out;
  };
  if (run.strategy == Strategy::kDeltaROnly) frozen = frozen_prints();

  const std::vector<ParamRef> params = trainable_params(model);
  std::vector<AdamState> adam(params.size());

  run.loss_trace.clear();
  run.loss_trace.reserve(run.steps + 1);
  run.loss_trace.push_back(task_loss(model, task));
  for (std::size_t step = 1; step <= run.steps; ++step) {
    const std::vector<DenseMatrix> grad_w = backward(model, task);
    // Gradients are taken at the current point for every tensor before any
    // of them moves.
    std::vector<DenseMatrix> grads;
    grads.reserve(params.size());
    for (const ParamRef& ref : params) {
      grads.push_back(param_gradient(model.layers[ref.layer], ref.kind, grad_w[ref.layer]));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      DenseMatrix& p = parameter(model, params[k]);
      if (run.optimizer == Optimizer::kAdam) {
        adam_update(p, adam[k], grads[k], run.lr);
      } else {
        sgd_update(p, grads[k], run.lr);
      }
    }
    run.loss_trace.push_back(task_loss(model, task));
    if (!frozen.empty() && step % 100 == 0 && frozen_prints() != frozen) {
      throw Error(ErrorCode::kVerificationFailed, "train: frozen basis changed");
    }
  }
}

}  // namespace qrlora
