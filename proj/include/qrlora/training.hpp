// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "qrlora/adapter.hpp"
#include "qrlora/matrix.hpp"

namespace qrlora {

enum class Activation { kLinear, kRelu, kTanh };
enum class Strategy { kDeltaROnly, kDirectQr, kVanillaLora };
enum class Optimizer { kSgd, kAdam };

std::string_view to_string(Activation a);
std::string_view to_string(Strategy s);
Activation parse_activation(std::string_view s);
Strategy parse_strategy(std::string_view s);

/// Q and R trained directly. No re-orthonormalization is ever applied, so
/// q drifts off the Stiefel manifold as training proceeds.
struct DirectQr {
  DenseMatrix q;       // n x r
  DenseMatrix r_mat;   // r x m
  DenseMatrix w_comp;  // m x n, frozen
};

/// Vanilla LoRA: W + B A with A ~ N(0, sigma^2), B = 0.
struct LoraPair {
  DenseMatrix a;  // r x n
  DenseMatrix b;  // m x r
  double sigma = 0.0;
};

using Adaptation = std::variant<std::monostate, Adapter, DirectQr, LoraPair>;

struct Layer {
  std::string name;
  DenseMatrix weight;  // m x n, frozen base weight
  Activation activation = Activation::kLinear;
  Adaptation adaptation;
};

/// y_{i+1} = act(y_i W_eff_i); no biases.
struct ToyModel {
  std::vector<Layer> layers;

  std::size_t in_dim() const { return layers.front().weight.rows(); }
  std::size_t out_dim() const { return layers.back().weight.cols(); }
};

struct ModelConfig {
  std::vector<std::size_t> dims;  // d_0 .. d_L, one layer per adjacent pair
  Activation activation = Activation::kLinear;
  // Base weights are N(0, weight_scale^2 / d_in).
  double weight_scale = 0.5;
  std::uint64_t seed = 0;
};

ToyModel make_base_model(const ModelConfig& cfg);

/// Weight the layer applies in the forward pass.
DenseMatrix effective_layer_weight(const Layer& layer);

/// Installs one adaptation object per layer for `strategy`. Bases come from
/// extract_core/build_orthogonal_basis on each base weight; vanilla LoRA A
/// matrices draw from derive_seed(lora_seed, {layer}). A non-positive
/// lora_sigma means 1/sqrt(rank).
void install_adaptations(ToyModel& model, Strategy strategy, std::size_t rank,
                         std::uint64_t lora_seed = 0, double lora_sigma = 0.0);

/// Throws RankOutOfRange unless 1 <= r <= min(m, n); Usage for sigma <= 0.
LoraPair vanilla_lora_init(const DenseMatrix& w, std::size_t r, double sigma, std::uint64_t seed);

/// Synthetic least-squares task.
struct TaskSpec {
  DenseMatrix x;  // batch x d_in
  DenseMatrix y;  // batch x d_out
  std::uint64_t seed = 0;
  std::string description;
  // Per-layer target perturbation Delta*; y = forward(W_i + Delta*_i, x).
  std::vector<DenseMatrix> perturbations;
};

struct TaskParams {
  std::uint64_t seed = 0;
  std::size_t batch = 64;
  std::size_t rank_gap = 0;
  // ||Delta*_i||_F is about perturb_scale * sqrt(d_in_i).
  double perturb_scale = 0.1;
};

/// x ~ N(0, 1). Each Delta*_i = G V_k^T with G Gaussian and V_k the top
/// k = rank_gap right singular vectors of the base weight, so the target is
/// reachable by every rank-r adapter with r >= rank_gap.
/// Throws DimError for batch 0 or rank_gap > min(d_in, d_out) of any layer.
TaskSpec make_task(const ToyModel& base, const TaskParams& params);

/// Single linear layer d_in x d_out with base weights drawn from `seed`.
ModelConfig single_layer_config(std::uint64_t seed, std::size_t d_in, std::size_t d_out);

DenseMatrix forward(const ToyModel& model, const DenseMatrix& x);

/// (1 / batch) ||forward(x) - y||_F^2. Throws NonFinite.
double task_loss(const ToyModel& model, const TaskSpec& task);

/// dL/dW_eff for every layer, by the chain rule.
std::vector<DenseMatrix> backward(const ToyModel& model, const TaskSpec& task);

enum class ParamKind { kWeight, kDeltaR, kQ, kR, kLoraA, kLoraB };

struct ParamRef {
  std::size_t layer = 0;
  ParamKind kind = ParamKind::kWeight;
};

std::string_view to_string(ParamKind k);

/// Throws KindUnavailable when the layer carries no such tensor.
DenseMatrix& parameter(ToyModel& model, ParamRef ref);
const DenseMatrix& parameter(const ToyModel& model, ParamRef ref);

/// Tensors a strategy updates, in layer order.
std::vector<ParamRef> trainable_params(const ToyModel& model);

/// Trainable scalars contributed by one layer's adaptation.
std::size_t trainable_parameter_count(const Layer& layer);

/// Maps dL/dW_eff of a layer onto one of its parameters.
DenseMatrix param_gradient(const Layer& layer, ParamKind kind, const DenseMatrix& grad_w);

/// Central differences (L(p + eps) - L(p - eps)) / (2 eps), one scalar at a
/// time, on a private copy of the model.
DenseMatrix finite_diff_grad(const ToyModel& model, const TaskSpec& task, ParamRef which,
                             double eps = 1e-5);

/// Central difference of a scalar function; exposed for oracle tests.
double central_difference(const std::function<double(double)>& f, double at, double eps);

struct TrainRun {
  Strategy strategy = Strategy::kDeltaROnly;
  Optimizer optimizer = Optimizer::kSgd;
  double lr = 0.05;
  std::size_t steps = 500;
  std::uint64_t seed = 0;
  std::vector<double> loss_trace;  // steps + 1 entries after train()
};

/// Runs `run.steps` optimizer steps on the strategy's tensors and records
/// the loss before the first and after every step. Throws Usage when the
/// model's adaptations do not match the strategy. On NonFinite the trace
/// holds the steps completed so far.
void train(ToyModel& model, const TaskSpec& task, TrainRun& run);

}  // namespace qrlora
