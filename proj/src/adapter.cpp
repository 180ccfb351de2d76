// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrlora/adapter.hpp"

#include <cmath>
#include <string>

#include "qrlora/error.hpp"
#include "qrlora/kernels.hpp"
#include "qrlora/linalg.hpp"

namespace qrlora {

bool is_known_role(const std::string& role) {
  return role == "content" || role == "style" || role == "generic";
}

Adapter init_adapter(std::shared_ptr<const QrBasis> basis, std::string layer_name,
                     std::string role) {
  if (!basis) throw Error(ErrorCode::kShapeError, "init_adapter: null basis");
  if (!is_known_role(role)) {
    throw Error(ErrorCode::kUsage, "unknown role '" + role + "' (content, style, generic)");
  }
  if (basis->q.cols() != basis->rank || basis->r_mat.rows() != basis->rank ||
      basis->r_mat.cols() != basis->in_dim() || basis->q.rows() != basis->out_dim()) {
    throw Error(ErrorCode::kShapeError, "init_adapter: malformed basis");
  }
  Adapter a;
  a.delta_r = DenseMatrix(basis->rank, basis->in_dim());
  a.basis = std::move(basis);
  a.layer_name = std::move(layer_name);
  a.role = std::move(role);
  return a;
}

DenseMatrix effective_weight(const Adapter& a) {
  const QrBasis& b = *a.basis;
  if (!a.delta_r.same_shape(b.r_mat)) {
    throw Error(ErrorCode::kShapeError, "adapter delta_r does not match its basis");
  }
  return b.w_comp + kernels::matmul(b.q, b.r_mat + a.delta_r).transpose();
}

DenseMatrix delta_w(const Adapter& a) {
  return kernels::matmul(a.basis->q, a.delta_r).transpose();
}

DenseMatrix grad_delta_r(const Adapter& a, const DenseMatrix& grad_w) {
  const QrBasis& b = *a.basis;
  if (grad_w.rows() != b.in_dim() || grad_w.cols() != b.out_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "grad_delta_r: gradient shape does not match layer");
  }
  require_finite(grad_w, "grad_delta_r");
  // Q^T G^T = (G Q)^T
  return kernels::matmul(grad_w, b.q).transpose();
}

void sgd_update(DenseMatrix& param, const DenseMatrix& grad, double lr) {
  require_same_shape(param, grad, "sgd step");
  DenseMatrix next = param;
  kernels::axpy(-lr, grad.data(), next.data());
  require_finite(next, "sgd step");
  param = std::move(next);
}

void sgd_step(Adapter& a, const DenseMatrix& grad, double lr) {
  sgd_update(a.delta_r, grad, lr);
}

void adam_update(DenseMatrix& param, AdamState& state, const DenseMatrix& grad, double lr) {
  require_same_shape(param, grad, "adam step");
  if (state.m.empty()) {
    state.m = DenseMatrix(param.rows(), param.cols());
    state.v = DenseMatrix(param.rows(), param.cols());
  }
  DenseMatrix m = state.m, v = state.v, next = param;
  const long t = state.step + 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
  auto g = grad.data();
  auto pm = m.data(), pv = v.data(), pn = next.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    pm[i] = state.beta1 * pm[i] + (1.0 - state.beta1) * g[i];
    pv[i] = state.beta2 * pv[i] + (1.0 - state.beta2) * g[i] * g[i];
    pn[i] -= lr * (pm[i] / c1) / (std::sqrt(pv[i] / c2) + state.eps);
  }
  require_finite(next, "adam step");
  param = std::move(next);
  state.m = std::move(m);
  state.v = std::move(v);
  state.step = t;
}

Adapter merge(const MergeSpec& spec, const MergeOptions& options) {
  if (spec.inputs.empty()) throw Error(ErrorCode::kEmptySpec, "merge: no inputs");
  const Adapter& first = *spec.inputs.front().adapter;
  for (const MergeInput& in : spec.inputs) {
    if (!std::isfinite(in.lambda)) throw Error(ErrorCode::kNonFinite, "merge: non-finite lambda");
    const QrBasis& b = *in.adapter->basis;
    if (b.fingerprint == first.basis->fingerprint) continue;
    const bool comparable = options.force && b.q.same_shape(first.basis->q) &&
                            in.adapter->delta_r.same_shape(first.delta_r);
    if (!comparable || frobenius_norm(b.q - first.basis->q) > options.q_tolerance) {
      throw Error(ErrorCode::kBasisMismatch,
                  "merge: adapters '" + first.layer_name + "' and '" + in.adapter->layer_name +
                      "' do not share a basis");
    }
  }
  Adapter out;
  out.basis = first.basis;
  out.layer_name = spec.layer_name.empty() ? first.layer_name : spec.layer_name;
  out.role = spec.role;
  out.delta_r = DenseMatrix(first.delta_r.rows(), first.delta_r.cols());
  for (const MergeInput& in : spec.inputs) {
    kernels::axpy(in.lambda, in.adapter->delta_r.data(), out.delta_r.data());
  }
  return out;
}

}  // namespace qrlora
