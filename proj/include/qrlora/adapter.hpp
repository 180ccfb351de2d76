// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "qrlora/decomposition.hpp"
#include "qrlora/matrix.hpp"

namespace qrlora {

/// A trainable delta_r (r x m) on top of a frozen, shared basis.
///
/// The effective weight is W_comp + (Q (R + delta_r))^T. Only delta_r ever
/// changes; one training loop owns an adapter at a time.
struct Adapter {
  std::shared_ptr<const QrBasis> basis;
  DenseMatrix delta_r;
  std::string layer_name;
  std::string role;  // "content", "style" or "generic"

  std::size_t rank() const noexcept { return basis->rank; }
  std::size_t trainable_parameters() const noexcept { return delta_r.size(); }
};

bool is_known_role(const std::string& role);

/// Zero delta_r. Throws Usage for an unknown role, ShapeError for a
/// malformed basis.
Adapter init_adapter(std::shared_ptr<const QrBasis> basis, std::string layer_name,
                     std::string role);

/// W_comp + (Q (R + delta_r))^T
DenseMatrix effective_weight(const Adapter& a);

/// (Q delta_r)^T
DenseMatrix delta_w(const Adapter& a);

/// dL/d(delta_r) = Q^T (dL/dW)^T for a loss gradient over the effective
/// weight. Throws ShapeMismatch, NonFinite.
DenseMatrix grad_delta_r(const Adapter& a, const DenseMatrix& grad_w);

/// delta_r -= lr * grad. On a non-finite result the adapter is left
/// untouched and NonFinite is thrown.
void sgd_step(Adapter& a, const DenseMatrix& grad, double lr);

/// Adam moments for one tensor.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  DenseMatrix m;
  DenseMatrix v;
  long step = 0;
};

/// In-place Adam update of `param`; same failure contract as sgd_step.
void adam_update(DenseMatrix& param, AdamState& state, const DenseMatrix& grad, double lr);

/// In-place SGD update of `param`; same failure contract as sgd_step.
void sgd_update(DenseMatrix& param, const DenseMatrix& grad, double lr);

struct MergeInput {
  const Adapter* adapter;
  double lambda = 1.0;
};

struct MergeSpec {
  std::vector<MergeInput> inputs;
  std::string role = "generic";
  std::string layer_name;  // empty: take the first input's
};

struct MergeOptions {
  // Accept differing fingerprints when every Q matches the first to within
  // q_tolerance in Frobenius norm.
  bool force = false;
  double q_tolerance = 1e-8;
};

/// delta_r = sum_i lambda_i delta_r_i over a shared basis. The result owns a
/// fresh delta_r. Throws EmptySpec, BasisMismatch, NonFinite (lambda).
Adapter merge(const MergeSpec& spec, const MergeOptions& options = {});

}  // namespace qrlora
