// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "qrlora/adapter.hpp"
#include "qrlora/container.hpp"
#include "qrlora/training.hpp"

// Mapping between in-memory objects and containers. Every container carries
// metadata.kind, one of: weight, basis, adapter, direct-qr, lora.

namespace qrlora {

std::string fingerprint_hex(std::uint64_t fp);

Container weight_container(const DenseMatrix& w, const std::string& layer_name,
                           Dtype dtype = Dtype::kF64);
/// w_origin_fro records ||W||_F so verify can re-check reconstruction.
Container basis_container(const QrBasis& basis, const std::string& layer_name,
                          double w_origin_fro);
Container adapter_container(const Adapter& adapter);
Container direct_qr_container(const DirectQr& d, const std::string& layer_name);
Container lora_container(const DenseMatrix& weight, const LoraPair& p,
                         const std::string& layer_name);
/// Adaptation of one trained model layer, in whichever form it carries.
Container layer_container(const Layer& layer);

std::string container_kind(const Container& c);
std::string container_layer_name(const Container& c);

DenseMatrix load_weight(const Container& c);
/// Rebuilds the basis; throws VerificationFailed if the stored fingerprint
/// disagrees with the tensors.
std::shared_ptr<const QrBasis> load_basis(const Container& c);
/// An adapter file, or a basis file (zero delta_r).
Adapter load_adapter(const Container& c);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Re-checks every invariant the container's kind promises.
std::vector<CheckResult> verify_container(const Container& c);

}  // namespace qrlora
