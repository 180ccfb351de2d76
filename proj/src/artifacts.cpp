// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrlora/artifacts.hpp"

#include <cmath>
#include <cstdio>

#include "qrlora/error.hpp"
#include "qrlora/kernels.hpp"
#include "qrlora/linalg.hpp"

namespace qrlora {

namespace {

using nlohmann::json;

json base_metadata(const std::string& kind, const std::string& layer_name, std::size_t rank,
                   const std::string& role) {
  return json{{"kind", kind},
              {"layer_name", layer_name},
              {"rank", rank},
              {"role", role},
              {"creator", kCreator}};
}

void add_basis_tensors(Container& c, const QrBasis& b) {
  c.tensors.push_back({"q", "q", Dtype::kF64, b.q});
  c.tensors.push_back({"r", "r", Dtype::kF64, b.r_mat});
  c.tensors.push_back({"w_comp", "w_comp", Dtype::kF64, b.w_comp});
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

void check_basis(const Container& c, std::vector<CheckResult>& out) {
  std::shared_ptr<const QrBasis> basis;
  try {
    basis = std::make_shared<const QrBasis>(assemble_basis(
        c.require("q").value, c.require("r").value, c.require("w_comp").value));
    out.push_back({"shapes", true, ""});
  } catch (const Error& e) {
    out.push_back({"shapes", false, e.what()});
    return;
  }
  const QrBasis& b = *basis;
  const double r = static_cast<double>(b.rank);

  const double defect = orthonormality_defect(b.q);
  out.push_back({"orthonormality", defect <= 1e-12 * r, "||Q^T Q - I||_F = " + sci(defect)});

  const std::string stored = c.metadata.value("fingerprint", std::string());
  const std::string actual = fingerprint_hex(b.fingerprint);
  out.push_back({"fingerprint", stored == actual, "stored " + stored + ", computed " + actual});

  const DenseMatrix origin = reconstruct_origin(b);
  const double origin_fro = frobenius_norm(origin);
  const double leak = frobenius_norm(kernels::matmul(b.w_comp, b.q));
  out.push_back({"complement_orthogonal", leak <= 1e-10 * std::max(origin_fro, 1e-300),
                 "||W_comp Q||_F = " + sci(leak)});
  if (c.metadata.contains("w_origin_fro")) {
    const double want = c.metadata["w_origin_fro"].get<double>();
    const double err = std::abs(origin_fro - want);
    out.push_back({"reconstruction", err <= 1e-10 * std::max(want, 1e-300),
                   "| ||W_comp + (QR)^T||_F - ||W||_F | = " + sci(err)});
  }
  if (const Tensor* d = c.find("delta_r")) {
    out.push_back({"delta_r_shape", d->value.same_shape(b.r_mat),
                   std::to_string(d->value.rows()) + "x" + std::to_string(d->value.cols())});
  }
}

}  // namespace

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

Container weight_container(const DenseMatrix& w, const std::string& layer_name, Dtype dtype) {
  Container c;
  c.metadata = base_metadata("weight", layer_name, 0, "generic");
  c.tensors.push_back({"weight", "weight", dtype, w});
  return c;
}

Container basis_container(const QrBasis& basis, const std::string& layer_name,
                          double w_origin_fro) {
  Container c;
  c.metadata = base_metadata("basis", layer_name, basis.rank, "generic");
  c.metadata["fingerprint"] = fingerprint_hex(basis.fingerprint);
  c.metadata["w_origin_fro"] = w_origin_fro;
  c.metadata["rank_deficient"] = basis.rank_deficient;
  add_basis_tensors(c, basis);
  return c;
}

Container adapter_container(const Adapter& adapter) {
  const QrBasis& b = *adapter.basis;
  Container c;
  c.metadata = base_metadata("adapter", adapter.layer_name, b.rank, adapter.role);
  c.metadata["fingerprint"] = fingerprint_hex(b.fingerprint);
  c.metadata["w_origin_fro"] = frobenius_norm(reconstruct_origin(b));
  c.metadata["rank_deficient"] = b.rank_deficient;
  add_basis_tensors(c, b);
  c.tensors.push_back({"delta_r", "delta_r", Dtype::kF64, adapter.delta_r});
  return c;
}

Container direct_qr_container(const DirectQr& d, const std::string& layer_name) {
  Container c;
  c.metadata = base_metadata("direct-qr", layer_name, d.q.cols(), "generic");
  c.tensors.push_back({"q", "q", Dtype::kF64, d.q});
  c.tensors.push_back({"r", "r", Dtype::kF64, d.r_mat});
  c.tensors.push_back({"w_comp", "w_comp", Dtype::kF64, d.w_comp});
  return c;
}

Container lora_container(const DenseMatrix& weight, const LoraPair& p,
                         const std::string& layer_name) {
  Container c;
  c.metadata = base_metadata("lora", layer_name, p.a.rows(), "generic");
  c.metadata["sigma"] = p.sigma;
  c.tensors.push_back({"weight", "weight", Dtype::kF64, weight});
  c.tensors.push_back({"lora_a", "lora_a", Dtype::kF64, p.a});
  c.tensors.push_back({"lora_b", "lora_b", Dtype::kF64, p.b});
  return c;
}

Container layer_container(const Layer& layer) {
  if (auto* a = std::get_if<Adapter>(&layer.adaptation)) {
    Adapter named = *a;
    named.layer_name = layer.name;
    return adapter_container(named);
  }
  if (auto* d = std::get_if<DirectQr>(&layer.adaptation)) return direct_qr_container(*d, layer.name);
  if (auto* p = std::get_if<LoraPair>(&layer.adaptation)) {
    return lora_container(layer.weight, *p, layer.name);
  }
  return weight_container(layer.weight, layer.name);
}

std::string container_kind(const Container& c) { return c.metadata.value("kind", std::string()); }

std::string container_layer_name(const Container& c) {
  return c.metadata.value("layer_name", std::string());
}

DenseMatrix load_weight(const Container& c) { return c.require("weight").value; }

std::shared_ptr<const QrBasis> load_basis(const Container& c) {
  QrBasis b = assemble_basis(c.require("q").value, c.require("r").value, c.require("w_comp").value);
  b.rank_deficient = c.metadata.value("rank_deficient", false);
  const std::string stored = c.metadata.value("fingerprint", std::string());
  if (stored != fingerprint_hex(b.fingerprint)) {
    throw Error(ErrorCode::kVerificationFailed,
                "basis fingerprint " + fingerprint_hex(b.fingerprint) +
                    " does not match stored " + stored);
  }
  return std::make_shared<const QrBasis>(std::move(b));
}

Adapter load_adapter(const Container& c) {
  const std::string kind = container_kind(c);
  if (kind != "adapter" && kind != "basis") {
    throw Error(ErrorCode::kKindUnavailable, "expected an adapter or basis file, got '" + kind + "'");
  }
  Adapter a;
  a.basis = load_basis(c);
  a.layer_name = container_layer_name(c);
  a.role = c.metadata.value("role", std::string("generic"));
  if (const Tensor* d = c.find("delta_r")) {
    if (!d->value.same_shape(a.basis->r_mat)) {
      throw Error(ErrorCode::kShapeError, "delta_r does not match basis");
    }
    a.delta_r = d->value;
  } else {
    a.delta_r = DenseMatrix(a.basis->rank, a.basis->in_dim());
  }
  return a;
}

std::vector<CheckResult> verify_container(const Container& c) {
  std::vector<CheckResult> out;
  out.push_back({"checksum", true, "crc32c"});
  bool finite = true;
  for (const Tensor& t : c.tensors) finite = finite && t.value.all_finite();
  out.push_back({"finite", finite, ""});

  const std::string kind = container_kind(c);
  if (kind == "basis" || kind == "adapter") {
    check_basis(c, out);
  } else if (kind == "weight") {
    out.push_back({"tensors", c.find("weight") != nullptr, "weight"});
  } else if (kind == "direct-qr") {
    const Tensor* q = c.find("q");
    const Tensor* r = c.find("r");
    const Tensor* wc = c.find("w_comp");
    const bool ok = q && r && wc && q->value.cols() == r->value.rows() &&
                    r->value.cols() == wc->value.rows() && q->value.rows() == wc->value.cols();
    out.push_back({"shapes", ok, ""});
    if (ok && finite) {
      // Trained Q is not re-orthonormalized; report the drift only.
      out.push_back({"orthonormality_drift", true,
                     "||Q^T Q - I||_F = " + sci(orthonormality_defect(q->value))});
    }
  } else if (kind == "lora") {
    const Tensor* w = c.find("weight");
    const Tensor* a = c.find("lora_a");
    const Tensor* b = c.find("lora_b");
    const bool ok = w && a && b && a->value.cols() == w->value.cols() &&
                    b->value.rows() == w->value.rows() && b->value.cols() == a->value.rows();
    out.push_back({"shapes", ok, ""});
  } else {
    out.push_back({"kind", false, "unknown kind '" + kind + "'"});
  }
  return out;
}

}  // namespace qrlora
