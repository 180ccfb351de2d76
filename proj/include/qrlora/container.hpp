// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrlora/matrix.hpp"

// On-disk layout, all integers little-endian:
//
//   "QRLA" | u32 version (1) | u64 header_len | header JSON (header_len bytes)
//   | payload (tensor blobs, in header order) | u32 CRC32C of payload
//
// The header is {"metadata": {...}, "tensors": [{name, role, dtype, shape,
// offset, length}, ...]} with offsets relative to the payload start.

namespace qrlora {

enum class Dtype { kF64, kF32 };

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr char kCreator[] = "qrlora 0.1.0";

struct Tensor {
  std::string name;
  std::string role;  // weight, q, r, w_comp, delta_r, lora_a, lora_b
  Dtype dtype = Dtype::kF64;
  DenseMatrix value;
};

struct Container {
  std::vector<Tensor> tensors;
  // rank, layer_name, role, fingerprint (hex), creator, kind, plus
  // kind-specific extras.
  nlohmann::json metadata = nlohmann::json::object();

  const Tensor* find(const std::string& role) const;
  const Tensor& require(const std::string& role) const;
};

bool is_tensor_role(const std::string& role);

std::uint32_t crc32c(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_container(const Container& c);

/// Throws BadMagic, UnsupportedVersion, CorruptHeader, TruncatedPayload,
/// ChecksumMismatch.
Container decode_container(std::span<const std::uint8_t> bytes);

/// Throws Io on filesystem failure, plus everything encode/decode throw.
void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace qrlora
