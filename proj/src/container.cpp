// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrlora/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <boost/crc.hpp>

#include "qrlora/error.hpp"

namespace qrlora {

namespace {

using nlohmann::json;

constexpr std::uint8_t kMagic[4] = {'Q', 'R', 'L', 'A'};
constexpr std::size_t kPreambleLen = 4 + 4 + 8;
constexpr std::size_t kTrailerLen = 4;

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
  }
}

template <class T>
T get_le(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{in[at + i]} << (8 * i);
  return static_cast<T>(v);
}

std::size_t element_size(Dtype d) { return d == Dtype::kF64 ? 8 : 4; }

const char* dtype_name(Dtype d) { return d == Dtype::kF64 ? "f64" : "f32"; }

[[noreturn]] void corrupt(const std::string& what) {
  throw Error(ErrorCode::kCorruptHeader, "corrupt header: " + what);
}

}  // namespace

const Tensor* Container::find(const std::string& role) const {
  for (const Tensor& t : tensors) {
    if (t.role == role) return &t;
  }
  return nullptr;
}

const Tensor& Container::require(const std::string& role) const {
  if (const Tensor* t = find(role)) return *t;
  throw Error(ErrorCode::kKindUnavailable, "container has no '" + role + "' tensor");
}

bool is_tensor_role(const std::string& role) {
  return role == "weight" || role == "q" || role == "r" || role == "w_comp" ||
         role == "delta_r" || role == "lora_a" || role == "lora_b";
}

std::uint32_t crc32c(std::span<const std::uint8_t> bytes) {
  boost::crc_optimal<32, 0x1EDC6F41, 0xFFFFFFFF, 0xFFFFFFFF, true, true> crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

std::vector<std::uint8_t> encode_container(const Container& c) {
  std::vector<std::uint8_t> payload;
  json tensors = json::array();
  for (const Tensor& t : c.tensors) {
    if (!is_tensor_role(t.role)) {
      throw Error(ErrorCode::kUsage, "unknown tensor role '" + t.role + "'");
    }
    if (t.value.empty()) throw Error(ErrorCode::kShapeError, "tensor '" + t.name + "' is empty");
    const std::size_t offset = payload.size();
    for (double v : t.value.data()) {
      if (t.dtype == Dtype::kF64) {
        put_le(payload, std::bit_cast<std::uint64_t>(v));
      } else {
        put_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
    tensors.push_back({{"name", t.name},
                       {"role", t.role},
                       {"dtype", dtype_name(t.dtype)},
                       {"shape", {t.value.rows(), t.value.cols()}},
                       {"offset", offset},
                       {"length", payload.size() - offset}});
  }
  const std::string header = json{{"metadata", c.metadata}, {"tensors", tensors}}.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, kContainerVersion);
  put_le(out, static_cast<std::uint64_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  put_le(out, crc32c(payload));
  return out;
}

Container decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic, "not a QRLA container");
  }
  if (bytes.size() < kPreambleLen) throw Error(ErrorCode::kTruncatedPayload, "truncated preamble");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kContainerVersion) {
    throw Error(ErrorCode::kUnsupportedVersion,
                "unsupported container version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - kPreambleLen) {
    throw Error(ErrorCode::kTruncatedPayload, "header runs past end of file");
  }
  const auto* hb = reinterpret_cast<const char*>(bytes.data() + kPreambleLen);
  json header = json::parse(hb, hb + header_len, nullptr, false);
  if (header.is_discarded() || !header.is_object()) corrupt("header is not a JSON object");
  if (!header.contains("tensors") || !header["tensors"].is_array()) corrupt("missing tensor table");

  Container c;
  if (header.contains("metadata")) {
    if (!header["metadata"].is_object()) corrupt("metadata is not an object");
    c.metadata = header["metadata"];
  }

  struct Slot {
    std::size_t rows, cols, offset, length;
  };
  std::vector<Slot> slots;
  std::size_t expected_offset = 0;
  try {
    for (const json& entry : header["tensors"]) {
      Tensor t;
      t.name = entry.at("name").get<std::string>();
      t.role = entry.at("role").get<std::string>();
      if (!is_tensor_role(t.role)) corrupt("unknown tensor role '" + t.role + "'");
      const std::string dtype = entry.at("dtype").get<std::string>();
      if (dtype == "f64") {
        t.dtype = Dtype::kF64;
      } else if (dtype == "f32") {
        t.dtype = Dtype::kF32;
      } else {
        corrupt("unknown dtype '" + dtype + "'");
      }
      const json& shape = entry.at("shape");
      if (!shape.is_array() || shape.size() != 2) corrupt("shape must be [rows, cols]");
      const auto rows = shape[0].get<std::size_t>();
      const auto cols = shape[1].get<std::size_t>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto length = entry.at("length").get<std::size_t>();
      if (rows == 0 || cols == 0) corrupt("tensor '" + t.name + "' has a zero dimension");
      if (length != rows * cols * element_size(t.dtype)) {
        corrupt("tensor '" + t.name + "' length does not match its shape");
      }
      if (offset != expected_offset) corrupt("tensor offsets overlap or leave gaps");
      expected_offset = offset + length;
      c.tensors.push_back(std::move(t));
      slots.push_back({rows, cols, offset, length});
    }
  } catch (const json::exception& e) {
    corrupt(e.what());
  }

  const std::size_t payload_start = kPreambleLen + header_len;
  const std::size_t available = bytes.size() - payload_start;
  if (available < expected_offset + kTrailerLen) {
    throw Error(ErrorCode::kTruncatedPayload, "payload shorter than the header declares");
  }
  if (available > expected_offset + kTrailerLen) corrupt("trailing bytes after checksum");
  const auto payload = bytes.subspan(payload_start, expected_offset);
  if (crc32c(payload) != get_le<std::uint32_t>(bytes, payload_start + expected_offset)) {
    throw Error(ErrorCode::kChecksumMismatch, "payload checksum mismatch");
  }

  for (std::size_t k = 0; k < c.tensors.size(); ++k) {
    Tensor& t = c.tensors[k];
    t.value = DenseMatrix(slots[k].rows, slots[k].cols);
    auto dst = t.value.data();
    const std::size_t esz = element_size(t.dtype);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const std::size_t at = slots[k].offset + i * esz;
      if (t.dtype == Dtype::kF64) {
        dst[i] = std::bit_cast<double>(get_le<std::uint64_t>(payload, at));
      } else {
        dst[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(payload, at)));
      }
    }
  }
  return c;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to '" + path.string() + "'");
}

void write_container(const std::filesystem::path& path, const Container& c) {
  write_file_bytes(path, encode_container(c));
}

Container read_container(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_container(bytes);
}

}  // namespace qrlora
