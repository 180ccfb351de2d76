// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>

#include "oracles.hpp"
#include "qrlora/artifacts.hpp"
#include "qrlora/container.hpp"
#include "support.hpp"

using namespace qrlora;
namespace fs = std::filesystem;

namespace {

std::uint64_t header_len(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[8 + i];
  return v;
}

std::size_t payload_begin(const std::vector<std::uint8_t>& bytes) {
  return 16 + static_cast<std::size_t>(header_len(bytes));
}

Container sample_adapter(std::uint64_t seed) {
  Adapter a = init_adapter(decompose(oracle::random_matrix(9, 7, seed), 3), "blk", "style");
  a.delta_r = oracle::random_matrix(3, 9, seed + 1);
  return adapter_container(a);
}

std::vector<std::uint8_t> reencode_header(const std::vector<std::uint8_t>& bytes,
                                          const std::string& header) {
  std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 8);
  std::uint64_t len = header.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), bytes.begin() + static_cast<std::ptrdiff_t>(payload_begin(bytes)), bytes.end());
  return out;
}

std::string header_of(const std::vector<std::uint8_t>& bytes) {
  return std::string(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(payload_begin(bytes)));
}

}  // namespace

TEST_CASE("crc32c check value") {
  const std::string s = "123456789";
  CHECK(crc32c({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) == 0xE3069283u);
}

TEST_CASE("1x1 zero tensor round-trips to identical bytes") {
  Container c;
  c.tensors.push_back({"w", "weight", Dtype::kF64, DenseMatrix(1, 1)});
  c.metadata["kind"] = "weight";
  const auto bytes = encode_container(c);
  CHECK(std::memcmp(bytes.data(), "QRLA", 4) == 0);
  const Container back = decode_container(bytes);
  CHECK(back.require("weight").value == DenseMatrix(1, 1));
  CHECK(encode_container(back) == bytes);
}

TEST_CASE("f64 tensors round-trip bit-exactly") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Container c = sample_adapter(seed);
    const Container back = decode_container(encode_container(c));
    REQUIRE(back.tensors.size() == c.tensors.size());
    for (std::size_t i = 0; i < c.tensors.size(); ++i) {
      const auto& x = c.tensors[i].value;
      const auto& y = back.tensors[i].value;
      REQUIRE(x.same_shape(y));
      CHECK(std::memcmp(x.data().data(), y.data().data(), x.size() * sizeof(double)) == 0);
      CHECK(back.tensors[i].name == c.tensors[i].name);
      CHECK(back.tensors[i].role == c.tensors[i].role);
    }
    CHECK(back.metadata == c.metadata);
  }
  DenseMatrix special{{0.0, -0.0, std::numeric_limits<double>::denorm_min(),
                       std::numeric_limits<double>::max()}};
  Container c;
  c.tensors.push_back({"w", "weight", Dtype::kF64, special});
  const DenseMatrix back = decode_container(encode_container(c)).require("weight").value;
  CHECK(std::memcmp(back.data().data(), special.data().data(), 4 * sizeof(double)) == 0);
}

TEST_CASE("f32 storage reloads within one f32 ulp") {
  const DenseMatrix w = oracle::random_matrix(13, 11, 3);
  const Container c = weight_container(w, "l", Dtype::kF32);
  const DenseMatrix back = load_weight(decode_container(encode_container(c)));
  for (std::size_t k = 0; k < w.size(); ++k) {
    const float f = static_cast<float>(w.data()[k]);
    const double ulp = std::nextafter(f, std::numeric_limits<float>::infinity()) - f;
    CHECK(std::abs(back.data()[k] - w.data()[k]) <= std::abs(ulp));
  }
}

TEST_CASE("loaded adapter reproduces its stored fingerprint") {
  const Container c = decode_container(encode_container(sample_adapter(5)));
  const Adapter a = load_adapter(c);
  const QrBasis& b = *a.basis;
  CHECK(fingerprint_hex(basis_fingerprint(b.q, b.r_mat, b.w_comp, b.rank)) ==
        c.metadata.at("fingerprint").get<std::string>());
  CHECK(a.role == "style");
  CHECK(a.layer_name == "blk");
}

TEST_CASE("decode rejects malformed files") {
  const auto good = encode_container(sample_adapter(2));
  SUBCASE("bad magic") {
    auto b = good;
    std::memcpy(b.data(), "XXXX", 4);
    CHECK(code_of([&] { decode_container(b); }) == ErrorCode::kBadMagic);
    CHECK(code_of([&] { decode_container(std::vector<std::uint8_t>{'Q', 'R'}); }) ==
          ErrorCode::kBadMagic);
  }
  SUBCASE("unsupported version") {
    auto b = good;
    b[4] = 2;
    CHECK(code_of([&] { decode_container(b); }) == ErrorCode::kUnsupportedVersion);
  }
  SUBCASE("truncated payload") {
    auto b = good;
    b.resize(b.size() - 9);
    CHECK(code_of([&] { decode_container(b); }) == ErrorCode::kTruncatedPayload);
  }
  SUBCASE("header length past end of file") {
    auto b = good;
    b[15] = 0x7f;
    CHECK(code_of([&] { decode_container(b); }) == ErrorCode::kTruncatedPayload);
  }
  SUBCASE("header that is not JSON") {
    std::string h = header_of(good);
    h[0] = '[';
    h[1] = '!';
    CHECK(code_of([&] { decode_container(reencode_header(good, h)); }) == ErrorCode::kCorruptHeader);
  }
  SUBCASE("overlapping offsets") {
    auto j = nlohmann::json::parse(header_of(good));
    j["tensors"][1]["offset"] = 8;
    CHECK(code_of([&] { decode_container(reencode_header(good, j.dump())); }) ==
          ErrorCode::kCorruptHeader);
  }
  SUBCASE("unknown role") {
    auto j = nlohmann::json::parse(header_of(good));
    j["tensors"][0]["role"] = "bias";
    CHECK(code_of([&] { decode_container(reencode_header(good, j.dump())); }) ==
          ErrorCode::kCorruptHeader);
  }
  SUBCASE("length disagrees with shape") {
    auto j = nlohmann::json::parse(header_of(good));
    j["tensors"][0]["shape"][0] = 1;
    CHECK(code_of([&] { decode_container(reencode_header(good, j.dump())); }) ==
          ErrorCode::kCorruptHeader);
  }
}

TEST_CASE("every single-byte payload flip is detected") {
  const auto good = encode_container(sample_adapter(3));
  const std::size_t begin = payload_begin(good);
  for (std::size_t k = begin; k < good.size(); ++k) {
    for (std::uint8_t mask : {std::uint8_t{0x01}, std::uint8_t{0x80}, std::uint8_t{0xff}}) {
      auto b = good;
      b[k] ^= mask;
      CHECK(code_of([&] { decode_container(b); }) == ErrorCode::kChecksumMismatch);
    }
  }
}

TEST_CASE("files") {
  const fs::path dir = fs::temp_directory_path() / "qrlora_test_container";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Container c = sample_adapter(4);
  write_container(dir / "a.qrla", c);
  const Container back = read_container(dir / "a.qrla");
  CHECK(encode_container(back) == encode_container(c));
  CHECK(code_of([&] { read_container(dir / "missing.qrla"); }) == ErrorCode::kIo);
  CHECK(code_of([&] { write_container(dir / "no" / "such" / "x.qrla", c); }) == ErrorCode::kIo);
  fs::remove_all(dir);
}

TEST_CASE("verify accepts toolchain output") {
  const DenseMatrix w = oracle::random_matrix(10, 8, 6);
  const auto basis = decompose(w, 4);
  for (const Container& c : {weight_container(w, "l"), basis_container(*basis, "l", oracle::fro(w)),
                             sample_adapter(7)}) {
    for (const CheckResult& r : verify_container(c)) {
      INFO(r.name, ": ", r.detail);
      CHECK(r.passed);
    }
  }
}

TEST_CASE("verify rejects a tampered basis") {
  const DenseMatrix w = oracle::random_matrix(10, 8, 6);
  Container c = basis_container(*decompose(w, 4), "l", oracle::fro(w));
  for (Tensor& t : c.tensors) {
    if (t.role == "q") t.value(0, 0) += 1e-6;
  }
  bool any_failed = false;
  for (const CheckResult& r : verify_container(c)) any_failed |= !r.passed;
  CHECK(any_failed);
  CHECK(code_of([&] { load_basis(c); }) == ErrorCode::kVerificationFailed);
}
