// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>

#include "qrlora/matrix.hpp"

namespace qrlora {

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed of the named sub-stream `path` under `seed`. Each tensor draws from
/// its own stream, so adding a draw somewhere never shifts another tensor.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept;

/// Bit-reproducible generator: mt19937_64 engine with hand-rolled
/// uniform/normal transforms (the std distributions are not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on (0, 1).
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

/// rows x cols matrix of N(0, sigma^2) draws.
DenseMatrix normal_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                          double sigma = 1.0);

}  // namespace qrlora
