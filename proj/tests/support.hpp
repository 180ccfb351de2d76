// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <doctest.h>

#include "qrlora/error.hpp"

/// Runs fn and returns the code of the qrlora::Error it throws.
template <typename Fn>
qrlora::ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const qrlora::Error& e) {
    return e.code();
  }
  FAIL("expected a qrlora::Error");
  return qrlora::ErrorCode::kUsage;
}
