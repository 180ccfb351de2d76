// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrlora/matrix.hpp"

#include <cmath>
#include <string>

#include "qrlora/error.hpp"

namespace qrlora {

namespace {

std::string shape_str(const DenseMatrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) {
    throw Error(ErrorCode::kShapeError, "matrix dimensions must be positive");
  }
  data_.assign(rows * cols, fill);
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) {
    throw Error(ErrorCode::kShapeError, "matrix dimensions must be positive");
  }
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::kShapeError,
                "data length " + std::to_string(data_.size()) + " does not match " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  if (rows_ == 0 || cols_ == 0) {
    throw Error(ErrorCode::kShapeError, "matrix dimensions must be positive");
  }
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw Error(ErrorCode::kShapeError, "ragged matrix literal");
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
  DenseMatrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

DenseMatrix DenseMatrix::transpose() const {
  if (empty()) return {};
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  }
  return t;
}

bool DenseMatrix::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& other) {
  require_same_shape(*this, other, "matrix addition");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& other) {
  require_same_shape(*this, other, "matrix subtraction");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

DenseMatrix& DenseMatrix::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": shapes " + shape_str(a) +
                                               " and " + shape_str(b) + " differ");
  }
}

void require_finite(const DenseMatrix& m, const char* what) {
  if (!m.all_finite()) {
    throw Error(ErrorCode::kNonFinite, std::string(what) + ": non-finite entry");
  }
}

DenseMatrix take_cols(const DenseMatrix& m, std::size_t c0, std::size_t count) {
  if (count == 0 || c0 + count > m.cols()) {
    throw Error(ErrorCode::kShapeError, "column block out of range");
  }
  DenseMatrix out(m.rows(), count);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < count; ++j) out(i, j) = m(i, c0 + j);
  }
  return out;
}

DenseMatrix take_rows(const DenseMatrix& m, std::size_t r0, std::size_t count) {
  if (count == 0 || r0 + count > m.rows()) {
    throw Error(ErrorCode::kShapeError, "row block out of range");
  }
  DenseMatrix out(count, m.cols());
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(r0 + i, j);
  }
  return out;
}

}  // namespace qrlora
