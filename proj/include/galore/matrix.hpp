// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrix of doubles and the handful of kernels the optimizer
// needs. Everything here is a pure function of its inputs.
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "galore/errors.hpp"

namespace galore {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  Matrix(const Matrix& other);
  Matrix(Matrix&& other) noexcept = default;
  Matrix& operator=(const Matrix& other);
  Matrix& operator=(Matrix&& other) noexcept = default;
  ~Matrix() = default;

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::size_t rows, std::size_t cols, std::vector<double> data);

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] std::span<double> row(std::size_t i) noexcept {
    return {data_.data() + i * cols_, cols_};
  }
  [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  [[nodiscard]] bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  [[nodiscard]] std::string shape_string() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

/// A * B.
Matrix matmul(const Matrix& a, const Matrix& b);
/// Aᵀ * B without materializing Aᵀ.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// A * Bᵀ without materializing Bᵀ.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

/// Columns [first, first + count) of A.
Matrix column_block(const Matrix& a, std::size_t first, std::size_t count);
/// Horizontal concatenation; all blocks must share a row count.
Matrix hconcat(std::span<const Matrix> blocks);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);

/// Max-norm deviation of QᵀQ from the identity.
double orthonormality_error(const Matrix& q);

/// Thin QR via Householder reflections; returns only Q (rows x cols) with
/// orthonormal columns and non-negative diag(R). Columns whose remaining norm
/// drops below 1e-12 * ‖A‖_F are replaced by a fixed-seed Gaussian direction so
/// the output is always a full orthonormal basis.
Matrix qr_thin(const Matrix& a);

// ---------------------------------------------------------------------------
// Allocation accounting
// ---------------------------------------------------------------------------

/// While alive, records the element count of every Matrix buffer allocated on
/// this thread. Probes nest; only the innermost one records.
class AllocationProbe {
 public:
  AllocationProbe();
  ~AllocationProbe();
  AllocationProbe(const AllocationProbe&) = delete;
  AllocationProbe& operator=(const AllocationProbe&) = delete;

  [[nodiscard]] std::size_t largest() const noexcept { return largest_; }
  [[nodiscard]] std::size_t count() const noexcept { return count_; }

  static void record(std::size_t elements) noexcept;

 private:
  AllocationProbe* previous_;
  std::size_t largest_ = 0;
  std::size_t count_ = 0;
};

}  // namespace galore
