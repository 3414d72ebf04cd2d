// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "galore/matrix.hpp"

namespace galore {

/// Thin SVD: A = U diag(σ) Vt with U m×k, Vt k×n, k = min(m, n).
struct SvdResult {
  Matrix u;
  std::vector<double> singular_values;  // non-increasing
  Matrix vt;
};

struct RsvdParams {
  std::size_t rank = 1;
  std::size_t oversample = 8;
  std::size_t power_iters = 2;
  std::uint64_t seed = 0;
};

/// One-sided (Hestenes) Jacobi SVD with cyclic sweeps.
///
/// The long side is reduced by a Householder QR of the norm-sorted columns and
/// the sweeps run on the square triangular factor, rows re-sorted by norm at
/// the start of every sweep. A pair is rotated while
/// |a_p·a_q| > τ‖a_p‖‖a_q‖ with τ = max(1e-14, min(m,n)·ε); pairs involving a
/// vector of norm at or below 1e-12·‖A‖_F count as converged, and singular
/// vectors for such numerically null directions are completed to an
/// orthonormal set. Each column of U has its largest-magnitude entry positive
/// (ties: first).
///
/// Throws NumericalError on non-finite input or if 60 sweeps do not converge.
SvdResult exact_svd(const Matrix& a);

/// First r columns of the exact U, with the sign convention of exact_svd.
Matrix truncated_projection(const Matrix& a, std::size_t r);

/// Randomized subspace iteration: an m×r orthonormal basis approximating the
/// top-r left singular subspace of A.
///
///   Ω ~ N(0,1)^{n×(r+p)} from params.seed;  Y ← AΩ
///   repeat q times: Y ← qr_thin(Y); Y ← A(AᵀY)
///   Q ← qr_thin(Y);  B ← QᵀA;  P ← Q·U_B[:, :r]
///
/// Requires 1 <= r and r + p <= min(m, n). Deterministic in (A, params).
Matrix rand_subspace_project(const Matrix& a, const RsvdParams& params);

/// Records the shape of every matrix handed to truncated_projection or
/// rand_subspace_project on this thread while alive.
class DecompositionLog {
 public:
  DecompositionLog();
  ~DecompositionLog();
  DecompositionLog(const DecompositionLog&) = delete;
  DecompositionLog& operator=(const DecompositionLog&) = delete;

  [[nodiscard]] const std::vector<std::pair<std::size_t, std::size_t>>& shapes() const noexcept {
    return shapes_;
  }
  [[nodiscard]] std::size_t count() const noexcept { return shapes_.size(); }

  static void record(std::size_t rows, std::size_t cols);

 private:
  DecompositionLog* previous_;
  std::vector<std::pair<std::size_t, std::size_t>> shapes_;
};

/// Flip each column of M so its largest-magnitude entry is positive.
void normalize_column_signs(Matrix& m);

}  // namespace galore
