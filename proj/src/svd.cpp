// SPDX-License-Identifier: Apache-2.0
#include "galore/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "galore/rng.hpp"

namespace galore {

namespace {

thread_local DecompositionLog* active_log = nullptr;

constexpr int kMaxSweeps = 60;
constexpr double kNullColumnTol = 1e-12;

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

void rotate(std::span<double> x, std::span<double> y, double c, double s) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i], yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

// De Rijk ordering: largest rows first at the start of every sweep.
void sort_rows_by_norm(Matrix& w, Matrix& acc, std::vector<double>& norm2) {
  const std::size_t k = w.rows();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norm2[a] > norm2[b]; });
  Matrix w_sorted(k, w.cols());
  Matrix acc_sorted(acc.rows(), acc.cols());
  std::vector<double> n_sorted(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::copy(w.row(order[j]).begin(), w.row(order[j]).end(), w_sorted.row(j).begin());
    if (!acc.empty())
      std::copy(acc.row(order[j]).begin(), acc.row(order[j]).end(), acc_sorted.row(j).begin());
    n_sorted[j] = norm2[order[j]];
  }
  w = std::move(w_sorted);
  acc = std::move(acc_sorted);
  norm2 = std::move(n_sorted);
}

struct JacobiOutput {
  Matrix vectors;       // L×k, columns are the normalized rotated rows of W
  Matrix accumulated;   // k×k, column j is the j-th accumulated rotation (empty if not requested)
  std::vector<double> sigma;
};

// Orthogonalizes the rows of `w` (k rows of length L, k <= L) by plane
// rotations. Row j of the result, divided by its norm, is a singular vector on
// the long side; the accumulated rotations give the short side.
JacobiOutput jacobi_rows(Matrix w, bool need_accumulated, double frobenius) {
  const std::size_t k = w.rows(), len = w.cols();
  Matrix acc = need_accumulated ? Matrix::identity(k) : Matrix();

  const double tau =
      std::max(1e-14, static_cast<double>(len) * std::numeric_limits<double>::epsilon());
  const double null_norm = kNullColumnTol * frobenius;

  std::vector<double> norm2(k);
  for (std::size_t j = 0; j < k; ++j) norm2[j] = dot(w.row(j), w.row(j));

  int sweep = 0;
  for (;; ++sweep) {
    if (sweep == kMaxSweeps) {
      throw NumericalError("exact_svd: one-sided Jacobi did not converge after " +
                           std::to_string(kMaxSweeps) + " sweeps");
    }
    bool rotated = false;
    // Norms are updated in closed form inside a sweep and refreshed here.
    for (std::size_t j = 0; j < k; ++j) norm2[j] = dot(w.row(j), w.row(j));
    sort_rows_by_norm(w, acc, norm2);
    for (std::size_t p = 0; p + 1 < k; ++p) {
      for (std::size_t q = p + 1; q < k; ++q) {
        const double alpha = norm2[p], beta = norm2[q];
        if (std::sqrt(alpha) <= null_norm || std::sqrt(beta) <= null_norm) continue;
        const double gamma = dot(w.row(p), w.row(q));
        if (std::abs(gamma) <= tau * std::sqrt(alpha) * std::sqrt(beta)) continue;

        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t =
            std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(w.row(p), w.row(q), c, s);
        if (need_accumulated) rotate(acc.row(p), acc.row(q), c, s);
        norm2[p] = alpha - t * gamma;
        norm2[q] = beta + t * gamma;
        rotated = true;
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(k);
  for (std::size_t j = 0; j < k; ++j) sigma[j] = std::sqrt(norm2[j]);

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  JacobiOutput out;
  out.vectors = Matrix(len, k);
  out.sigma.resize(k);
  std::size_t nonnull = 0;
  for (std::size_t jj = 0; jj < k; ++jj) {
    const std::size_t j = order[jj];
    out.sigma[jj] = sigma[j];
    if (sigma[j] > null_norm && sigma[j] > 0.0) {
      ++nonnull;
      auto src = w.row(j);
      for (std::size_t i = 0; i < len; ++i) out.vectors(i, jj) = src[i] / sigma[j];
    }
  }
  if (nonnull < k) {
    // Null directions sit at the end after sorting; qr_thin fills them with an
    // orthonormal completion and reproduces the others up to sign.
    Matrix completed = qr_thin(out.vectors);
    for (std::size_t jj = 0; jj < nonnull; ++jj) {
      double d = 0.0;
      for (std::size_t i = 0; i < len; ++i) d += completed(i, jj) * out.vectors(i, jj);
      const double flip = d < 0.0 ? -1.0 : 1.0;
      for (std::size_t i = 0; i < len; ++i) out.vectors(i, jj) = flip * completed(i, jj);
    }
    for (std::size_t jj = nonnull; jj < k; ++jj)
      for (std::size_t i = 0; i < len; ++i) out.vectors(i, jj) = completed(i, jj);
  }

  if (need_accumulated) {
    out.accumulated = Matrix(k, k);
    for (std::size_t jj = 0; jj < k; ++jj) {
      auto src = acc.row(order[jj]);
      for (std::size_t i = 0; i < k; ++i) out.accumulated(i, jj) = src[i];
    }
  }
  return out;
}

void check_finite(const Matrix& a) {
  if (!all_finite(a)) throw NumericalError("exact_svd: input contains NaN or Inf");
}

// Shared driver; `need_vt` skips the right-side work when nobody reads it.
//
// The long side is first reduced by a thin QR of the norm-sorted columns,
// X·Π = Q·R, and the Jacobi sweeps run on the rows of the small square R.
// With R·J = Ŵ (orthogonal rows) we get X·Π = (Q·J)·Σ·U_xᵀ, so the long-side
// singular vectors are Q·J and the short-side ones are Π·U_x.
SvdResult svd_impl(const Matrix& a, bool need_vt) {
  check_finite(a);
  const std::size_t m = a.rows(), n = a.cols();
  SvdResult res;
  if (m == 0 || n == 0) {
    res.u = Matrix(m, 0);
    res.vt = Matrix(0, n);
    return res;
  }
  const bool tall = m >= n;
  const double fro = frobenius_norm(a);

  Matrix x = tall ? a : transpose(a);
  const std::size_t k = x.cols();

  std::vector<double> col_norm(k, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < k; ++j) col_norm[j] += x(i, j) * x(i, j);
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t p, std::size_t q) { return col_norm[p] > col_norm[q]; });
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::vector<double> row(x.row(i).begin(), x.row(i).end());
    for (std::size_t j = 0; j < k; ++j) x(i, j) = row[perm[j]];
  }

  const Matrix q = qr_thin(x);
  const bool need_long = tall || need_vt;
  JacobiOutput jac = jacobi_rows(matmul_tn(q, x), need_long, fro);

  Matrix short_side(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) short_side(perm[i], j) = jac.vectors(i, j);

  res.singular_values = std::move(jac.sigma);
  if (tall) {
    res.u = matmul(q, jac.accumulated);
    if (need_vt) res.vt = transpose(short_side);
  } else {
    res.u = std::move(short_side);
    if (need_vt) res.vt = transpose(matmul(q, jac.accumulated));
  }

  // Sign convention on U, mirrored onto Vt.
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t best = 0;
    double best_abs = -1.0;
    for (std::size_t i = 0; i < res.u.rows(); ++i) {
      if (std::abs(res.u(i, c)) > best_abs) {
        best_abs = std::abs(res.u(i, c));
        best = i;
      }
    }
    if (res.u(best, c) < 0.0) {
      for (std::size_t i = 0; i < res.u.rows(); ++i) res.u(i, c) = -res.u(i, c);
      if (need_vt)
        for (double& v : res.vt.row(c)) v = -v;
    }
  }
  return res;
}

}  // namespace

// ---------------------------------------------------------------------------

SvdResult exact_svd(const Matrix& a) { return svd_impl(a, true); }

Matrix truncated_projection(const Matrix& a, std::size_t r) {
  const std::size_t k = std::min(a.rows(), a.cols());
  if (r < 1 || r > k) {
    throw ParameterError("truncated_projection: rank " + std::to_string(r) +
                         " out of range [1, " + std::to_string(k) + "] for " + a.shape_string());
  }
  DecompositionLog::record(a.rows(), a.cols());
  SvdResult s = svd_impl(a, false);
  return column_block(s.u, 0, r);
}

Matrix rand_subspace_project(const Matrix& a, const RsvdParams& params) {
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t width = params.rank + params.oversample;
  if (params.rank < 1 || width > std::min(m, n)) {
    throw ParameterError("rand_subspace_project: rank + oversample = " + std::to_string(width) +
                         " (rank " + std::to_string(params.rank) + ") must lie in [1, " +
                         std::to_string(std::min(m, n)) + "] for " + a.shape_string());
  }
  if (!all_finite(a)) throw NumericalError("rand_subspace_project: input contains NaN or Inf");
  DecompositionLog::record(m, n);

  SeededRng rng(params.seed);
  Matrix y;
  {
    const Matrix omega = rng.gaussian(n, width);
    y = matmul(a, omega);
  }
  for (std::size_t it = 0; it < params.power_iters; ++it) {
    y = qr_thin(y);
    const Matrix z = matmul_tn(a, y);
    y = matmul(a, z);
  }
  const Matrix q = qr_thin(y);
  const Matrix b = matmul_tn(q, a);
  const SvdResult small = svd_impl(b, false);
  Matrix p = matmul(q, column_block(small.u, 0, params.rank));
  normalize_column_signs(p);
  return p;
}

void normalize_column_signs(Matrix& m) {
  for (std::size_t c = 0; c < m.cols(); ++c) {
    std::size_t best = 0;
    double best_abs = -1.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      if (std::abs(m(i, c)) > best_abs) {
        best_abs = std::abs(m(i, c));
        best = i;
      }
    }
    if (m.rows() > 0 && m(best, c) < 0.0)
      for (std::size_t i = 0; i < m.rows(); ++i) m(i, c) = -m(i, c);
  }
}

// ---------------------------------------------------------------------------

DecompositionLog::DecompositionLog() : previous_(active_log) { active_log = this; }

DecompositionLog::~DecompositionLog() { active_log = previous_; }

void DecompositionLog::record(std::size_t rows, std::size_t cols) {
  if (active_log != nullptr) active_log->shapes_.emplace_back(rows, cols);
}

}  // namespace galore
