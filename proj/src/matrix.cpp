// SPDX-License-Identifier: Apache-2.0
#include "galore/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "galore/rng.hpp"

namespace galore {

namespace {

thread_local AllocationProbe* active_probe = nullptr;

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

// Seed for the replacement directions qr_thin draws on rank deficiency.
constexpr std::uint64_t kQrCompletionSeed = 0x51A7C0DE2024ULL;

}  // namespace

// ---------------------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  AllocationProbe::record(data_.size());
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  AllocationProbe::record(data_.size());
}

Matrix::Matrix(const Matrix& other) : rows_(other.rows_), cols_(other.cols_), data_(other.data_) {
  AllocationProbe::record(data_.size());
}

Matrix& Matrix::operator=(const Matrix& other) {
  if (this != &other) {
    rows_ = other.rows_;
    cols_ = other.cols_;
    data_ = other.data_;
    AllocationProbe::record(data_.size());
  }
  return *this;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Matrix Matrix::from_rows(std::size_t rows, std::size_t cols, std::vector<double> data) {
  if (data.size() != rows * cols) {
    throw DimensionError("Matrix::from_rows: data length does not match shape");
  }
  Matrix out;
  out.rows_ = rows;
  out.cols_ = cols;
  out.data_ = std::move(data);
  AllocationProbe::record(out.data_.size());
  return out;
}

std::string Matrix::shape_string() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

// ---------------------------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + a.shape_string() + " * " +
                         b.shape_string() + ")");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: row counts differ (" + a.shape_string() + "ᵀ * " +
                         b.shape_string() + ")");
  }
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Matrix c(m, n);
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a.row(p).data();
    const double* bp = b.row(p).data();
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: column counts differ (" + a.shape_string() + " * " +
                         b.shape_string() + "ᵀ)");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.row(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b.row(j).data();
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c(i, j) = s;
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto z = c.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
  return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c(a);
  auto y = b.data();
  auto z = c.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += y[i];
  return c;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix c(a);
  auto y = b.data();
  auto z = c.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] -= y[i];
  return c;
}

Matrix scale(const Matrix& a, double s) {
  Matrix c(a);
  for (double& x : c.data()) x *= s;
  return c;
}

Matrix column_block(const Matrix& a, std::size_t first, std::size_t count) {
  if (first + count > a.cols()) {
    throw DimensionError("column_block: columns [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") out of range for " + a.shape_string());
  }
  Matrix out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    std::copy_n(a.row(i).begin() + static_cast<std::ptrdiff_t>(first), count, out.row(i).begin());
  return out;
}

Matrix hconcat(std::span<const Matrix> blocks) {
  if (blocks.empty()) return {};
  const std::size_t rows = blocks.front().rows();
  std::size_t cols = 0;
  for (const Matrix& b : blocks) {
    if (b.rows() != rows) throw DimensionError("hconcat: row counts differ");
    cols += b.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    auto dst = out.row(i).begin();
    for (const Matrix& b : blocks) dst = std::copy(b.row(i).begin(), b.row(i).end(), dst);
  }
  return out;
}

double frobenius_norm(const Matrix& a) {
  // Scaled accumulation avoids overflow for very large entries.
  const double amax = max_abs(a);
  if (amax == 0.0 || !std::isfinite(amax)) return amax;
  double s = 0.0;
  for (double x : a.data()) {
    const double y = x / amax;
    s += y * y;
  }
  return amax * std::sqrt(s);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double x) { return std::isfinite(x); });
}

double orthonormality_error(const Matrix& q) {
  const Matrix g = matmul_tn(q, q);
  double err = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      err = std::max(err, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
  return err;
}

// ---------------------------------------------------------------------------

Matrix qr_thin(const Matrix& a) {
  const std::size_t m = a.rows(), k = a.cols();
  if (m < k) {
    throw DimensionError("qr_thin: needs rows >= cols, got " + a.shape_string());
  }
  if (k == 0) return Matrix(m, 0);

  const double tol = 1e-12 * frobenius_norm(a);
  SeededRng completion(kQrCompletionSeed);

  // Row c of `w` holds column c of A, so reflections stream over contiguous memory.
  Matrix w = transpose(a);
  Matrix reflectors(k, m);  // row j: Householder vector v_j in entries [j, m)
  std::vector<double> tau(k, 0.0);
  std::vector<double> sign(k, 1.0);

  for (std::size_t j = 0; j < k; ++j) {
    auto col = w.row(j);
    double norm2 = 0.0;
    for (std::size_t i = j; i < m; ++i) norm2 += col[i] * col[i];
    double norm = std::sqrt(norm2);

    if (!(norm > tol)) {
      // Numerically dependent column: substitute a random direction in the
      // orthogonal complement of the columns already processed.
      norm2 = 0.0;
      for (std::size_t i = j; i < m; ++i) {
        col[i] = completion.normal();
        norm2 += col[i] * col[i];
      }
      norm = std::sqrt(norm2);
    }

    const double alpha = col[j] >= 0.0 ? -norm : norm;
    auto v = reflectors.row(j);
    for (std::size_t i = j; i < m; ++i) v[i] = col[i];
    v[j] -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t i = j; i < m; ++i) vnorm2 += v[i] * v[i];
    tau[j] = vnorm2 > 0.0 ? 2.0 / vnorm2 : 0.0;
    sign[j] = alpha < 0.0 ? -1.0 : 1.0;

    for (std::size_t c = j + 1; c < k; ++c) {
      auto wc = w.row(c);
      double s = 0.0;
      for (std::size_t i = j; i < m; ++i) s += v[i] * wc[i];
      s *= tau[j];
      for (std::size_t i = j; i < m; ++i) wc[i] -= s * v[i];
    }
  }

  // Accumulate Q = H_0 ... H_{k-1} [I; 0], again one row per column of Q.
  Matrix qt(k, m);
  for (std::size_t j = 0; j < k; ++j) qt(j, j) = 1.0;
  for (std::size_t jj = k; jj-- > 0;) {
    auto v = reflectors.row(jj);
    for (std::size_t c = jj; c < k; ++c) {
      auto qc = qt.row(c);
      double s = 0.0;
      for (std::size_t i = jj; i < m; ++i) s += v[i] * qc[i];
      s *= tau[jj];
      if (s == 0.0) continue;
      for (std::size_t i = jj; i < m; ++i) qc[i] -= s * v[i];
    }
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (sign[j] < 0.0)
      for (double& x : qt.row(j)) x = -x;
  }
  return transpose(qt);
}

// ---------------------------------------------------------------------------

AllocationProbe::AllocationProbe() : previous_(active_probe) { active_probe = this; }

AllocationProbe::~AllocationProbe() { active_probe = previous_; }

void AllocationProbe::record(std::size_t elements) noexcept {
  if (active_probe == nullptr || elements == 0) return;
  active_probe->largest_ = std::max(active_probe->largest_, elements);
  ++active_probe->count_;
}

}  // namespace galore
