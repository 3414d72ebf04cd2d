// SPDX-License-Identifier: Apache-2.0
#include "galore/oracles.hpp"

#include <cmath>
#include <string>

namespace galore::oracle {

namespace {

Matrix loop_product(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

Matrix loop_transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double bias(double beta, std::size_t t) {
  double pw = 1.0;
  for (std::size_t i = 0; i < t; ++i) pw *= beta;
  return 1.0 - pw;
}

}  // namespace

DenseResidualTrace::DenseResidualTrace(Matrix basis, std::size_t cols)
    : p(std::move(basis)),
      m(p.rows(), cols),
      v(p.rows(), cols),
      mp(p.cols(), cols),
      vp(p.cols(), cols),
      dm_exact(p.rows(), cols),
      dv_exact(p.rows(), cols),
      dropped(p.rows(), cols) {}

void trace_step(const Matrix& g, const Matrix& p, DenseResidualTrace& trace,
                const OptimizerConfig& cfg) {
  if (!(p == trace.p)) throw ContractError("trace_step: projection changed mid-trace");
  if (g.rows() != trace.m.rows() || g.cols() != trace.m.cols())
    throw DimensionError("trace_step: gradient " + g.shape_string() + " vs trace shape");

  const std::size_t rows = g.rows(), cols = g.cols(), rank = p.cols();
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const Matrix pt = loop_transpose(p);
  const Matrix r = loop_product(pt, g);
  const Matrix ghat = loop_product(p, r);
  Matrix r2(rank, cols);
  for (std::size_t k = 0; k < rank; ++k)
    for (std::size_t j = 0; j < cols; ++j) r2(k, j) = r(k, j) * r(k, j);
  const Matrix p_r2 = loop_product(p, r2);

  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      trace.m(i, j) = b1 * trace.m(i, j) + (1 - b1) * g(i, j);
      trace.v(i, j) = b2 * trace.v(i, j) + (1 - b2) * g(i, j) * g(i, j);
    }
  for (std::size_t k = 0; k < rank; ++k)
    for (std::size_t j = 0; j < cols; ++j) {
      trace.mp(k, j) = b1 * trace.mp(k, j) + (1 - b1) * r(k, j);
      trace.vp(k, j) = b2 * trace.vp(k, j) + (1 - b2) * r2(k, j);
    }

  const Matrix pmp = loop_product(p, trace.mp);
  const Matrix pvp = loop_product(p, trace.vp);
  Matrix d(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      trace.dm_exact(i, j) = trace.m(i, j) - pmp(i, j);
      trace.dv_exact(i, j) = trace.v(i, j) - pvp(i, j);
      const double dg = g(i, j) - ghat(i, j);
      d(i, j) = dg * dg + ghat(i, j) * ghat(i, j) - p_r2(i, j);
    }
  trace.dropped_history.push_back(d);
  ++trace.t;

  // Re-sum the dropped terms from the history each step.
  Matrix acc(rows, cols);
  const std::size_t t = trace.t;
  for (std::size_t s = 1; s <= t; ++s) {
    double w = 1 - b2;
    for (std::size_t e = s; e < t; ++e) w *= b2;
    const Matrix& ds = trace.dropped_history[s - 1];
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) acc(i, j) += w * ds(i, j);
  }
  trace.dropped = std::move(acc);
}

Matrix recursion_dv(const DenseResidualTrace& trace) {
  Matrix out(trace.dv_exact.rows(), trace.dv_exact.cols());
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      out(i, j) = trace.dv_exact(i, j) - trace.dropped(i, j);
  return out;
}

UpdateError dense_update_error(const DenseResidualTrace& trace, std::size_t t,
                               const OptimizerConfig& cfg) {
  if (trace.t != t || t == 0) {
    throw ContractError("dense_update_error: trace is at step " + std::to_string(trace.t) +
                        ", asked for " + std::to_string(t));
  }
  const double c1 = bias(cfg.beta1, t), c2 = bias(cfg.beta2, t);
  const Matrix pmp = loop_product(trace.p, trace.mp);
  const Matrix pvp = loop_product(trace.p, trace.vp);
  const std::size_t rows = trace.m.rows(), cols = trace.m.cols();

  UpdateError out{Matrix(rows, cols), Matrix(rows, cols), pvp};
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double full = (trace.m(i, j) / c1) / (std::sqrt(trace.v(i, j) / c2) + cfg.eps);
      const double low_v = pvp(i, j) > 0 ? pvp(i, j) / c2 : 0.0;
      const double low = (pmp(i, j) / c1) / (std::sqrt(low_v) + cfg.eps);
      out.exact(i, j) = full - low;
      double arg = (trace.dv_exact(i, j) + pvp(i, j)) / c2;
      if (arg < 0) arg = 0;
      out.approx(i, j) = (trace.dm_exact(i, j) / c1) / (std::sqrt(arg) + cfg.eps);
    }
  return out;
}

}  // namespace galore::oracle
