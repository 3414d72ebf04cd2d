// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "galore/oracles.hpp"
#include "galore/residual.hpp"
#include "test_util.hpp"

namespace galore {
namespace {

using namespace galore::testing;
using oracle::DenseResidualTrace;

const OptimizerConfig kCfg{};

TEST(TraceStep, FirstStepResidualIsScaledGradientResidual) {
  const Matrix p = random_orthonormal(6, 2, 1);
  const Matrix g = random_matrix(6, 4, 2);
  DenseResidualTrace trace(p, 4);
  oracle::trace_step(g, p, trace, kCfg);
  const Matrix want = scale(subtract(g, naive_matmul(p, naive_matmul(naive_transpose(p), g))),
                            1 - kCfg.beta1);
  EXPECT_LE(max_abs_diff(trace.dm_exact, want), 1e-15);
  EXPECT_EQ(trace.t, 1u);
  EXPECT_EQ(trace.dropped_history.size(), 1u);
}

TEST(TraceStep, InSpanGradientsLeaveOnlyHadamardDiscrepancy) {
  const Matrix p = random_orthonormal(6, 2, 3);
  DenseResidualTrace trace(p, 5);
  Matrix v_direct(6, 5), vp_direct(2, 5);
  for (int t = 0; t < 10; ++t) {
    const Matrix c = random_matrix(2, 5, 10 + t);
    const Matrix g = naive_matmul(p, c);
    oracle::trace_step(g, p, trace, kCfg);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        v_direct(i, j) = kCfg.beta2 * v_direct(i, j) + (1 - kCfg.beta2) * g(i, j) * g(i, j);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        vp_direct(i, j) = kCfg.beta2 * vp_direct(i, j) + (1 - kCfg.beta2) * c(i, j) * c(i, j);
  }
  EXPECT_LE(max_abs(trace.dm_exact), 1e-14);
  const Matrix want = subtract(v_direct, naive_matmul(p, vp_direct));
  EXPECT_GT(max_abs(want), 1e-4);
  EXPECT_LE(max_abs_diff(trace.dv_exact, want), 1e-12);
}

TEST(TraceStep, ChangedProjectionIsRejected) {
  const Matrix p = random_orthonormal(6, 2, 4);
  DenseResidualTrace trace(p, 3);
  oracle::trace_step(random_matrix(6, 3, 5), p, trace, kCfg);
  EXPECT_THROW(oracle::trace_step(random_matrix(6, 3, 6), random_orthonormal(6, 2, 7), trace, kCfg),
               ContractError);
}

TEST(TraceStep, DroppedSumMatchesRecursiveAccumulation) {
  const Matrix p = random_orthonormal(5, 2, 8);
  DenseResidualTrace trace(p, 4);
  Matrix acc(5, 4);
  for (int t = 0; t < 12; ++t) {
    oracle::trace_step(random_matrix(5, 4, 20 + t), p, trace, kCfg);
    acc = add(scale(acc, kCfg.beta2), scale(trace.dropped_history.back(), 1 - kCfg.beta2));
  }
  EXPECT_LE(max_abs_diff(acc, trace.dropped), 1e-14);
}

TEST(DenseUpdateError, IdentityProjectionHasNoError) {
  DenseResidualTrace trace(Matrix::identity(4), 3);
  for (int t = 0; t < 5; ++t) oracle::trace_step(random_matrix(4, 3, 30 + t), trace.p, trace, kCfg);
  const oracle::UpdateError e = oracle::dense_update_error(trace, 5, kCfg);
  EXPECT_LE(max_abs(e.exact), 1e-12);
  EXPECT_LE(max_abs(e.approx), 1e-12);
}

TEST(DenseUpdateError, RequiresMatchingStep) {
  DenseResidualTrace trace(Matrix::identity(2), 2);
  oracle::trace_step(random_matrix(2, 2, 40), trace.p, trace, kCfg);
  EXPECT_THROW(oracle::dense_update_error(trace, 2, kCfg), ContractError);
}

TEST(DenseUpdateError, GapDecomposesIntoDroppedTerm) {
  // With M̂ = P·M̂p, V̂ = P·V̂p > 0:
  //   exact − approx = M̂(√V̂ − √(V̂ + ΔV̂)) / ((√(V̂ + ΔV̂) + ε)(√V̂ + ε))
  const std::size_t m = 10, n = 12;
  const Matrix p = random_orthonormal(m, 5, 70);
  DenseResidualTrace trace(p, n);
  for (int t = 0; t < 20; ++t) oracle::trace_step(random_matrix(m, n, 80 + t), p, trace, kCfg);
  const oracle::UpdateError e = oracle::dense_update_error(trace, 20, kCfg);
  const double c1 = 1 - std::pow(kCfg.beta1, 20), c2 = 1 - std::pow(kCfg.beta2, 20);
  const Matrix pmp = naive_matmul(p, trace.mp);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!(e.pvp(i, j) > 0)) continue;
      const double vh = e.pvp(i, j) / c2, full = trace.v(i, j) / c2;
      const double want = (pmp(i, j) / c1) * (std::sqrt(vh) - std::sqrt(full)) /
                          ((std::sqrt(full) + kCfg.eps) * (std::sqrt(vh) + kCfg.eps));
      EXPECT_NEAR(e.exact(i, j) - e.approx(i, j), want, 1e-10 * std::max(1.0, std::abs(want)));
      ++checked;
    }
  EXPECT_GT(checked, m * n / 2);
}

TEST(DenseUpdateError, ApproximationQualityGate) {
  // Relative error of the approximate update gap on the index positions
  // (top 1.2% of |P·Mp|) with P·Vp > 0, pooled over six random 20-step traces
  // with r = m/2.
  const std::size_t m = 16, n = 24;
  double num = 0, den = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Matrix p = random_orthonormal(m, m / 2, 50 + seed);
    DenseResidualTrace trace(p, n);
    for (int t = 0; t < 20; ++t)
      oracle::trace_step(random_matrix(m, n, 60 + t + seed * 100), p, trace, kCfg);
    const oracle::UpdateError e = oracle::dense_update_error(trace, 20, kCfg);
    const SparseIndex idx = build_index(naive_matmul(p, trace.mp), 0.012);
    for (const Position q : idx.positions) {
      if (!(e.pvp(q.row, q.col) > 0)) continue;
      const double d = e.approx(q.row, q.col) - e.exact(q.row, q.col);
      num += d * d;
      den += e.exact(q.row, q.col) * e.exact(q.row, q.col);
    }
  }
  ASSERT_GT(den, 0.0);
  EXPECT_LE(std::sqrt(num / den), 0.5);
}

}  // namespace
}  // namespace galore
