// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "galore/svd.hpp"
#include "test_util.hpp"

namespace galore {
namespace {

using namespace galore::testing;

Matrix diag(std::initializer_list<double> d, std::size_t n) {
  Matrix out(n, n);
  std::size_t i = 0;
  for (double x : d) {
    out(i, i) = x;
    ++i;
  }
  return out;
}

Matrix reconstruct(const SvdResult& s) {
  Matrix us = s.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= s.singular_values[j];
  return naive_matmul(us, s.vt);
}

std::vector<double> geometric_spectrum(std::size_t n) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = std::pow(2.0, -static_cast<double>(i) / 8.0);
  return s;
}

TEST(ExactSvd, DiagonalInput) {
  const SvdResult s = exact_svd(diag({3, 2, 1}, 3));
  ASSERT_EQ(s.singular_values.size(), 3u);
  EXPECT_NEAR(s.singular_values[0], 3.0, 1e-14);
  EXPECT_NEAR(s.singular_values[1], 2.0, 1e-14);
  EXPECT_NEAR(s.singular_values[2], 1.0, 1e-14);
  EXPECT_LE(max_abs_diff(s.u, Matrix::identity(3)), 1e-14);
  EXPECT_LE(max_abs_diff(s.vt, Matrix::identity(3)), 1e-14);
}

TEST(ExactSvd, RankOne) {
  // ‖u‖ = 2, ‖v‖ = 1.
  const Matrix u{{1.2}, {1.6}, {0.0}};
  const Matrix v{{0.6, 0.0, 0.8}};
  const SvdResult s = exact_svd(matmul(u, v));
  EXPECT_NEAR(s.singular_values[0], 2.0, 1e-12);
  EXPECT_LE(s.singular_values[1], 1e-10);
  EXPECT_LE(s.singular_values[2], 1e-10);
  EXPECT_LE(orthonormality_error(s.u), 1e-8);
  EXPECT_LE(orthonormality_error(transpose(s.vt)), 1e-8);
}

TEST(ExactSvd, RandomMatchesGramEigenOracle) {
  const Matrix a = random_matrix(40, 24, 21);
  const SvdResult s = exact_svd(a);
  EXPECT_LE(frobenius_norm(subtract(reconstruct(s), a)) / frobenius_norm(a), 1e-10);

  const std::vector<double> ev = symmetric_eigenvalues(naive_matmul(naive_transpose(a), a));
  ASSERT_EQ(ev.size(), s.singular_values.size());
  for (std::size_t i = 0; i < ev.size(); ++i) {
    EXPECT_NEAR(s.singular_values[i], std::sqrt(std::max(ev[i], 0.0)), 1e-8) << "index " << i;
  }
}

TEST(ExactSvd, InvariantsAcrossShapes) {
  const std::pair<std::size_t, std::size_t> shapes[] = {{1, 1}, {5, 1}, {1, 7}, {9, 13},
                                                        {30, 12}, {12, 30}, {64, 64}};
  std::uint64_t seed = 30;
  for (auto [m, n] : shapes) {
    const Matrix a = random_matrix(m, n, ++seed);
    const SvdResult s = exact_svd(a);
    const std::size_t k = std::min(m, n);
    ASSERT_EQ(s.u.rows(), m);
    ASSERT_EQ(s.u.cols(), k);
    ASSERT_EQ(s.vt.rows(), k);
    ASSERT_EQ(s.vt.cols(), n);
    EXPECT_LE(orthonormality_error(s.u), 1e-8);
    EXPECT_LE(orthonormality_error(transpose(s.vt)), 1e-8);
    EXPECT_LE(frobenius_norm(subtract(reconstruct(s), a)) / frobenius_norm(a), 1e-8);
    EXPECT_TRUE(std::is_sorted(s.singular_values.rbegin(), s.singular_values.rend()));
    for (std::size_t c = 0; c < k; ++c) {
      double best = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        if (std::abs(s.u(i, c)) > std::abs(best)) best = s.u(i, c);
      EXPECT_GT(best, 0.0);
    }
  }
}

TEST(ExactSvd, ExactlyLowRankGetsCompletedBasis) {
  const Matrix a = matmul(random_matrix(20, 3, 40), random_matrix(3, 15, 41));
  const SvdResult s = exact_svd(a);
  EXPECT_LE(orthonormality_error(s.u), 1e-8);
  EXPECT_LE(orthonormality_error(transpose(s.vt)), 1e-8);
  EXPECT_LE(frobenius_norm(subtract(reconstruct(s), a)) / frobenius_norm(a), 1e-10);
  for (std::size_t i = 3; i < s.singular_values.size(); ++i)
    EXPECT_LE(s.singular_values[i], 1e-12 * s.singular_values[0]);
}

TEST(ExactSvd, ZeroMatrix) {
  const SvdResult s = exact_svd(Matrix(4, 3));
  EXPECT_LE(orthonormality_error(s.u), 1e-12);
  for (double x : s.singular_values) EXPECT_EQ(x, 0.0);
}

TEST(ExactSvd, NonFiniteInputThrows) {
  Matrix a(2, 2, 1.0);
  a(0, 1) = std::nan("");
  EXPECT_THROW(exact_svd(a), NumericalError);
}

TEST(TruncatedProjection, DiagonalTakesLeadingColumns) {
  const Matrix p = truncated_projection(diag({3, 2, 1}, 3), 2);
  const Matrix want{{1, 0}, {0, 1}, {0, 0}};
  EXPECT_LE(max_abs_diff(p, want), 1e-14);
}

TEST(TruncatedProjection, RankOneRecoversDirection) {
  const Matrix u{{-1.2}, {1.6}, {0.0}};
  const Matrix v{{0.6, 0.0, 0.8}};
  const Matrix p = truncated_projection(matmul(u, v), 1);
  // u/‖u‖ = (-0.6, 0.8, 0); largest-magnitude entry already positive.
  EXPECT_NEAR(p(0, 0), -0.6, 1e-12);
  EXPECT_NEAR(p(1, 0), 0.8, 1e-12);
  EXPECT_NEAR(p(2, 0), 0.0, 1e-12);
}

TEST(TruncatedProjection, MatchesEckartYoungTail) {
  const Matrix a = random_matrix(12, 8, 50);
  const Matrix p = truncated_projection(a, 3);
  const SvdResult s = exact_svd(a);
  EXPECT_NEAR(projection_residual(a, p), tail_norm(s.singular_values, 3), 1e-9);
}

TEST(TruncatedProjection, RankOutOfRangeThrows) {
  EXPECT_THROW(truncated_projection(Matrix(4, 3), 0), ParameterError);
  EXPECT_THROW(truncated_projection(Matrix(4, 3), 4), ParameterError);
}

TEST(RandSubspace, RecoversExactRankTwo) {
  SeededRng rng(60);
  const Matrix a = add(matmul(rng.gaussian(30, 1), rng.gaussian(1, 20)),
                       matmul(rng.gaussian(30, 1), rng.gaussian(1, 20)));
  const Matrix p = rand_subspace_project(a, {.rank = 2, .oversample = 8, .power_iters = 1, .seed = 1});
  EXPECT_LE(projection_residual(a, p), 1e-8);
  EXPECT_LE(orthonormality_error(p), 1e-8);
}

TEST(RandSubspace, DiagonalWithinFivePercentOfOptimum) {
  Matrix a(8, 8);
  a(0, 0) = 4;
  a(1, 1) = 3;
  a(2, 2) = 2;
  a(3, 3) = 1;
  const Matrix p =
      rand_subspace_project(a, {.rank = 2, .oversample = 4, .power_iters = 2, .seed = 3});
  EXPECT_LE(projection_residual(a, p), 1.05 * std::sqrt(5.0));
}

TEST(RandSubspace, GeometricSpectrumNearOptimalOverSeeds) {
  // Smaller cousin of the 512×512 acceptance case, fast enough for unit runs.
  const std::size_t n = 128, r = 16;
  const std::vector<double> sigma = geometric_spectrum(n);
  const double optimum = tail_norm(sigma, r);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix a = with_spectrum(n, n, sigma, 70 + seed);
    const Matrix p =
        rand_subspace_project(a, {.rank = r, .oversample = 8, .power_iters = 2, .seed = seed});
    EXPECT_LE(projection_residual(a, p), 1.1 * optimum) << "seed " << seed;
  }
}

TEST(RandSubspace, MorePowerIterationsNeverHurtsMedian) {
  const std::size_t n = 96, r = 8;
  const std::vector<double> sigma = geometric_spectrum(n);
  std::vector<double> med;
  for (std::size_t q = 0; q <= 2; ++q) {
    std::vector<double> errs;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Matrix a = with_spectrum(n, n, sigma, 500 + seed);
      const Matrix p =
          rand_subspace_project(a, {.rank = r, .oversample = 4, .power_iters = q, .seed = seed});
      errs.push_back(projection_residual(a, p));
    }
    std::nth_element(errs.begin(), errs.begin() + 10, errs.end());
    med.push_back(errs[10]);
  }
  EXPECT_LE(med[1], med[0] + 1e-9);
  EXPECT_LE(med[2], med[1] + 1e-9);
}

TEST(RandSubspace, DeterministicGivenSeed) {
  const Matrix a = random_matrix(40, 30, 80);
  const RsvdParams params{.rank = 5, .oversample = 8, .power_iters = 2, .seed = 99};
  EXPECT_EQ(rand_subspace_project(a, params), rand_subspace_project(a, params));
}

TEST(RandSubspace, OrthonormalAcrossShapes) {
  const std::pair<std::size_t, std::size_t> shapes[] = {{20, 60}, {60, 20}, {33, 33}};
  std::uint64_t seed = 90;
  for (auto [m, n] : shapes) {
    const Matrix a = random_matrix(m, n, ++seed);
    const Matrix p =
        rand_subspace_project(a, {.rank = 6, .oversample = 8, .power_iters = 2, .seed = seed});
    ASSERT_EQ(p.rows(), m);
    ASSERT_EQ(p.cols(), 6u);
    EXPECT_LE(orthonormality_error(p), 1e-8);
  }
}

TEST(RandSubspace, InvalidParamsThrow) {
  const Matrix a = random_matrix(10, 12, 100);
  EXPECT_THROW(rand_subspace_project(a, {.rank = 4, .oversample = 8}), ParameterError);
  EXPECT_THROW(rand_subspace_project(a, {.rank = 0, .oversample = 2}), ParameterError);
}

TEST(RandSubspace, LargestIntermediateIsSketchSized) {
  // Wide and tall inputs: the biggest buffer is the (r+p)-wide sketch on the
  // long side, never anything of size m×n.
  const std::pair<std::size_t, std::size_t> shapes[] = {{48, 200}, {200, 48}};
  for (auto [m, n] : shapes) {
    const Matrix a = random_matrix(m, n, 110);
    const RsvdParams params{.rank = 6, .oversample = 8, .power_iters = 2, .seed = 1};
    AllocationProbe probe;
    (void)rand_subspace_project(a, params);
    EXPECT_EQ(probe.largest(), std::max(m, n) * (params.rank + params.oversample));
  }
}

TEST(DecompositionLog, RecordsProjectorCalls) {
  DecompositionLog log;
  (void)truncated_projection(random_matrix(10, 6, 120), 2);
  (void)rand_subspace_project(random_matrix(30, 20, 121), {.rank = 2, .oversample = 2});
  ASSERT_EQ(log.count(), 2u);
  EXPECT_EQ(log.shapes()[0], std::make_pair(std::size_t{10}, std::size_t{6}));
  EXPECT_EQ(log.shapes()[1], std::make_pair(std::size_t{30}, std::size_t{20}));
}

}  // namespace
}  // namespace galore
