// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "galore/projection.hpp"
#include "test_util.hpp"

namespace galore {
namespace {

using namespace galore::testing;

const RsvdParams kRsvd{.rank = 1, .oversample = 8, .power_iters = 2, .seed = 5};

// Independent ‖G − PPᵀG‖/‖G‖ with naive kernels, left side.
double direct_error(const Matrix& g, const Matrix& p) {
  return projection_residual(g, p) / naive_frobenius(g);
}

TEST(FullProjection, PaddedDiagonalKeepsDominantComponent) {
  Matrix g(4, 4);
  g(0, 0) = 5;
  g(1, 1) = 1;
  for (bool rsvd : {false, true}) {
    const ProjectionState s = compute_full_projection(g, 1, rsvd, kRsvd);
    EXPECT_NEAR(projection_residual(g, s.basis), 1.0, 1e-10);
    EXPECT_NEAR(approximation_error(g, s), 1.0 / std::sqrt(26.0), 1e-10);
  }
}

TEST(FullProjection, SideFollowsShorterDimension) {
  const Matrix wide = random_matrix(6, 10, 1);
  const ProjectionState l = compute_full_projection(wide, 2, false, kRsvd);
  EXPECT_EQ(l.side, ProjectionSide::left);
  EXPECT_EQ(l.basis.rows(), 6u);
  EXPECT_EQ(project(wide, l).rows(), 2u);
  EXPECT_EQ(project(wide, l).cols(), 10u);

  const Matrix tall = transpose(wide);
  const ProjectionState r = compute_full_projection(tall, 2, true, kRsvd);
  EXPECT_EQ(r.side, ProjectionSide::right);
  EXPECT_EQ(r.basis.rows(), 6u);
  EXPECT_EQ(project(tall, r).rows(), 2u);
  EXPECT_EQ(project(tall, r).cols(), 10u);
  EXPECT_EQ(project_back(project(tall, r), r).rows(), 10u);
}

TEST(FullProjection, FullRankReconstructs) {
  const Matrix g = random_matrix(7, 5, 2);
  for (bool rsvd : {false, true}) {
    const ProjectionState s = compute_full_projection(g, 5, rsvd, kRsvd);
    EXPECT_LE(frobenius_norm(subtract(g, project_back(project(g, s), s))), 1e-8);
  }
}

TEST(FullProjection, RankOutOfRangeThrows) {
  EXPECT_THROW(compute_full_projection(Matrix(3, 5), 0, false, kRsvd), ParameterError);
  EXPECT_THROW(compute_full_projection(Matrix(3, 5), 4, true, kRsvd), ParameterError);
}

TEST(FullProjection, ExactPathUsesWholeMatrix) {
  DecompositionLog log;
  (void)compute_full_projection(random_matrix(16, 32, 3), 4, false, kRsvd);
  ASSERT_EQ(log.count(), 1u);
  EXPECT_EQ(log.shapes()[0], std::make_pair(std::size_t{16}, std::size_t{32}));
}

TEST(CrossHead, IdenticalHeadsMatchFullProjection) {
  const HeadLayout layout{.heads = 4, .d_model = 24, .d_k = 6, .d_v = 6};
  const Matrix block = random_matrix(24, 6, 4);
  const Matrix blocks[] = {block, block, block, block};
  const Matrix g = hconcat(blocks);
  SeededRng rng(1);
  const ProjectionState cross = compute_cross_head_projection(g, layout, 3, rng, kRsvd);
  const ProjectionState full = compute_full_projection(g, 3, false, kRsvd);
  EXPECT_NEAR(approximation_error(g, cross), approximation_error(g, full), 1e-8);
}

TEST(CrossHead, ScaledRankOneHeadsMatchExactRankOne) {
  const HeadLayout layout{.heads = 2, .d_model = 5, .d_k = 2, .d_v = 2};
  const Matrix u{{1}, {2}, {0}, {-1}, {3}};
  const Matrix v{{0.5, -2.0}};
  const Matrix g1 = matmul(u, v);
  const Matrix blocks[] = {g1, scale(g1, 3.0)};
  const Matrix g = hconcat(blocks);
  const ProjectionState full = compute_full_projection(g, 1, false, kRsvd);
  for (std::size_t head = 0; head < 2; ++head) {
    SeededRng rng(2);
    const ProjectionState cross =
        compute_cross_head_projection(g, layout, 1, rng, kRsvd, 0, head);
    EXPECT_EQ(cross.heads, std::vector<std::size_t>{head});
    EXPECT_NEAR(approximation_error(g, cross), approximation_error(g, full), 1e-8);
  }
}

TEST(CrossHead, SharedSubspaceCloseToFullOverSeeds) {
  const HeadLayout layout{.heads = 8, .d_model = 512, .d_k = 64, .d_v = 64};
  const std::size_t r = 16;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix basis = random_orthonormal(512, r, 1000 + seed);
    std::vector<Matrix> heads;
    for (std::size_t h = 0; h < layout.heads; ++h) {
      const Matrix mix = random_matrix(r, 64, 2000 + seed * 16 + h);
      const Matrix noise = random_matrix(512, 64, 3000 + seed * 16 + h, 0.1);
      heads.push_back(add(naive_matmul(basis, mix), noise));
    }
    const Matrix g = hconcat(heads);
    SeededRng rng(seed);
    const ProjectionState cross = compute_cross_head_projection(
        g, layout, r, rng, {.rank = r, .oversample = 8, .power_iters = 2, .seed = seed});
    const Matrix p_full = truncated_projection(g, r);
    const double e_full = direct_error(g, p_full);
    const double e_cross = direct_error(g, cross.basis);
    EXPECT_GE(e_cross, e_full - 1e-12) << "seed " << seed;
    EXPECT_LE(e_cross, e_full + 0.15) << "seed " << seed;
  }
}

TEST(CrossHead, DecomposesExactlyOneHeadBlock) {
  const HeadLayout layout{.heads = 4, .d_model = 32, .d_k = 8, .d_v = 8};
  const Matrix g = random_matrix(32, 32, 5);
  SeededRng rng(3);
  DecompositionLog log;
  const ProjectionState s =
      compute_cross_head_projection(g, layout, 4, rng, {.oversample = 8, .seed = 1});
  ASSERT_EQ(log.count(), 1u);
  EXPECT_EQ(log.shapes()[0], std::make_pair(std::size_t{32}, std::size_t{8}));
  EXPECT_EQ(s.side, ProjectionSide::left);
  EXPECT_EQ(s.method, ProjectionMethod::cross_head_rsvd);
  ASSERT_EQ(s.heads.size(), 1u);
  EXPECT_LT(s.heads[0], 4u);
  EXPECT_LE(orthonormality_error(s.basis), 1e-8);
}

TEST(CrossHead, RankAboveHeadWidthConcatenatesDistinctHeads) {
  const HeadLayout layout{.heads = 4, .d_model = 32, .d_k = 8, .d_v = 8};
  const Matrix g = random_matrix(32, 32, 6);
  SeededRng rng(4);
  DecompositionLog log;
  const ProjectionState s =
      compute_cross_head_projection(g, layout, 12, rng, {.oversample = 8, .seed = 1});
  ASSERT_EQ(s.heads.size(), 2u);
  EXPECT_LT(s.heads[0], s.heads[1]);
  ASSERT_EQ(log.count(), 1u);
  EXPECT_EQ(log.shapes()[0], std::make_pair(std::size_t{32}, std::size_t{16}));
  EXPECT_EQ(s.rank(), 12u);
  EXPECT_LE(orthonormality_error(s.basis), 1e-8);
}

TEST(CrossHead, HeadSelectionCoversAllHeads) {
  const HeadLayout layout{.heads = 4, .d_model = 16, .d_k = 4, .d_v = 4};
  const Matrix g = random_matrix(16, 16, 7);
  SeededRng rng(5);
  std::vector<int> seen(4, 0);
  for (int i = 0; i < 200; ++i)
    ++seen[compute_cross_head_projection(g, layout, 2, rng, {.oversample = 2}).heads[0]];
  for (int c : seen) EXPECT_GT(c, 20);
}

TEST(CrossHead, ShapeMismatchAndBadRankThrow) {
  const HeadLayout layout{.heads = 2, .d_model = 8, .d_k = 4, .d_v = 4};
  SeededRng rng(6);
  EXPECT_THROW(compute_cross_head_projection(Matrix(8, 9), layout, 2, rng, kRsvd),
               DimensionError);
  EXPECT_THROW(compute_cross_head_projection(Matrix(8, 8), layout, 9, rng, kRsvd),
               ParameterError);
  EXPECT_THROW(compute_cross_head_projection(Matrix(8, 8), layout, 2, rng, kRsvd, 0, 2),
               ParameterError);
}

TEST(CrossHead, DeterministicGivenSeed) {
  const HeadLayout layout{.heads = 4, .d_model = 32, .d_k = 8, .d_v = 8};
  const Matrix g = random_matrix(32, 32, 8);
  SeededRng a(9), b(9);
  const RsvdParams params{.oversample = 4, .seed = 11};
  EXPECT_EQ(compute_cross_head_projection(g, layout, 4, a, params).basis,
            compute_cross_head_projection(g, layout, 4, b, params).basis);
}

TEST(ShouldRefresh, Interval) {
  const RefreshPolicy policy{200};
  EXPECT_TRUE(should_refresh(0, policy));
  EXPECT_FALSE(should_refresh(199, policy));
  EXPECT_TRUE(should_refresh(400, policy));
  EXPECT_THROW(should_refresh(3, RefreshPolicy{0}), ParameterError);
}

TEST(ApproximationError, InSpanAndOrthogonal) {
  const Matrix full = random_orthonormal(10, 4, 12);
  ProjectionState s;
  s.basis = column_block(full, 0, 3);
  const Matrix in_span = naive_matmul(s.basis, random_matrix(3, 7, 13));
  EXPECT_LE(approximation_error(in_span, s), 1e-10);
  const Matrix orth = naive_matmul(column_block(full, 3, 1), random_matrix(1, 5, 14));
  EXPECT_NEAR(approximation_error(orth, s), 1.0, 1e-10);
  EXPECT_EQ(approximation_error(Matrix(10, 4), s), 0.0);
}

TEST(ApproximationError, MatchesDirectFormula) {
  ProjectionState left;
  left.basis = random_orthonormal(12, 4, 15);
  const Matrix g = random_matrix(12, 20, 16);
  EXPECT_NEAR(approximation_error(g, left), direct_error(g, left.basis), 1e-12);

  ProjectionState right = left;
  right.side = ProjectionSide::right;
  const Matrix gt = naive_transpose(g);
  EXPECT_NEAR(approximation_error(gt, right), direct_error(g, left.basis), 1e-12);
}

TEST(Projection, NonExpansive) {
  const HeadLayout layout{.heads = 4, .d_model = 24, .d_k = 6, .d_v = 6};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix g = random_matrix(24, 24, 20 + seed);
    SeededRng rng(seed);
    const ProjectionState states[] = {
        compute_full_projection(g, 4, false, kRsvd),
        compute_full_projection(g, 4, true, kRsvd),
        compute_cross_head_projection(g, layout, 4, rng, kRsvd),
    };
    for (const ProjectionState& s : states)
      EXPECT_LE(frobenius_norm(project_back(project(g, s), s)), frobenius_norm(g) * (1 + 1e-12));
  }
}

}  // namespace
}  // namespace galore
