// SPDX-License-Identifier: Apache-2.0
#include "galore/projection.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace galore {

namespace {

RsvdParams clipped(const RsvdParams& base, std::size_t rank, std::size_t short_side) {
  RsvdParams p = base;
  p.rank = rank;
  p.oversample = std::min(base.oversample, short_side - rank);
  return p;
}

}  // namespace

void HeadLayout::validate() const {
  if (heads < 1) throw ParameterError("HeadLayout: heads must be >= 1");
  if (d_model < 1) throw ParameterError("HeadLayout: d_model must be >= 1");
  if (d_k < 1) throw ParameterError("HeadLayout: d_k must be >= 1");
  if (d_v < 1) throw ParameterError("HeadLayout: d_v must be >= 1");
}

const char* to_string(ProjectionMethod method) noexcept {
  switch (method) {
    case ProjectionMethod::full_svd: return "full-svd";
    case ProjectionMethod::full_rsvd: return "full-rsvd";
    case ProjectionMethod::cross_head_rsvd: return "cross-head-rsvd";
  }
  return "unknown";
}

ProjectionState compute_full_projection(const Matrix& g, std::size_t rank, bool use_rsvd,
                                        const RsvdParams& rsvd, std::size_t step) {
  const std::size_t m = g.rows(), n = g.cols();
  const std::size_t short_side = std::min(m, n);
  if (rank < 1 || rank > short_side) {
    throw ParameterError("compute_full_projection: rank " + std::to_string(rank) +
                         " out of range [1, " + std::to_string(short_side) + "] for " +
                         g.shape_string());
  }
  ProjectionState state;
  state.side = m <= n ? ProjectionSide::left : ProjectionSide::right;
  state.assigned_step = step;
  state.method = use_rsvd ? ProjectionMethod::full_rsvd : ProjectionMethod::full_svd;

  const Matrix oriented = state.side == ProjectionSide::left ? g : transpose(g);
  state.basis = use_rsvd ? rand_subspace_project(oriented, clipped(rsvd, rank, short_side))
                         : truncated_projection(oriented, rank);
  return state;
}

ProjectionState compute_cross_head_projection(const Matrix& g, const HeadLayout& layout,
                                              std::size_t rank, SeededRng& rng,
                                              const RsvdParams& rsvd, std::size_t step,
                                              std::optional<std::size_t> fixed_head) {
  layout.validate();
  if (g.rows() != layout.d_model || g.cols() != layout.qk_width()) {
    throw DimensionError("compute_cross_head_projection: gradient " + g.shape_string() +
                         " does not match layout " + std::to_string(layout.d_model) + "x" +
                         std::to_string(layout.qk_width()));
  }
  const std::size_t blocks_needed = (rank + layout.d_k - 1) / layout.d_k;
  if (rank < 1 || blocks_needed > layout.heads || rank > layout.d_model) {
    throw ParameterError("compute_cross_head_projection: rank " + std::to_string(rank) +
                         " out of range for layout");
  }
  if (fixed_head && *fixed_head >= layout.heads) {
    throw ParameterError("compute_cross_head_projection: fixed head " +
                         std::to_string(*fixed_head) + " out of range");
  }

  std::vector<std::size_t> chosen;
  if (blocks_needed == 1) {
    chosen.push_back(fixed_head ? *fixed_head : rng.below(layout.heads));
  } else {
    // Partial Fisher-Yates; a fixed head, if any, is always part of the slice.
    std::vector<std::size_t> pool(layout.heads);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::size_t start = 0;
    if (fixed_head) {
      std::swap(pool[0], pool[*fixed_head]);
      start = 1;
    }
    for (std::size_t i = start; i < blocks_needed; ++i) {
      const std::size_t j = i + rng.below(layout.heads - i);
      std::swap(pool[i], pool[j]);
    }
    chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(blocks_needed));
    std::sort(chosen.begin(), chosen.end());
  }

  std::vector<Matrix> parts;
  parts.reserve(chosen.size());
  for (std::size_t h : chosen) parts.push_back(column_block(g, h * layout.d_k, layout.d_k));
  const Matrix slice = parts.size() == 1 ? std::move(parts.front()) : hconcat(parts);

  const std::size_t short_side = std::min(slice.rows(), slice.cols());
  if (rank > short_side) {
    throw ParameterError("compute_cross_head_projection: rank " + std::to_string(rank) +
                         " exceeds head slice " + slice.shape_string());
  }

  ProjectionState state;
  state.side = ProjectionSide::left;
  state.assigned_step = step;
  state.method = ProjectionMethod::cross_head_rsvd;
  state.heads = std::move(chosen);
  state.basis = rand_subspace_project(slice, clipped(rsvd, rank, short_side));
  return state;
}

bool should_refresh(std::size_t step, const RefreshPolicy& policy) {
  if (policy.interval < 1) throw ParameterError("RefreshPolicy: interval must be >= 1");
  return step % policy.interval == 0;
}

Matrix project(const Matrix& g, const ProjectionState& state) {
  if (state.side == ProjectionSide::left) {
    if (g.rows() != state.basis.rows())
      throw DimensionError("project: gradient " + g.shape_string() + " vs basis " +
                           state.basis.shape_string());
    return matmul_tn(state.basis, g);
  }
  if (g.cols() != state.basis.rows())
    throw DimensionError("project: gradient " + g.shape_string() + " vs basis " +
                         state.basis.shape_string());
  // PᵀGᵀ = (GP)ᵀ
  return transpose(matmul(g, state.basis));
}

Matrix project_back(const Matrix& compact, const ProjectionState& state) {
  Matrix full = matmul(state.basis, compact);
  return state.side == ProjectionSide::left ? full : transpose(full);
}

double approximation_error(const Matrix& g, const ProjectionState& state) {
  const double norm = frobenius_norm(g);
  if (norm == 0.0) return 0.0;
  const Matrix back = project_back(project(g, state), state);
  return frobenius_norm(subtract(g, back)) / norm;
}

}  // namespace galore
