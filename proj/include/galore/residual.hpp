// SPDX-License-Identifier: Apache-2.0
//
// Sparsely coded residual of the low-rank AdamW moments: a fixed index of the
// largest reconstructed first-moment entries, recursions for ΔM and ΔV on that
// index, and the correction δ added to the weight update.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "galore/adamw.hpp"
#include "galore/matrix.hpp"
#include "galore/projection.hpp"

namespace galore {

struct Position {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  bool operator==(const Position&) const = default;
};

struct SparseIndex {
  std::vector<Position> positions;  // sorted row-major, distinct
  std::size_t rows = 0;
  std::size_t cols = 0;
  double ratio = 0.0;

  [[nodiscard]] std::size_t size() const noexcept { return positions.size(); }
};

/// What residual_step does where (P·Vp + ΔV)/(1−β₂ᵗ) is negative.
///   skip:  no correction at that position (δ = 0)
///   floor: argument floored at 0, so δ = ΔM̂/ε
enum class ClampPolicy { skip, floor };

struct ResidualConfig {
  double ratio = 0.012;
  std::size_t warmup_k = 200;
  double alpha_res = 1.0;
  ClampPolicy clamp = ClampPolicy::skip;

  void validate() const;
};

/// ⌈ρ·m·n⌉, insensitive to rounding noise in the product (0.012·1000 is 12).
std::size_t index_cardinality(double ratio, std::size_t rows, std::size_t cols);

/// Positions of the ⌈ρ·m·n⌉ largest |entries| of `reconstructed`; ties go to
/// the earlier row-major position. Throws ParameterError for ρ outside [0, 1]
/// or when 0 < ρ·m·n < 1 would give an empty index.
SparseIndex build_index(const Matrix& reconstructed, double ratio);

/// Same, on P·Mp in the parameter's orientation.
SparseIndex build_index(const ProjectionState& proj, const Matrix& mp, double ratio);

struct ResidualState {
  SparseIndex index;
  std::vector<double> dm;  // parallel to index.positions
  std::vector<double> dv;
  std::size_t warmup_k = 0;
  bool active = false;
  std::size_t clamp_count = 0;

  /// Installs the index and zeroes the residual moments.
  void activate(SparseIndex built, std::size_t warmup);
  /// Value slots held for ΔM and ΔV.
  [[nodiscard]] std::size_t state_elements() const noexcept { return dm.size() + dv.size(); }
};

struct SparseDelta {
  std::vector<Position> positions;
  std::vector<double> values;
};

/// One residual step at optimizer step t (> warmup_k), after step_lowrank has
/// advanced Vp for the same t. Negative arguments under the square root are
/// handled per `clamp` and counted in state.clamp_count.
SparseDelta residual_step(const Matrix& g, const ProjectionState& proj, const Matrix& vp,
                          ResidualState& state, std::size_t t, const OptimizerConfig& cfg,
                          ClampPolicy clamp = ClampPolicy::skip);

/// Descent step W′ = W − lowrank_update − lr·α_res·δ, with δ scattered at its
/// positions. An empty δ leaves only the low-rank part.
Matrix apply_update(const Matrix& w, const Matrix& lowrank_update, const SparseDelta& delta,
                    const OptimizerConfig& cfg, double alpha_res = 1.0);

/// Dense view of a sparse delta, for inspection.
Matrix scatter(const SparseDelta& delta, std::size_t rows, std::size_t cols);

}  // namespace galore
