// SPDX-License-Identifier: Apache-2.0
//
// Dense AdamW and the low-rank-moment variant that keeps M and V in the
// compact space of a projection.
//
// Updates are returned with the AdamW sign convention, lr·M̂/(√V̂ + ε); the
// caller subtracts them (see apply_update in residual.hpp).
#pragma once

#include <cstddef>

#include "galore/matrix.hpp"
#include "galore/projection.hpp"

namespace galore {

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double alpha = 1.0;  // multiplies the back-projected update
  std::size_t rank = 8;
  std::size_t interval = 200;

  void validate() const;
};

struct DenseMoments {
  Matrix m;
  Matrix v;
  std::size_t t = 0;

  static DenseMoments zeros(std::size_t rows, std::size_t cols);
  [[nodiscard]] std::size_t state_elements() const noexcept { return m.size() + v.size(); }
};

struct LowRankMoments {
  Matrix mp;
  Matrix vp;
  std::size_t t = 0;

  /// Moments for a parameter of shape rows×cols under `proj`.
  static LowRankMoments zeros_for(const ProjectionState& proj, std::size_t rows,
                                  std::size_t cols);
  [[nodiscard]] std::size_t state_elements() const noexcept { return mp.size() + vp.size(); }
};

/// Advances the moments and returns lr·M̂/(√V̂ + ε). Weight decay is not applied.
Matrix step_dense(const Matrix& g, DenseMoments& moments, const OptimizerConfig& cfg);

struct LowRankStep {
  Matrix update;   // α·lr·project_back(N), parameter shape
  Matrix compact;  // R = PᵀG (or PᵀGᵀ), r×n'
  Matrix normalized;  // N = M̂p/(√V̂p + ε), r×n'
};

/// Compact-space AdamW on R = project(G). Moment shapes must match R.
LowRankStep step_lowrank(const Matrix& g, const ProjectionState& proj, LowRankMoments& moments,
                         const OptimizerConfig& cfg);

/// W ← W − lr·wd·W, in place.
void apply_weight_decay(Matrix& w, const OptimizerConfig& cfg);

}  // namespace galore
