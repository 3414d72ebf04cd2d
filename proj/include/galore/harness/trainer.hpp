// SPDX-License-Identifier: Apache-2.0
//
// Training loop over the toy attention model for one RunConfig.
//
// Matrix assignment, for every method except dense-adamw:
//   - a matrix with min(m, n) <= rank is projected by the identity on its
//     shorter side (nothing to compress);
//   - galore-exact: truncated exact SVD for every low-rank matrix;
//   - galore-rsvd: randomized projection of the whole matrix;
//   - galore-plus / galore-plus-nores: cross-head projection for wq and wk,
//     randomized whole-matrix projection elsewhere. galore-plus also carries
//     sparse residuals on wq and wk.
//
// Seeds: the teacher comes from task.teacher_seed; student init, data and
// projection draws use derive_seed(seed, 1), (seed, 2) and (seed, 3).
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "galore/adamw.hpp"
#include "galore/attention.hpp"
#include "galore/harness/config.hpp"
#include "galore/projection.hpp"
#include "galore/residual.hpp"
#include "galore/rng.hpp"

namespace galore {

struct StepMetrics {
  std::size_t step = 0;  // 1-based
  double loss = 0.0;
  std::array<double, 5> approx_error{};  // by ParamRole; 0 for dense matrices
  std::uint64_t refresh_time_ns = 0;
  std::uint64_t step_time_ns = 0;
  std::size_t clamp_count = 0;     // cumulative over all residuals
  std::size_t state_elements = 0;  // optimizer moments plus residual values
};

/// Optimizer state of one parameter matrix.
struct MatrixSlot {
  ParamRole role = ParamRole::wq;
  bool lowrank = false;
  bool full_rank = false;  // identity projection
  bool cross_head = false;
  bool residual = false;
  DenseMoments dense;
  ProjectionState proj;
  LowRankMoments moments;
  ResidualState res;
  bool index_built = false;
};

class Trainer {
 public:
  /// Validates the config; throws ConfigError.
  explicit Trainer(RunConfig cfg);

  /// One forward/backward/update. Throws NumericalError with the step number
  /// on a non-finite loss, ContractError if the state accounting drifts.
  StepMetrics step();

  [[nodiscard]] std::size_t steps_done() const noexcept { return t_; }
  [[nodiscard]] const RunConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const ModelParams& params() const noexcept { return params_; }
  [[nodiscard]] const MatrixSlot& slot(ParamRole role) const;

  /// Closed-form state size: 2mn per dense matrix, 2·min(r, m, n)·max(m, n)
  /// per projected matrix, plus 2·⌈ρmn⌉ per residual once its index exists.
  [[nodiscard]] std::size_t expected_state_elements() const;

 private:
  void refresh(MatrixSlot& slot, const Matrix& g, std::size_t step);

  RunConfig cfg_;
  ResidualConfig res_cfg_;
  Task task_;
  ModelParams params_;
  BatchGenerator data_;
  SeededRng proj_rng_;
  std::vector<MatrixSlot> slots_;
  std::size_t t_ = 0;
};

}  // namespace galore
