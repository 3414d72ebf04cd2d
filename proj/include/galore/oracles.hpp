// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference computations for the residual machinery. Everything
// here is written with plain loops over Matrix storage and deliberately shares
// no code with adamw.cpp or residual.cpp. Intended for test-scale matrices.
#pragma once

#include <cstddef>
#include <vector>

#include "galore/adamw.hpp"
#include "galore/matrix.hpp"

namespace galore::oracle {

/// Dense and compact AdamW moments driven by the same gradients under one
/// fixed left-side basis P (m×r), with the exact residuals and the per-step
/// term that the fast ΔV recursion leaves out:
///   d_t = ΔG⊙ΔG + Ĝ⊙Ĝ − P((PᵀG)⊙(PᵀG)),   Ĝ = PPᵀG, ΔG = G − Ĝ
struct DenseResidualTrace {
  Matrix p;
  Matrix m, v;    // dense moments
  Matrix mp, vp;  // compact moments
  Matrix dm_exact, dv_exact;  // M − P·Mp, V − P·Vp
  Matrix dropped;             // Σ_s β₂^{t−s}(1−β₂) d_s
  std::vector<Matrix> dropped_history;  // d_1 … d_t
  std::size_t t = 0;

  DenseResidualTrace(Matrix basis, std::size_t cols);
};

/// Advances the trace by one gradient. Throws ContractError if `p` differs
/// from the basis the trace was started with.
void trace_step(const Matrix& g, const Matrix& p, DenseResidualTrace& trace,
                const OptimizerConfig& cfg);

/// ΔV that the fast recursion produces: exact ΔV minus the dropped sum.
Matrix recursion_dv(const DenseResidualTrace& trace);

struct UpdateError {
  /// ΔW − ΔW′ with ΔW = M̂/(√V̂ + ε), ΔW′ = P·M̂p/(√(P·V̂p) + ε); negative
  /// P·V̂p entries are floored at 0.
  Matrix exact;
  /// ΔM̂/(√((ΔV + P·Vp)/(1−β₂ᵗ)) + ε) with the exact ΔV, i.e. the
  /// approximation of the update gap alone, without the recursion's drop.
  Matrix approx;
  /// P·Vp, for selecting entries where the approximation is meaningful.
  Matrix pvp;
};

/// Requires trace.t == t.
UpdateError dense_update_error(const DenseResidualTrace& trace, std::size_t t,
                               const OptimizerConfig& cfg);

}  // namespace galore::oracle
