// SPDX-License-Identifier: Apache-2.0
#include "galore/residual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace galore {

void ResidualConfig::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ParameterError("residual: ratio must be in [0, 1]");
  if (warmup_k < 1) throw ParameterError("residual: warmup_k must be >= 1");
  if (!(alpha_res >= 0.0)) throw ParameterError("residual: alpha_res must be >= 0");
}

std::size_t index_cardinality(double ratio, std::size_t rows, std::size_t cols) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw ParameterError("index ratio " + std::to_string(ratio) + " outside [0, 1]");
  const double total = static_cast<double>(rows) * static_cast<double>(cols);
  const double want = ratio * total;
  const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, want);
  const auto k = static_cast<std::size_t>(std::ceil(want - slack));
  return std::min(k, rows * cols);
}

SparseIndex build_index(const Matrix& reconstructed, double ratio) {
  const std::size_t total = reconstructed.size();
  const std::size_t k = index_cardinality(ratio, reconstructed.rows(), reconstructed.cols());
  if (ratio > 0.0 && ratio * static_cast<double>(total) < 1.0) {
    throw ParameterError("build_index: ratio " + std::to_string(ratio) + " on " +
                         reconstructed.shape_string() + " selects no entries");
  }
  if (!all_finite(reconstructed)) throw NumericalError("build_index: non-finite moment");

  SparseIndex index;
  index.rows = reconstructed.rows();
  index.cols = reconstructed.cols();
  index.ratio = ratio;
  if (k == 0) return index;

  const auto data = reconstructed.data();
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    const double x = std::abs(data[a]), y = std::abs(data[b]);
    return x != y ? x > y : a < b;
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   order.end(), before);
  order.resize(k);
  std::sort(order.begin(), order.end());

  index.positions.reserve(k);
  for (std::size_t flat : order) {
    index.positions.push_back({static_cast<std::uint32_t>(flat / index.cols),
                               static_cast<std::uint32_t>(flat % index.cols)});
  }
  return index;
}

SparseIndex build_index(const ProjectionState& proj, const Matrix& mp, double ratio) {
  if (mp.rows() != proj.rank()) {
    throw DimensionError("build_index: Mp " + mp.shape_string() + " vs basis " +
                         proj.basis.shape_string());
  }
  return build_index(project_back(mp, proj), ratio);
}

void ResidualState::activate(SparseIndex built, std::size_t warmup) {
  index = std::move(built);
  dm.assign(index.size(), 0.0);
  dv.assign(index.size(), 0.0);
  warmup_k = warmup;
  active = true;
}

SparseDelta residual_step(const Matrix& g, const ProjectionState& proj, const Matrix& vp,
                          ResidualState& state, std::size_t t, const OptimizerConfig& cfg,
                          ClampPolicy clamp) {
  if (!state.active) throw ContractError("residual_step: index not built");
  if (t <= state.warmup_k) {
    throw ContractError("residual_step: step " + std::to_string(t) + " inside warm-up of " +
                        std::to_string(state.warmup_k));
  }
  if (g.rows() != state.index.rows || g.cols() != state.index.cols) {
    throw DimensionError("residual_step: gradient " + g.shape_string() + " vs index shape");
  }
  if (!all_finite(g)) throw NumericalError("residual_step: non-finite gradient");

  const bool left = proj.side == ProjectionSide::left;
  const Matrix r = project(g, proj);  // r × n'
  if (!vp.same_shape(r)) {
    throw DimensionError("residual_step: Vp " + vp.shape_string() + " vs compact " +
                         r.shape_string());
  }
  const Matrix& p = proj.basis;
  const std::size_t rank = p.cols();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));

  SparseDelta delta;
  delta.positions = state.index.positions;
  delta.values.resize(delta.positions.size());
  for (std::size_t e = 0; e < delta.positions.size(); ++e) {
    const std::size_t i = delta.positions[e].row, j = delta.positions[e].col;
    // Oriented coordinates: row of P, column of the compact matrices.
    const std::size_t a = left ? i : j;
    const std::size_t b = left ? j : i;
    double ghat = 0.0, pvp = 0.0;
    for (std::size_t k = 0; k < rank; ++k) {
      ghat += p(a, k) * r(k, b);
      pvp += p(a, k) * vp(k, b);
    }
    const double dg = g(i, j) - ghat;
    double& dm = state.dm[e];
    double& dv = state.dv[e];
    dm = cfg.beta1 * dm + (1.0 - cfg.beta1) * dg;
    dv = cfg.beta2 * dv + 2.0 * (1.0 - cfg.beta2) * ghat * dg;
    double arg = pvp / c2 + dv / c2;
    if (arg < 0.0) {
      ++state.clamp_count;
      if (clamp == ClampPolicy::skip) {
        delta.values[e] = 0.0;
        continue;
      }
      arg = 0.0;
    }
    delta.values[e] = (dm / c1) / (std::sqrt(arg) + cfg.eps);
  }
  return delta;
}

Matrix apply_update(const Matrix& w, const Matrix& lowrank_update, const SparseDelta& delta,
                    const OptimizerConfig& cfg, double alpha_res) {
  if (!w.same_shape(lowrank_update)) {
    throw DimensionError("apply_update: weight " + w.shape_string() + " vs update " +
                         lowrank_update.shape_string());
  }
  if (delta.values.size() != delta.positions.size()) {
    throw DimensionError("apply_update: delta values/positions length mismatch");
  }
  Matrix out = subtract(w, lowrank_update);
  const double s = cfg.lr * alpha_res;
  for (std::size_t e = 0; e < delta.positions.size(); ++e) {
    const Position pos = delta.positions[e];
    if (pos.row >= w.rows() || pos.col >= w.cols())
      throw DimensionError("apply_update: delta position out of range");
    out(pos.row, pos.col) -= s * delta.values[e];
  }
  return out;
}

Matrix scatter(const SparseDelta& delta, std::size_t rows, std::size_t cols) {
  Matrix out(rows, cols);
  for (std::size_t e = 0; e < delta.positions.size(); ++e) {
    const Position pos = delta.positions[e];
    if (pos.row >= rows || pos.col >= cols)
      throw DimensionError("scatter: position out of range");
    out(pos.row, pos.col) = delta.values[e];
  }
  return out;
}

}  // namespace galore
