// SPDX-License-Identifier: Apache-2.0
#include "galore/adamw.hpp"

#include <cmath>
#include <string>

namespace galore {

namespace {

// Shared moment recursion. `out` receives M̂/(√V̂ + ε).
void adam_moments(const Matrix& g, Matrix& m, Matrix& v, std::size_t t,
                  const OptimizerConfig& cfg, Matrix& out) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  auto gd = g.data();
  auto md = m.data();
  auto vd = v.data();
  auto od = out.data();
  for (std::size_t i = 0; i < gd.size(); ++i) {
    md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gd[i];
    vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
    od[i] = (md[i] / c1) / (std::sqrt(vd[i] / c2) + cfg.eps);
  }
}

void require_finite(const Matrix& g, const char* where) {
  if (!all_finite(g)) throw NumericalError(std::string(where) + ": non-finite gradient");
}

}  // namespace

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw ParameterError("optimizer: lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ParameterError("optimizer: beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ParameterError("optimizer: beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw ParameterError("optimizer: eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ParameterError("optimizer: weight_decay must be >= 0");
  if (!(alpha > 0.0)) throw ParameterError("optimizer: alpha must be > 0");
  if (rank < 1) throw ParameterError("optimizer: rank must be >= 1");
  if (interval < 1) throw ParameterError("optimizer: interval must be >= 1");
}

DenseMoments DenseMoments::zeros(std::size_t rows, std::size_t cols) {
  return {Matrix(rows, cols), Matrix(rows, cols), 0};
}

LowRankMoments LowRankMoments::zeros_for(const ProjectionState& proj, std::size_t rows,
                                         std::size_t cols) {
  const std::size_t width = proj.side == ProjectionSide::left ? cols : rows;
  return {Matrix(proj.rank(), width), Matrix(proj.rank(), width), 0};
}

Matrix step_dense(const Matrix& g, DenseMoments& moments, const OptimizerConfig& cfg) {
  if (!g.same_shape(moments.m) || !g.same_shape(moments.v)) {
    throw DimensionError("step_dense: gradient " + g.shape_string() + " vs moments " +
                         moments.m.shape_string());
  }
  require_finite(g, "step_dense");
  ++moments.t;
  Matrix out(g.rows(), g.cols());
  adam_moments(g, moments.m, moments.v, moments.t, cfg, out);
  for (double& x : out.data()) x *= cfg.lr;
  return out;
}

LowRankStep step_lowrank(const Matrix& g, const ProjectionState& proj, LowRankMoments& moments,
                         const OptimizerConfig& cfg) {
  require_finite(g, "step_lowrank");
  LowRankStep step;
  step.compact = project(g, proj);
  if (!step.compact.same_shape(moments.mp) || !step.compact.same_shape(moments.vp)) {
    throw DimensionError("step_lowrank: compact gradient " + step.compact.shape_string() +
                         " vs moments " + moments.mp.shape_string());
  }
  ++moments.t;
  step.normalized = Matrix(step.compact.rows(), step.compact.cols());
  adam_moments(step.compact, moments.mp, moments.vp, moments.t, cfg, step.normalized);
  step.update = project_back(step.normalized, proj);
  const double s = cfg.alpha * cfg.lr;
  for (double& x : step.update.data()) x *= s;
  return step;
}

void apply_weight_decay(Matrix& w, const OptimizerConfig& cfg) {
  if (cfg.weight_decay == 0.0) return;
  const double keep = 1.0 - cfg.lr * cfg.weight_decay;
  for (double& x : w.data()) x *= keep;
}

}  // namespace galore
