// SPDX-License-Identifier: Apache-2.0
#include "galore/harness/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "galore/errors.hpp"

namespace galore {
namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_ns(Clock::time_point since) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count());
}

bool is_qk(ParamRole role) { return role == ParamRole::wq || role == ParamRole::wk; }

Task build_task(const RunConfig& cfg) {
  SeededRng teacher_rng(cfg.task.teacher_seed);
  return make_task(cfg.task, cfg.model, teacher_rng);
}

ModelParams init_student(const RunConfig& cfg) {
  SeededRng rng(derive_seed(cfg.seed, 1));
  return ModelParams::random(cfg.model, rng);
}

RunConfig validated(RunConfig cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

Trainer::Trainer(RunConfig cfg)
    : cfg_(validated(std::move(cfg))),
      res_cfg_(cfg_.resolved_residual()),
      task_(build_task(cfg_)),
      params_(init_student(cfg_)),
      data_(task_.batches(derive_seed(cfg_.seed, 2))),
      proj_rng_(derive_seed(cfg_.seed, 3)) {
  const Method method = *cfg_.method;
  const std::size_t r = cfg_.optimizer.rank;
  const bool plus = method == Method::galore_plus || method == Method::galore_plus_nores;
  for (ParamRole role : kAllRoles) {
    const Matrix& w = params_[role];
    MatrixSlot s;
    s.role = role;
    s.lowrank = method != Method::dense_adamw;
    s.full_rank = s.lowrank && std::min(w.rows(), w.cols()) <= r;
    s.cross_head = s.lowrank && !s.full_rank && plus && is_qk(role);
    s.residual = s.lowrank && method == Method::galore_plus && is_qk(role);
    if (!s.lowrank) s.dense = DenseMoments::zeros(w.rows(), w.cols());
    slots_.push_back(std::move(s));
  }
}

const MatrixSlot& Trainer::slot(ParamRole role) const {
  return slots_[static_cast<std::size_t>(role)];
}

std::size_t Trainer::expected_state_elements() const {
  std::size_t total = 0;
  for (const MatrixSlot& s : slots_) {
    const Matrix& w = params_[s.role];
    const std::size_t m = w.rows(), n = w.cols();
    if (!s.lowrank) {
      total += 2 * m * n;
      continue;
    }
    total += 2 * std::min(cfg_.optimizer.rank, std::min(m, n)) * std::max(m, n);
    if (s.index_built) total += 2 * index_cardinality(res_cfg_.ratio, m, n);
  }
  return total;
}

void Trainer::refresh(MatrixSlot& s, const Matrix& g, std::size_t step) {
  RsvdParams rsvd;
  rsvd.rank = cfg_.optimizer.rank;
  rsvd.oversample = cfg_.oversample;
  rsvd.power_iters = cfg_.power_iters;
  rsvd.seed = proj_rng_.next_u64();
  if (s.full_rank) {
    const bool left = g.rows() <= g.cols();
    s.proj = ProjectionState{};
    s.proj.basis = Matrix::identity(left ? g.rows() : g.cols());
    s.proj.side = left ? ProjectionSide::left : ProjectionSide::right;
    s.proj.assigned_step = step;
  } else if (s.cross_head) {
    s.proj = compute_cross_head_projection(g, cfg_.model.layout, rsvd.rank, proj_rng_, rsvd, step,
                                           cfg_.fixed_head);
  } else {
    const bool use_rsvd = *cfg_.method != Method::galore_exact;
    s.proj = compute_full_projection(g, rsvd.rank, use_rsvd, rsvd, step);
  }
  // Compact moments carry over between refreshes; only the first needs zeros.
  if (s.moments.mp.empty()) s.moments = LowRankMoments::zeros_for(s.proj, g.rows(), g.cols());
}

StepMetrics Trainer::step() {
  const Clock::time_point start = Clock::now();
  const std::size_t s_index = t_;  // 0-based
  const std::size_t t = ++t_;

  StepMetrics out;
  out.step = t;

  const Batch batch = data_.next();
  ForwardResult fwd;
  try {
    fwd = forward(cfg_.model, params_, batch);
  } catch (const NumericalError& e) {
    throw NumericalError("step " + std::to_string(t) + ": " + e.what());
  }
  if (!std::isfinite(fwd.loss))
    throw NumericalError("non-finite loss at step " + std::to_string(t));
  out.loss = fwd.loss;
  const Gradients grads = backward(cfg_.model, params_, batch, fwd.cache);

  const OptimizerConfig& opt = cfg_.optimizer;
  const bool refreshing = should_refresh(s_index, RefreshPolicy{opt.interval});
  for (MatrixSlot& s : slots_) {
    const Matrix& g = grads[s.role];
    Matrix& w = params_[s.role];
    const std::size_t i = static_cast<std::size_t>(s.role);

    if (!s.lowrank) {
      const Matrix update = step_dense(g, s.dense, opt);
      apply_weight_decay(w, opt);
      w = subtract(w, update);
      continue;
    }

    if (refreshing) {
      const Clock::time_point r0 = Clock::now();
      refresh(s, g, s_index);
      out.refresh_time_ns += elapsed_ns(r0);
    }
    out.approx_error[i] = approximation_error(g, s.proj);

    const LowRankStep low = step_lowrank(g, s.proj, s.moments, opt);
    SparseDelta delta;
    if (s.residual) {
      if (t == res_cfg_.warmup_k) {
        s.res.activate(build_index(s.proj, s.moments.mp, res_cfg_.ratio), res_cfg_.warmup_k);
        s.index_built = true;
      } else if (t > res_cfg_.warmup_k) {
        delta = residual_step(g, s.proj, s.moments.vp, s.res, t, opt, res_cfg_.clamp);
      }
    }
    apply_weight_decay(w, opt);
    w = apply_update(w, low.update, delta, opt, res_cfg_.alpha_res);
  }

  for (const MatrixSlot& s : slots_) {
    out.clamp_count += s.res.clamp_count;
    out.state_elements += s.lowrank ? s.moments.state_elements() + s.res.state_elements()
                                    : s.dense.state_elements();
  }
  if (out.state_elements != expected_state_elements()) {
    throw ContractError("state accounting: " + std::to_string(out.state_elements) +
                        " elements held, formula gives " +
                        std::to_string(expected_state_elements()));
  }
  out.step_time_ns = elapsed_ns(start);
  return out;
}

}  // namespace galore
