// SPDX-License-Identifier: Apache-2.0
//
// Single-layer multi-head attention regressor with hand-written backprop.
//
//   per sample X (L×d_model):
//     Q = X·Wq, K = X·Wk, V = X·Wv          concatenated heads
//     head_i = softmax(Q_i K_iᵀ / √d_k) V_i
//     O = [head_1 … head_h]·Wo
//     y = mean_rows(O)·readout
//   loss = mean over batch and outputs of (y − target)²
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "galore/matrix.hpp"
#include "galore/projection.hpp"
#include "galore/rng.hpp"

namespace galore {

enum class ParamRole { wq, wk, wv, wo, readout };

inline constexpr std::array<ParamRole, 5> kAllRoles = {ParamRole::wq, ParamRole::wk,
                                                       ParamRole::wv, ParamRole::wo,
                                                       ParamRole::readout};

const char* role_name(ParamRole role) noexcept;

struct ModelShape {
  HeadLayout layout;
  std::size_t out_dim = 4;

  void validate() const;
};

/// The five weight matrices. Gradients use the same type.
struct ModelParams {
  Matrix wq;       // d_model × h·d_k
  Matrix wk;       // d_model × h·d_k
  Matrix wv;       // d_model × h·d_v
  Matrix wo;       // h·d_v × d_model
  Matrix readout;  // d_model × out_dim

  /// Entries N(0, 1/fan_in), fan_in = row count.
  static ModelParams random(const ModelShape& shape, SeededRng& rng);
  static ModelParams zeros(const ModelShape& shape);

  Matrix& operator[](ParamRole role) noexcept;
  const Matrix& operator[](ParamRole role) const noexcept;

  void validate(const ModelShape& shape) const;
};

using Gradients = ModelParams;

struct Batch {
  std::vector<Matrix> inputs;  // each seq_len × d_model
  Matrix targets;              // batch × out_dim
};

struct SampleCache {
  Matrix q, k, v;            // L × h·d
  std::vector<Matrix> attn;  // per head, L × L
  Matrix head_mean;          // 1 × h·d_v, row mean of the concatenated heads
};

struct ForwardCache {
  std::uint64_t fingerprint = 0;
  std::vector<SampleCache> samples;
  Matrix pooled;   // batch × d_model
  Matrix outputs;  // batch × out_dim
};

struct ForwardResult {
  double loss = 0.0;
  ForwardCache cache;
};

/// Throws NumericalError naming the stage on non-finite activations.
ForwardResult forward(const ModelShape& shape, const ModelParams& params, const Batch& batch);

/// Exact gradients of the loss. Throws ContractError if `cache` was not
/// produced by forward on these params and this batch.
Gradients backward(const ModelShape& shape, const ModelParams& params, const Batch& batch,
                   const ForwardCache& cache);

/// FNV-1a over the raw bytes of params and batch inputs.
std::uint64_t fingerprint(const ModelParams& params, const Batch& batch);

// ---------------------------------------------------------------------------
// Teacher task
// ---------------------------------------------------------------------------

enum class TaskKind { teacher_regression };

struct TaskSpec {
  TaskKind kind = TaskKind::teacher_regression;
  std::uint64_t teacher_seed = 1234;
  double noise_std = 0.01;  // on targets
  std::size_t batch_size = 8;
  std::size_t seq_len = 16;
  std::size_t input_rank = 16;   // latent dimension of the token embeddings
  double input_decay = 0.65;     // latent direction j has scale input_decay^j
  double input_noise = 0.1;      // isotropic noise added to embeddings
  double head_perturbation = 0.1;   // per-head deviation from the shared basis, relative

  void validate() const;
};

/// Seeded stream of batches labelled by a frozen teacher.
class BatchGenerator {
 public:
  BatchGenerator(ModelShape shape, TaskSpec spec, ModelParams teacher, Matrix input_basis,
                 std::uint64_t seed);

  Batch next();
  /// Inputs only, targets left empty.
  Batch next_inputs();

 private:
  ModelShape shape_;
  TaskSpec spec_;
  ModelParams teacher_;
  Matrix input_basis_;  // d_model × input_rank, scaled orthonormal
  SeededRng rng_;
};

struct Task {
  ModelShape shape;
  TaskSpec spec;
  ModelParams teacher;
  Matrix input_basis;

  [[nodiscard]] BatchGenerator batches(std::uint64_t seed) const;
};

/// Teacher whose Wq/Wk/Wv head blocks share one d_model×d_k basis, each block
/// being basis·mix_i plus a relative perturbation. The readout is rescaled so
/// teacher outputs have unit variance on a probe batch.
Task make_task(const TaskSpec& spec, const ModelShape& shape, SeededRng& rng);

}  // namespace galore
