// SPDX-License-Identifier: Apache-2.0
//
// Low-rank projection bookkeeping: when a gradient's projection is refreshed,
// which decomposition builds it, and how gradients move between the full and
// compact spaces.
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "galore/matrix.hpp"
#include "galore/rng.hpp"
#include "galore/svd.hpp"

namespace galore {

/// Multi-head layout of a concatenated query/key/value transform.
struct HeadLayout {
  std::size_t heads = 8;
  std::size_t d_model = 128;
  std::size_t d_k = 16;
  std::size_t d_v = 16;

  void validate() const;
  [[nodiscard]] std::size_t qk_width() const noexcept { return heads * d_k; }
  [[nodiscard]] std::size_t v_width() const noexcept { return heads * d_v; }
};

enum class ProjectionSide { left, right };
enum class ProjectionMethod { full_svd, full_rsvd, cross_head_rsvd };

const char* to_string(ProjectionMethod method) noexcept;

/// An orthonormal basis P plus how and when it was obtained.
///
/// Left side: P is m×r and the compact gradient is PᵀG (r×n).
/// Right side: P is n×r and the compact gradient is PᵀGᵀ (r×m).
struct ProjectionState {
  Matrix basis;
  ProjectionSide side = ProjectionSide::left;
  std::size_t assigned_step = 0;
  ProjectionMethod method = ProjectionMethod::full_svd;
  std::vector<std::size_t> heads;  // cross-head only: the head blocks decomposed

  [[nodiscard]] std::size_t rank() const noexcept { return basis.cols(); }
};

struct RefreshPolicy {
  std::size_t interval = 200;
};

/// GaLore projection of the whole matrix. The projected dimension is the
/// shorter one (left when m <= n). With use_rsvd, the oversampling is clipped
/// so rank + oversample fits the matrix.
ProjectionState compute_full_projection(const Matrix& g, std::size_t rank, bool use_rsvd,
                                        const RsvdParams& rsvd, std::size_t step = 0);

/// Cross-head projection: decompose a single head block of a concatenated
/// d_model×(h·d_k) gradient and use its basis for the whole matrix.
///
/// The head is drawn uniformly from `rng` unless `fixed_head` is given. When
/// rank > d_k, ⌈rank/d_k⌉ distinct heads are drawn and their blocks
/// concatenated before decomposing. Always left-sided.
ProjectionState compute_cross_head_projection(const Matrix& g, const HeadLayout& layout,
                                              std::size_t rank, SeededRng& rng,
                                              const RsvdParams& rsvd, std::size_t step = 0,
                                              std::optional<std::size_t> fixed_head = {});

bool should_refresh(std::size_t step, const RefreshPolicy& policy);

/// ‖G − PPᵀG‖_F / ‖G‖_F (transposed analogue on the right side); 0 for G = 0.
double approximation_error(const Matrix& g, const ProjectionState& state);

/// Full space -> compact space.
Matrix project(const Matrix& g, const ProjectionState& state);
/// Compact space -> full space, in the parameter's orientation.
Matrix project_back(const Matrix& compact, const ProjectionState& state);

}  // namespace galore
