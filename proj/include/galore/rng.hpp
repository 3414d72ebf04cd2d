// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "galore/matrix.hpp"

namespace galore {

/// Portable seeded stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The distributions on top of it are implemented here rather than
/// taken from <random>, because the standard library distributions are not
/// required to produce the same values across implementations:
///   - uniform():  top 53 bits of one engine draw, scaled to [0, 1)
///   - below(n):   rejection sampling on the raw 64-bit draw
///   - normal():   Box-Muller, both variates used in order
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  std::size_t below(std::size_t n);
  double normal();

  /// rows x cols matrix of independent N(0, stddev^2) samples, row-major order.
  Matrix gaussian(std::size_t rows, std::size_t cols, double stddev = 1.0);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stateless child-seed derivation (splitmix64 finalizer over seed ^ stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace galore
