// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: an INI file with sections [run], [optimizer], [rsvd],
// [residual], [projection] and [model]. Every key name is unique across
// sections, so keys may also appear before the first section header, and the
// same names serve as CLI overrides and sweep fields.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "galore/adamw.hpp"
#include "galore/attention.hpp"
#include "galore/residual.hpp"

namespace galore {

/// Malformed file, unknown key or invalid value. The message names the line
/// or the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { dense_adamw, galore_exact, galore_rsvd, galore_plus, galore_plus_nores };

const char* to_string(Method method) noexcept;
/// Throws ConfigError for unknown names.
Method parse_method(std::string_view name);

struct RunConfig {
  std::optional<Method> method;  // required
  OptimizerConfig optimizer{.lr = 3e-3};
  std::size_t oversample = 8;
  std::size_t power_iters = 2;
  ResidualConfig residual;
  std::optional<std::size_t> warmup;  // unset: one refresh interval
  std::optional<std::size_t> fixed_head;  // unset: draw a head at every refresh
  ModelShape model;
  TaskSpec task;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  /// Effective warm-up length k.
  [[nodiscard]] std::size_t warmup_k() const noexcept {
    return warmup.value_or(optimizer.interval);
  }
  [[nodiscard]] ResidualConfig resolved_residual() const;

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  bool operator==(const RunConfig&) const;
};

/// Sets one field from its textual value. Throws ConfigError for unknown keys
/// or unparsable values.
void set_field(RunConfig& cfg, std::string_view key, std::string_view value);

/// All known keys, in serialization order.
std::vector<std::string> config_keys();

/// Parsed and validated.
RunConfig parse_config_text(const std::string& text, const std::string& source = "<string>");
RunConfig parse_config(const std::string& path);
/// Parsed but not validated, for callers that apply overrides first.
RunConfig read_config_text(const std::string& text, const std::string& source = "<string>");
RunConfig read_config(const std::string& path);

/// INI text that parses back to an equal config. Doubles use 17 significant
/// digits; unset optional fields are omitted.
std::string serialize_config(const RunConfig& cfg);

}  // namespace galore
