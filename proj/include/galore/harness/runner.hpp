// SPDX-License-Identifier: Apache-2.0
//
// Whole runs and sweeps, and the files they leave behind.
//
// run output directory:
//   metrics.csv   step, loss, approx_error per role, clamp_count, state_elements
//   timing.csv    step, refresh_time_ns, step_time_ns
//   summary.json  final loss, totals, peak state
//   config.ini    the resolved config
// metrics.csv depends only on (config, seed); wall-clock times live in
// timing.csv and summary.json.
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "galore/harness/config.hpp"
#include "galore/harness/trainer.hpp"

namespace galore {

/// An output file or directory could not be written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunSummary {
  Method method = Method::dense_adamw;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  double last_loss = 0.0;
  double final_loss = 0.0;  // mean loss over the last min(50, steps) steps
  std::uint64_t total_refresh_ns = 0;
  std::uint64_t total_step_ns = 0;
  std::size_t peak_state_elements = 0;
  std::size_t clamp_count = 0;
};

struct RunResult {
  RunSummary summary;
  std::vector<StepMetrics> metrics;
};

inline constexpr std::size_t kFinalLossWindow = 50;

/// Trains for cfg.steps without touching the file system.
RunResult run(const RunConfig& cfg);
/// run() plus the four files in cfg.output_dir (created if missing).
RunResult run_to_dir(const RunConfig& cfg);

std::string metrics_csv(const std::vector<StepMetrics>& metrics);
std::string timing_csv(const std::vector<StepMetrics>& metrics);
std::string summary_json(const RunSummary& summary);

/// Writes `text` to `path`, creating parent directories. Throws IoError.
void write_text(const std::string& path, const std::string& text);

struct SweepSpec {
  std::string field;
  std::vector<std::string> values;
};

/// "field=v1,v2,..." with a known config key and at least one value.
SweepSpec parse_sweep(std::string_view text);

struct CompareCell {
  std::string value;
  std::vector<RunResult> runs;  // one per seed
};

struct CompareResult {
  SweepSpec sweep;
  std::vector<CompareCell> cells;
};

/// Runs every (value, seed) combination, seed = base.seed + i, each into
/// <out>/runs/<field>-<value>/seed-<seed>, then writes to <out>:
///   comparison.csv    per-step loss, cumulative refresh time and wq error per run
///   final_losses.csv  mean and sd of final_loss per value
///   loss.svg, refresh_time.svg, approx_error.svg   per-value means over seeds
/// Throws ConfigError when the sweep would give runs of different lengths.
CompareResult compare(const RunConfig& base, const SweepSpec& sweep, std::size_t seeds);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for n < 2
  std::size_t n = 0;
};

MeanSd final_loss_stats(const CompareCell& cell);

}  // namespace galore
