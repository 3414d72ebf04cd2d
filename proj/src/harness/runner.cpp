// SPDX-License-Identifier: Apache-2.0
#include "galore/harness/runner.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "galore/harness/svg.hpp"

namespace galore {
namespace {

namespace fs = std::filesystem;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string path_safe(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_') ? c : '_';
  return out;
}

std::string run_label(const SweepSpec& sweep, const std::string& value, std::uint64_t seed) {
  return sweep.field + "=" + value + "/seed=" + std::to_string(seed);
}

}  // namespace

RunResult run(const RunConfig& cfg) {
  Trainer trainer(cfg);
  RunResult out;
  out.metrics.reserve(cfg.steps);
  RunSummary& s = out.summary;
  s.method = *cfg.method;
  s.seed = cfg.seed;
  s.steps = cfg.steps;
  for (std::size_t i = 0; i < cfg.steps; ++i) {
    out.metrics.push_back(trainer.step());
    const StepMetrics& m = out.metrics.back();
    s.total_refresh_ns += m.refresh_time_ns;
    s.total_step_ns += m.step_time_ns;
    s.peak_state_elements = std::max(s.peak_state_elements, m.state_elements);
  }
  s.last_loss = out.metrics.back().loss;
  s.clamp_count = out.metrics.back().clamp_count;
  const std::size_t window = std::min(kFinalLossWindow, out.metrics.size());
  double tail = 0.0;
  for (std::size_t i = out.metrics.size() - window; i < out.metrics.size(); ++i)
    tail += out.metrics[i].loss;
  s.final_loss = tail / static_cast<double>(window);
  return out;
}

RunResult run_to_dir(const RunConfig& cfg) {
  cfg.validate();
  const fs::path dir(cfg.output_dir);
  // Fail on an unwritable directory before spending time on training.
  write_text((dir / "config.ini").string(), serialize_config(cfg));
  RunResult result = run(cfg);
  write_text((dir / "metrics.csv").string(), metrics_csv(result.metrics));
  write_text((dir / "timing.csv").string(), timing_csv(result.metrics));
  write_text((dir / "summary.json").string(), summary_json(result.summary));
  return result;
}

std::string metrics_csv(const std::vector<StepMetrics>& metrics) {
  std::ostringstream o;
  o << "step,loss";
  for (ParamRole role : kAllRoles) o << ',' << role_name(role);
  o << ",clamp_count,state_elements\n";
  for (const StepMetrics& m : metrics) {
    o << m.step << ',' << g17(m.loss);
    for (double e : m.approx_error) o << ',' << g17(e);
    o << ',' << m.clamp_count << ',' << m.state_elements << '\n';
  }
  return o.str();
}

std::string timing_csv(const std::vector<StepMetrics>& metrics) {
  std::ostringstream o;
  o << "step,refresh_time_ns,step_time_ns\n";
  for (const StepMetrics& m : metrics)
    o << m.step << ',' << m.refresh_time_ns << ',' << m.step_time_ns << '\n';
  return o.str();
}

std::string summary_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["method"] = to_string(s.method);
  j["seed"] = s.seed;
  j["steps"] = s.steps;
  j["last_loss"] = s.last_loss;
  j["final_loss"] = s.final_loss;
  j["final_loss_window"] = std::min(kFinalLossWindow, s.steps);
  j["total_refresh_ns"] = s.total_refresh_ns;
  j["total_step_ns"] = s.total_step_ns;
  j["peak_state_elements"] = s.peak_state_elements;
  j["clamp_count"] = s.clamp_count;
  return j.dump(2) + "\n";
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) {
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError(p.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw IoError(path + ": write failed");
}

SweepSpec parse_sweep(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("sweep: expected field=v1,v2,... got '" + std::string(text) + "'");
  SweepSpec out;
  out.field = std::string(text.substr(0, eq));
  const std::vector<std::string> keys = config_keys();
  if (std::find(keys.begin(), keys.end(), out.field) == keys.end())
    throw ConfigError("sweep: unknown field '" + out.field + "'");
  std::string_view rest = text.substr(eq + 1);
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    if (item.empty()) throw ConfigError("sweep: empty value in '" + std::string(text) + "'");
    out.values.emplace_back(item);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

MeanSd final_loss_stats(const CompareCell& cell) {
  MeanSd out;
  out.n = cell.runs.size();
  if (out.n == 0) return out;
  for (const RunResult& r : cell.runs) out.mean += r.summary.final_loss;
  out.mean /= static_cast<double>(out.n);
  if (out.n > 1) {
    double sq = 0.0;
    for (const RunResult& r : cell.runs) {
      const double d = r.summary.final_loss - out.mean;
      sq += d * d;
    }
    out.sd = std::sqrt(sq / static_cast<double>(out.n - 1));
  }
  return out;
}

CompareResult compare(const RunConfig& base, const SweepSpec& sweep, std::size_t seeds) {
  if (seeds < 1) throw ConfigError("seeds: must be >= 1");
  if (sweep.values.empty()) throw ConfigError("sweep: no values");
  base.validate();

  // Build and validate every config before running any of them.
  std::vector<std::vector<RunConfig>> plan;
  for (const std::string& value : sweep.values) {
    std::vector<RunConfig> row;
    for (std::size_t i = 0; i < seeds; ++i) {
      RunConfig cfg = base;
      set_field(cfg, sweep.field, value);
      cfg.seed = base.seed + i;
      cfg.output_dir = (fs::path(base.output_dir) / "runs" /
                        path_safe(sweep.field + "-" + value) / ("seed-" + std::to_string(cfg.seed)))
                           .string();
      cfg.validate();
      if (cfg.steps != base.steps && !(sweep.field == "steps" && sweep.values.size() == 1))
        throw ConfigError("compare: mismatched step counts (" + std::to_string(cfg.steps) +
                          " vs " + std::to_string(base.steps) + ")");
      row.push_back(std::move(cfg));
    }
    plan.push_back(std::move(row));
  }

  CompareResult result;
  result.sweep = sweep;
  for (std::size_t v = 0; v < plan.size(); ++v) {
    CompareCell cell;
    cell.value = sweep.values[v];
    for (const RunConfig& cfg : plan[v]) cell.runs.push_back(run_to_dir(cfg));
    result.cells.push_back(std::move(cell));
  }

  const std::size_t steps = result.cells.front().runs.front().metrics.size();
  for (const CompareCell& cell : result.cells)
    for (const RunResult& r : cell.runs)
      if (r.metrics.size() != steps) throw ConfigError("compare: mismatched step counts");

  // comparison.csv
  std::ostringstream csv;
  csv << "step";
  for (const CompareCell& cell : result.cells)
    for (const RunResult& r : cell.runs) {
      const std::string label = run_label(sweep, cell.value, r.summary.seed);
      csv << ',' << label << ":loss," << label << ":cum_refresh_ns," << label << ":approx_wq";
    }
  csv << '\n';
  std::vector<std::uint64_t> cum;
  for (const CompareCell& cell : result.cells)
    for (std::size_t k = 0; k < cell.runs.size(); ++k) cum.push_back(0);
  for (std::size_t s = 0; s < steps; ++s) {
    csv << s + 1;
    std::size_t c = 0;
    for (const CompareCell& cell : result.cells)
      for (const RunResult& r : cell.runs) {
        const StepMetrics& m = r.metrics[s];
        cum[c] += m.refresh_time_ns;
        csv << ',' << g17(m.loss) << ',' << cum[c] << ','
            << g17(m.approx_error[static_cast<std::size_t>(ParamRole::wq)]);
        ++c;
      }
    csv << '\n';
  }
  const fs::path out(base.output_dir);
  write_text((out / "comparison.csv").string(), csv.str());

  // final_losses.csv
  std::ostringstream fl;
  fl << "field,value,mean_final_loss,sd_final_loss,n\n";
  for (const CompareCell& cell : result.cells) {
    const MeanSd st = final_loss_stats(cell);
    fl << sweep.field << ',' << cell.value << ',' << g17(st.mean) << ',' << g17(st.sd) << ','
       << st.n << '\n';
  }
  write_text((out / "final_losses.csv").string(), fl.str());

  // Per-value means over seeds.
  std::vector<double> x(steps);
  for (std::size_t s = 0; s < steps; ++s) x[s] = static_cast<double>(s + 1);
  std::vector<Series> loss, refresh, approx;
  for (const CompareCell& cell : result.cells) {
    const std::string label = sweep.field + "=" + cell.value;
    Series l{label, std::vector<double>(steps, 0.0)};
    Series r{label, std::vector<double>(steps, 0.0)};
    Series a{label, std::vector<double>(steps, 0.0)};
    const double n = static_cast<double>(cell.runs.size());
    for (const RunResult& run : cell.runs) {
      double acc = 0.0;
      for (std::size_t s = 0; s < steps; ++s) {
        const StepMetrics& m = run.metrics[s];
        acc += static_cast<double>(m.refresh_time_ns) * 1e-6;
        l.y[s] += m.loss / n;
        r.y[s] += acc / n;
        a.y[s] += m.approx_error[static_cast<std::size_t>(ParamRole::wq)] / n;
      }
    }
    loss.push_back(std::move(l));
    refresh.push_back(std::move(r));
    approx.push_back(std::move(a));
  }
  write_text((out / "loss.svg").string(),
             line_chart({"Training loss", "step", "loss (mean over seeds)"}, x, loss));
  write_text((out / "refresh_time.svg").string(),
             line_chart({"Cumulative projection refresh time", "step", "ms (mean over seeds)"}, x,
                        refresh));
  write_text((out / "approx_error.svg").string(),
             line_chart({"Relative approximation error of the wq gradient", "step",
                         "||G - PP'G||_F / ||G||_F"},
                        x, approx));
  return result;
}

}  // namespace galore
