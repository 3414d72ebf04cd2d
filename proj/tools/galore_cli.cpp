// SPDX-License-Identifier: Apache-2.0
//
//   galore_cli run --config <path> [--method M] [--rank R] [--interval T]
//                  [--ratio RHO] [--seed S] [--steps N] [--out DIR]
//   galore_cli compare --config <path> --sweep field=v1,v2,... --seeds N
//
// Exit codes: 0 success, 1 usage/config/I-O error, 2 numerical abort.
#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "galore/errors.hpp"
#include "galore/harness/config.hpp"
#include "galore/harness/runner.hpp"

namespace {

using namespace galore;

struct Overrides {
  std::vector<std::pair<const char*, std::optional<std::string>>> values = {
      {"method", {}}, {"rank", {}}, {"interval", {}}, {"ratio", {}},
      {"seed", {}},   {"steps", {}}, {"out", {}}};

  void add_to(CLI::App& app) {
    for (auto& [key, slot] : values)
      app.add_option(std::string("--") + key, slot, std::string("override '") + key + "'");
  }
  void apply(RunConfig& cfg) const {
    for (const auto& [key, slot] : values)
      if (slot) set_field(cfg, key, *slot);
  }
};

RunConfig load(const std::string& path, const Overrides& overrides) {
  RunConfig cfg = read_config(path);
  overrides.apply(cfg);
  cfg.validate();
  return cfg;
}

void print_summary(const RunSummary& s, const std::string& dir) {
  std::printf("%s seed=%llu steps=%zu final_loss=%.6g refresh=%.3fs total=%.3fs -> %s\n",
              to_string(s.method), static_cast<unsigned long long>(s.seed), s.steps, s.final_loss,
              static_cast<double>(s.total_refresh_ns) * 1e-9,
              static_cast<double>(s.total_step_ns) * 1e-9, dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank projected AdamW training harness"};
  app.require_subcommand(1);

  std::string run_config;
  Overrides run_overrides;
  CLI::App* run_cmd = app.add_subcommand("run", "train one configuration");
  run_cmd->add_option("--config", run_config, "INI config file")->required();
  run_overrides.add_to(*run_cmd);

  std::string cmp_config, sweep_text;
  std::size_t seeds = 1;
  Overrides cmp_overrides;
  CLI::App* cmp_cmd = app.add_subcommand("compare", "sweep one field over several seeds");
  cmp_cmd->add_option("--config", cmp_config, "INI config file")->required();
  cmp_cmd->add_option("--sweep", sweep_text, "field=v1,v2,...")->required();
  cmp_cmd->add_option("--seeds", seeds, "seeds per value")->check(CLI::PositiveNumber);
  cmp_overrides.add_to(*cmp_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run_cmd) {
      const RunConfig cfg = load(run_config, run_overrides);
      const RunResult r = run_to_dir(cfg);
      print_summary(r.summary, cfg.output_dir);
    } else {
      const RunConfig cfg = load(cmp_config, cmp_overrides);
      const SweepSpec sweep = parse_sweep(sweep_text);
      const CompareResult r = compare(cfg, sweep, seeds);
      for (const CompareCell& cell : r.cells) {
        const MeanSd st = final_loss_stats(cell);
        std::printf("%s=%s final_loss mean=%.6g sd=%.3g n=%zu\n", sweep.field.c_str(),
                    cell.value.c_str(), st.mean, st.sd, st.n);
      }
      std::printf("outputs in %s\n", cfg.output_dir.c_str());
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid parameter: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
