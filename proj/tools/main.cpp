// fasopt command-line experiment runner. Talks to the shared library
// exclusively through the C interface.

#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "fasopt.h"

int main(int argc, char** argv) {
  CLI::App app{"fasopt - follower-agnostic Stackelberg optimization experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fasopt_version()));

  std::string config_path;
  std::string out_dir;
  std::string report_dir;
  int jobs = 1;
  std::int64_t seed_base = -1;
  bool verbose = false;

  auto add_common = [&](CLI::App* cmd, bool with_jobs) {
    cmd->add_option("config,--config", config_path, "experiment config (JSON)")->required();
    cmd->add_option("--out", out_dir, "output directory (overrides config and FASOPT_OUT_DIR)");
    if (with_jobs) {
      cmd->add_option("--jobs", jobs, "worker threads for replicate runs")->check(CLI::PositiveNumber);
      cmd->add_option("--seed-base", seed_base, "replace the config seeds by base, base+1, ...");
    }
    cmd->add_flag("--verbose", verbose, "progress notes on stderr");
  };

  CLI::App* run = app.add_subcommand("run", "execute the configured replicates (no sweep)");
  add_common(run, true);
  CLI::App* sweep = app.add_subcommand("sweep", "execute the full sweep grid");
  add_common(sweep, true);
  CLI::App* diagnose =
      app.add_subcommand("diagnose", "run the enabled diagnostics on stored traces");
  add_common(diagnose, false);

  CLI::App* report = app.add_subcommand("report", "rebuild aggregate and long-format tables");
  report->add_option("dir", report_dir, "output directory of a previous run/sweep")->required();
  report->add_flag("--verbose", verbose, "progress notes on stderr");

  CLI11_PARSE(app, argc, argv);

  const char* out = out_dir.empty() ? nullptr : out_dir.c_str();
  if (run->parsed())
    return fasopt_experiment_run(config_path.c_str(), out, jobs, seed_base, verbose ? 1 : 0);
  if (sweep->parsed())
    return fasopt_experiment_sweep(config_path.c_str(), out, jobs, seed_base, verbose ? 1 : 0);
  if (diagnose->parsed())
    return fasopt_experiment_diagnose(config_path.c_str(), out, verbose ? 1 : 0);
  return fasopt_experiment_report(report_dir.c_str(), verbose ? 1 : 0);
}
