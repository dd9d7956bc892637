#ifndef FASOPT_EXPERIMENT_HPP
#define FASOPT_EXPERIMENT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fasopt/problems.hpp"
#include "fasopt/solver.hpp"

#include "json.hpp"

namespace fasopt {

/// Process exit codes shared by the experiment driver and the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitRunAbort = 3,
  kExitDiagnosticFailure = 4,
};

struct DiagnosticsFlags {
  bool error_decomposition = false;
  bool shadow = false;
  bool saddle_escape = false;
  bool rate_fit = false;

  std::int64_t mc_samples = 10000;             // error decomposition
  std::vector<std::int64_t> shadow_anchors = {32, 512};
  std::int64_t shadow_horizon = 16;
  double escape_radius_sq = 0.01;              // saddle escape threshold on ||x||^2
};

struct SweepLists {
  std::vector<std::int64_t> T;
  std::vector<std::int64_t> K;
  std::vector<int> d;
  std::vector<double> rho;
  std::vector<double> lambda;

  bool empty() const {
    return T.empty() && K.empty() && d.empty() && rho.empty() && lambda.empty();
  }
};

struct ExperimentConfig {
  std::string kind;          // quadratic | strict_saddle | routing
  nlohmann::json problem;    // validated kind-specific parameters
  std::string config_dir;    // directory of the config file, for relative paths

  double gamma = 0.5;
  std::int64_t rounds = 0;
  std::int64_t inner_iterations = kAutoInnerIterations;
  double eta_bar = 0.0;      // 0 means: default from the problem constants
  double delta_bar = 0.5;
  bool record_inner = false;
  std::optional<Vec> x0;
  std::optional<Vec> y0;

  std::int64_t replicates = 20;
  std::vector<std::uint64_t> seeds;  // resolved, distinct

  SweepLists sweep;
  DiagnosticsFlags diagnostics;
  std::string output_dir = "out";

  nlohmann::json echo;  // the parsed document, reproduced in the manifest
};

/// Overrides a sweep cell applies on top of the base config.
struct SweepCell {
  std::optional<std::int64_t> T;
  std::optional<std::int64_t> K;
  std::optional<int> d;
  std::optional<double> rho;     // follower rate target; maps to gamma = 1 - rho
  std::optional<double> lambda;  // routing toll penalty

  std::string label() const;  // stable key used in file names, "" for the base cell
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

/// Parses and validates an experiment document. Throws ConfigError with
/// the offending field path.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_json(const nlohmann::json& doc, const std::string& config_dir);

/// Instantiates the problem bundle for one sweep cell.
ProblemBundle build_bundle(const ExperimentConfig& cfg, const SweepCell& cell);

/// Resolves the full solver configuration for one (cell, seed) run.
SolverConfig build_solver_config(const ExperimentConfig& cfg, const ProblemBundle& bundle,
                                 const SweepCell& cell, std::uint64_t seed);

/// Parses the routing instance document {edges, od_pairs, lambda}.
RoutingInstance parse_routing_instance(const nlohmann::json& doc);
RoutingInstance load_routing_instance(const std::string& path);

/// Fixed per-round trace schema:
///   t, eta, delta, v[0..d), x[0..d), f_hat, f_base, est_norm[, grad_norm_sq]
/// Floats are written with shortest round-trip precision, '\n' endings.
void write_trace_csv(const RunTrace& trace, const std::string& path);
RunTrace read_trace_csv(const std::string& path);

struct RunOptions {
  int jobs = 1;
  std::int64_t seed_base_override = -1;  // >= 0 replaces the config's seed list
  bool verbose = false;
  std::string output_dir_override;       // from --out or FASOPT_OUT_DIR
};

/// Executes replicates (run) or the full sweep grid (sweep), writing one
/// trace CSV per run, aggregate.csv, long.csv and manifest.json into the
/// output directory. Returns a process exit code.
int run_experiment(const ExperimentConfig& cfg, const RunOptions& opts, bool honor_sweep);

/// Runs the diagnostics enabled in the config against stored traces.
int run_diagnostics(const ExperimentConfig& cfg, const RunOptions& opts);

/// Rebuilds aggregate.csv and long.csv from the traces found in `dir`.
int write_report(const std::string& dir, bool verbose);

/// FNV-1a 64-bit content hash, hex encoded; used by the manifest.
std::string file_hash_hex(const std::string& path);

/// Shortest round-trip decimal encoding of a double.
std::string format_double(double value);

}  // namespace fasopt

#endif
