#include "fasopt.h"

#include <cstdio>
#include <cstring>
#include <string>

#include "fasopt/experiment.hpp"
#include "fasopt/problems.hpp"
#include "fasopt/solver.hpp"

using namespace fasopt;

struct fasopt_problem {
  ProblemBundle bundle;
};

struct fasopt_trace {
  RunTrace trace;
};

namespace {

thread_local std::string g_last_error;

int set_error(int code, const char* what) {
  g_last_error = what ? what : "";
  return code;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FASOPT_OK;
  } catch (const SolverAbort& e) {
    return set_error(FASOPT_ERR_DIVERGED, e.what());
  } catch (const std::invalid_argument& e) {
    return set_error(FASOPT_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return set_error(FASOPT_ERR_RUNTIME, e.what());
  } catch (...) {
    return set_error(FASOPT_ERR_RUNTIME, "unknown error");
  }
}

int require(bool condition, const char* what) {
  return condition ? FASOPT_OK : set_error(FASOPT_ERR_INVALID_ARGUMENT, what);
}

Vec to_vec(const double* data, std::size_t n) { return Vec(data, data + n); }

RateCertificate make_rate(int32_t kind, double prefactor, double exponent, double ratio) {
  if (kind == FASOPT_RATE_POLYNOMIAL) return RateCertificate::polynomial(prefactor, exponent);
  if (kind == FASOPT_RATE_EXPONENTIAL) return RateCertificate::exponential(
      prefactor > 0.0 ? prefactor : 1.0, ratio);
  throw std::invalid_argument("unknown rate kind");
}

int experiment_exit(int (*runner)(const ExperimentConfig&, const RunOptions&, bool),
                    const char* config_path, const char* out_dir, int32_t jobs,
                    int64_t seed_base, int32_t verbose, bool honor_sweep) {
  try {
    const ExperimentConfig cfg = parse_config(config_path ? config_path : "");
    RunOptions opts;
    opts.jobs = jobs;
    opts.seed_base_override = seed_base;
    opts.verbose = verbose != 0;
    if (out_dir && *out_dir) opts.output_dir_override = out_dir;
    return runner(cfg, opts, honor_sweep);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "fasopt: config error: %s\n", e.what());
    g_last_error = e.what();
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fasopt: %s\n", e.what());
    g_last_error = e.what();
    return kExitRunAbort;
  }
}

}  // namespace

extern "C" {

const char* fasopt_version(void) { return "0.1.0"; }

const char* fasopt_last_error(void) { return g_last_error.c_str(); }

int fasopt_problem_quadratic(const double* a, int32_t d, const double* b, int32_t dprime,
                             const double* B, const double* c, const double* lo,
                             const double* hi, double gamma, fasopt_problem** out) {
  if (int rc = require(out && a && b && B && c && lo && hi, "null pointer argument")) return rc;
  if (int rc = require(d > 0 && dprime > 0, "dimensions must be positive")) return rc;
  return guarded([&] {
    QuadraticBilevel qb;
    qb.a = to_vec(a, static_cast<std::size_t>(d));
    qb.b = to_vec(b, static_cast<std::size_t>(dprime));
    qb.B = Mat(static_cast<std::size_t>(dprime), static_cast<std::size_t>(d));
    std::memcpy(qb.B.data.data(), B, sizeof(double) * qb.B.data.size());
    qb.c = to_vec(c, static_cast<std::size_t>(dprime));
    qb.box_lo = to_vec(lo, static_cast<std::size_t>(dprime));
    qb.box_hi = to_vec(hi, static_cast<std::size_t>(dprime));
    *out = new fasopt_problem{qb.bundle(gamma)};
  });
}

int fasopt_problem_quadratic_standard(int32_t d, double coupling, double gamma,
                                      fasopt_problem** out) {
  if (int rc = require(out != nullptr, "null output pointer")) return rc;
  return guarded([&] {
    *out = new fasopt_problem{QuadraticBilevel::standard(d, coupling).bundle(gamma)};
  });
}

int fasopt_problem_strict_saddle(const double* curvature, int32_t d, double gamma,
                                 fasopt_problem** out) {
  if (int rc = require(out && curvature, "null pointer argument")) return rc;
  if (int rc = require(d > 0, "dimension must be positive")) return rc;
  return guarded([&] {
    StrictSaddleProblem sp;
    sp.curvature = to_vec(curvature, static_cast<std::size_t>(d));
    *out = new fasopt_problem{sp.bundle(gamma)};
  });
}

int fasopt_problem_routing_json(const char* json_text, double gamma, fasopt_problem** out) {
  if (int rc = require(out && json_text, "null pointer argument")) return rc;
  return guarded([&] {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("invalid JSON: ") + e.what());
    }
    RoutingInstance inst;
    try {
      inst = parse_routing_instance(doc);
    } catch (const ConfigError& e) {
      throw std::invalid_argument(e.what());
    }
    *out = new fasopt_problem{inst.bundle(gamma)};
  });
}

void fasopt_problem_free(fasopt_problem* problem) { delete problem; }

int fasopt_problem_dims(const fasopt_problem* problem, int32_t* leader_dim,
                        int32_t* follower_dim) {
  if (int rc = require(problem != nullptr, "null problem")) return rc;
  if (leader_dim) *leader_dim = problem->bundle.leader.leader_dim;
  if (follower_dim) *follower_dim = problem->bundle.leader.follower_dim;
  return FASOPT_OK;
}

int fasopt_problem_default_start(const fasopt_problem* problem, double* x0, double* y0) {
  if (int rc = require(problem != nullptr, "null problem")) return rc;
  if (x0)
    std::memcpy(x0, problem->bundle.default_x0.data(),
                sizeof(double) * problem->bundle.default_x0.size());
  if (y0)
    std::memcpy(y0, problem->bundle.default_y0.data(),
                sizeof(double) * problem->bundle.default_y0.size());
  return FASOPT_OK;
}

double fasopt_step_size(double eta_bar, int32_t d, int64_t t) {
  Schedule s{eta_bar, 1.0, d};
  return step_size(s, t);
}

double fasopt_probe_radius(double delta_bar, int32_t d, int64_t t) {
  Schedule s{1.0, delta_bar, d};
  return probe_radius(s, t);
}

int fasopt_alpha_of_k(int32_t rate_kind, double prefactor, double exponent, double ratio,
                      int64_t k, double* out) {
  if (int rc = require(out != nullptr, "null output pointer")) return rc;
  return guarded([&] { *out = alpha_of_k(make_rate(rate_kind, prefactor, exponent, ratio), k); });
}

int fasopt_choose_inner_iterations(int32_t rate_kind, double prefactor, double exponent,
                                   double ratio, int64_t horizon, int32_t d, int64_t* out) {
  if (int rc = require(out != nullptr, "null output pointer")) return rc;
  return guarded([&] {
    *out = choose_inner_iterations(make_rate(rate_kind, prefactor, exponent, ratio), horizon, d);
  });
}

int fasopt_run(const fasopt_problem* problem, const fasopt_solver_config* config,
               const double* x0, const double* y0, fasopt_trace** out) {
  if (int rc = require(problem && config && out, "null pointer argument")) return rc;
  return guarded([&] {
    const ProblemBundle& bundle = problem->bundle;
    SolverConfig sc;
    sc.rounds = config->rounds;
    sc.inner_iterations =
        (config->inner_iterations <= 0) ? kAutoInnerIterations : config->inner_iterations;
    sc.seed = config->seed;
    sc.record_inner = config->record_inner != 0;
    sc.schedule.dim = bundle.leader.leader_dim;
    if (config->eta_bar > 0.0) {
      sc.schedule.eta_bar = config->eta_bar;
    } else if (bundle.leader.constants.hyper_smoothness) {
      sc.schedule.eta_bar = static_cast<double>(bundle.leader.leader_dim) /
                            (4.0 * *bundle.leader.constants.hyper_smoothness);
    } else {
      sc.schedule.eta_bar = 0.1 * static_cast<double>(bundle.leader.leader_dim);
    }
    sc.schedule.delta_bar = (config->delta_bar > 0.0) ? config->delta_bar : 0.5;
    sc.x0 = x0 ? to_vec(x0, static_cast<std::size_t>(bundle.leader.leader_dim))
               : bundle.default_x0;
    sc.y0 = y0 ? to_vec(y0, static_cast<std::size_t>(bundle.leader.follower_dim))
               : bundle.default_y0;
    *out = new fasopt_trace{run_algorithm(bundle.leader, bundle.followers, sc)};
  });
}

void fasopt_trace_free(fasopt_trace* trace) { delete trace; }

int64_t fasopt_trace_rounds(const fasopt_trace* trace) {
  return trace ? static_cast<int64_t>(trace->trace.rounds.size()) : 0;
}

int64_t fasopt_trace_inner_iterations(const fasopt_trace* trace) {
  return trace ? trace->trace.resolved_inner_iterations : 0;
}

int fasopt_trace_round(const fasopt_trace* trace, int64_t t, double* x, double* v, double* eta,
                       double* delta, double* f_probe, double* f_base, double* estimate,
                       double* grad_norm_sq, int32_t* has_grad_norm_sq) {
  if (int rc = require(trace != nullptr, "null trace")) return rc;
  if (int rc = require(t >= 0 && t < static_cast<int64_t>(trace->trace.rounds.size()),
                       "round index out of range"))
    return rc;
  const RoundRecord& rec = trace->trace.rounds[static_cast<std::size_t>(t)];
  const std::size_t dim = rec.x.size();
  if (x) std::memcpy(x, rec.x.data(), sizeof(double) * dim);
  if (v) std::memcpy(v, rec.v.data(), sizeof(double) * dim);
  if (eta) *eta = rec.eta;
  if (delta) *delta = rec.delta;
  if (f_probe) *f_probe = rec.f_probe;
  if (f_base) *f_base = rec.f_base;
  if (estimate) std::memcpy(estimate, rec.estimate.data(), sizeof(double) * dim);
  if (grad_norm_sq) *grad_norm_sq = rec.grad_norm_sq.value_or(0.0);
  if (has_grad_norm_sq) *has_grad_norm_sq = rec.grad_norm_sq.has_value() ? 1 : 0;
  return FASOPT_OK;
}

int fasopt_trace_final_x(const fasopt_trace* trace, double* x) {
  if (int rc = require(trace && x, "null pointer argument")) return rc;
  std::memcpy(x, trace->trace.final_x.data(), sizeof(double) * trace->trace.final_x.size());
  return FASOPT_OK;
}

int fasopt_trace_min_grad(const fasopt_trace* trace, const fasopt_problem* problem,
                          int64_t* best_t, double* value) {
  if (int rc = require(trace && problem, "null pointer argument")) return rc;
  return guarded([&] {
    const Stationarity s = min_grad_stationarity(trace->trace, problem->bundle.leader);
    if (best_t) *best_t = s.best_t;
    if (value) *value = s.value;
  });
}

int fasopt_trace_write_csv(const fasopt_trace* trace, const char* path) {
  if (int rc = require(trace && path, "null pointer argument")) return rc;
  return guarded([&] { write_trace_csv(trace->trace, path); });
}

int fasopt_experiment_run(const char* config_path, const char* out_dir, int32_t jobs,
                          int64_t seed_base, int32_t verbose) {
  return experiment_exit(&run_experiment, config_path, out_dir, jobs, seed_base, verbose,
                         /*honor_sweep=*/false);
}

int fasopt_experiment_sweep(const char* config_path, const char* out_dir, int32_t jobs,
                            int64_t seed_base, int32_t verbose) {
  return experiment_exit(&run_experiment, config_path, out_dir, jobs, seed_base, verbose,
                         /*honor_sweep=*/true);
}

int fasopt_experiment_diagnose(const char* config_path, const char* out_dir, int32_t verbose) {
  try {
    const ExperimentConfig cfg = parse_config(config_path ? config_path : "");
    RunOptions opts;
    opts.verbose = verbose != 0;
    if (out_dir && *out_dir) opts.output_dir_override = out_dir;
    return run_diagnostics(cfg, opts);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "fasopt: config error: %s\n", e.what());
    g_last_error = e.what();
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fasopt: %s\n", e.what());
    g_last_error = e.what();
    return kExitRunAbort;
  }
}

int fasopt_experiment_report(const char* dir, int32_t verbose) {
  try {
    return write_report(dir ? dir : ".", verbose != 0);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "fasopt: %s\n", e.what());
    g_last_error = e.what();
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fasopt: %s\n", e.what());
    g_last_error = e.what();
    return kExitRunAbort;
  }
}

}  // extern "C"
