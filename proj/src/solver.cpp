#include "fasopt/solver.hpp"

#include <cmath>
#include <limits>

#include "fasopt/estimator.hpp"
#include "fasopt/rng.hpp"

namespace fasopt {

namespace {

void validate_inputs(const LeaderProblem& problem, const FollowerSystem& followers,
                     const SolverConfig& cfg) {
  problem.validate();
  followers.validate();
  if (problem.follower_dim != followers.dim)
    throw std::invalid_argument("run_algorithm: problem/follower dimension mismatch");
  if (cfg.rounds < 1) throw std::invalid_argument("run_algorithm: rounds must be >= 1");
  check_dim(cfg.x0, static_cast<std::size_t>(problem.leader_dim), "run_algorithm: x0");
  check_finite(cfg.x0, "run_algorithm: x0");
  check_dim(cfg.y0, static_cast<std::size_t>(problem.follower_dim), "run_algorithm: y0");
  check_finite(cfg.y0, "run_algorithm: y0");
  if (followers.feasible && !followers.feasible(cfg.y0, 1e-9))
    throw std::invalid_argument("run_algorithm: y0 infeasible");
  cfg.schedule.validate();
  if (cfg.schedule.dim != problem.leader_dim)
    throw std::invalid_argument("run_algorithm: schedule dimension mismatch");
}

}  // namespace

RunTrace run_algorithm(const LeaderProblem& problem, const FollowerSystem& followers,
                       const SolverConfig& cfg) {
  validate_inputs(problem, followers, cfg);

  RunTrace trace;
  trace.config = cfg;

  const std::int64_t inner =
      (cfg.inner_iterations == kAutoInnerIterations)
          ? choose_inner_iterations(followers.rate, cfg.rounds, problem.leader_dim)
          : cfg.inner_iterations;
  if (inner < 1) throw std::invalid_argument("run_algorithm: inner_iterations must be >= 1");
  trace.resolved_inner_iterations = inner;
  trace.config.inner_iterations = inner;

  // The step-size scale condition eta_bar <= d / (2 * hyper_smoothness) is
  // enforced when the constant is known and recorded as unverified otherwise.
  if (problem.constants.hyper_smoothness) {
    const double limit =
        static_cast<double>(problem.leader_dim) / (2.0 * *problem.constants.hyper_smoothness);
    if (cfg.schedule.eta_bar > limit)
      throw std::invalid_argument("run_algorithm: eta_bar exceeds d / (2 * hyper_smoothness) = " +
                                  std::to_string(limit));
  } else {
    trace.warnings.push_back(
        "eta_bar condition unverified: hyper_smoothness constant not supplied");
  }

  const int dim = problem.leader_dim;
  RngStream rng(cfg.seed, /*stream_id=*/0);

  Vec x = cfg.x0;
  Vec warm_start = cfg.y0;
  trace.rounds.reserve(static_cast<std::size_t>(cfg.rounds));

  for (std::int64_t t = 0; t < cfg.rounds; ++t) {
    RoundRecord rec;
    rec.t = t;
    rec.x = x;
    rec.eta = step_size(cfg.schedule, t);
    rec.delta = probe_radius(cfg.schedule, t);
    rec.v = sample_unit_sphere(rng, dim);
    rec.x_probe = axpy(rec.delta, rec.v, x);

    // Both inner runs share the warm start from the previous round.
    InnerRunResult at_probe = run_inner(followers, rec.x_probe, warm_start, inner,
                                        cfg.record_inner);
    InnerRunResult at_base = run_inner(followers, x, warm_start, inner, cfg.record_inner);
    rec.y_probe_final = std::move(at_probe.y_final);
    rec.y_base_final = std::move(at_base.y_final);
    if (cfg.record_inner) {
      rec.inner_probe = std::move(at_probe.iterates);
      rec.inner_base = std::move(at_base.iterates);
    }

    rec.f_probe = problem.objective(rec.x_probe, rec.y_probe_final);
    rec.f_base = problem.objective(x, rec.y_base_final);
    rec.estimate = two_point_estimate(dim, rec.delta, rec.v, rec.f_probe, rec.f_base);

    if (problem.has_hypergradient()) rec.grad_norm_sq = norm2_sq(problem.hypergradient(x));

    x = axpy(-rec.eta, rec.estimate, x);
    if (!all_finite(x))
      throw SolverAbort(t, "run_algorithm: leader iterate non-finite after round " +
                               std::to_string(t));

    warm_start = rec.y_base_final;
    trace.rounds.push_back(std::move(rec));
  }
  trace.final_x = std::move(x);
  return trace;
}

Stationarity min_grad_stationarity(const RunTrace& trace, const LeaderProblem& problem) {
  if (!problem.has_hypergradient())
    throw std::invalid_argument("min_grad_stationarity: no gradient source available");
  if (trace.rounds.empty())
    throw std::invalid_argument("min_grad_stationarity: empty trace");
  Stationarity best{0, std::numeric_limits<double>::infinity()};
  for (const RoundRecord& rec : trace.rounds) {
    const double value =
        rec.grad_norm_sq ? *rec.grad_norm_sq : norm2_sq(problem.hypergradient(rec.x));
    if (value < best.value) {
      best.value = value;
      best.best_t = rec.t;
    }
  }
  return best;
}

Stationarity min_grad_stationarity(const RunTrace& trace,
                                   const std::function<Vec(const Vec&)>& hypergradient) {
  if (!hypergradient)
    throw std::invalid_argument("min_grad_stationarity: no gradient source available");
  if (trace.rounds.empty())
    throw std::invalid_argument("min_grad_stationarity: empty trace");
  Stationarity best{0, std::numeric_limits<double>::infinity()};
  for (const RoundRecord& rec : trace.rounds) {
    const double value = norm2_sq(hypergradient(rec.x));
    if (value < best.value) {
      best.value = value;
      best.best_t = rec.t;
    }
  }
  return best;
}

}  // namespace fasopt
