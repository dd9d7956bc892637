#include <cmath>
#include <limits>

#include "doctest.h"
#include "fasopt/estimator.hpp"
#include "fasopt/problems.hpp"
#include "fasopt/solver.hpp"

using namespace fasopt;

namespace {

SolverConfig base_config(const ProblemBundle& bundle, std::int64_t rounds,
                         std::uint64_t seed = 5) {
  SolverConfig cfg;
  cfg.rounds = rounds;
  cfg.schedule.dim = bundle.leader.leader_dim;
  cfg.schedule.eta_bar = bundle.leader.constants.hyper_smoothness
                             ? bundle.leader.leader_dim /
                                   (4.0 * *bundle.leader.constants.hyper_smoothness)
                             : 0.1 * bundle.leader.leader_dim;
  cfg.schedule.delta_bar = 0.5;
  cfg.seed = seed;
  cfg.x0 = bundle.default_x0;
  cfg.y0 = bundle.default_y0;
  return cfg;
}

}  // namespace

TEST_CASE("trace structure and per-round identities") {
  const ProblemBundle bundle = QuadraticBilevel::standard(2).bundle(0.5);
  SolverConfig cfg = base_config(bundle, 48);
  const RunTrace trace = run_algorithm(bundle.leader, bundle.followers, cfg);

  REQUIRE(trace.rounds.size() == 48);
  CHECK(trace.resolved_inner_iterations ==
        choose_inner_iterations(bundle.followers.rate, 48, 2));

  for (std::size_t t = 0; t < trace.rounds.size(); ++t) {
    const RoundRecord& rec = trace.rounds[t];
    CHECK(std::fabs(norm2(rec.v) - 1.0) <= 1e-12);
    CHECK(rec.eta == step_size(cfg.schedule, rec.t));
    CHECK(rec.delta == probe_radius(cfg.schedule, rec.t));
    // x_probe = x + delta v
    for (std::size_t i = 0; i < rec.x.size(); ++i)
      CHECK(rec.x_probe[i] == doctest::Approx(rec.x[i] + rec.delta * rec.v[i]).epsilon(1e-12));
    // estimate = (d / delta)(f_probe - f_base) v
    const Vec expected =
        two_point_estimate(2, rec.delta, rec.v, rec.f_probe, rec.f_base);
    CHECK(rec.estimate == expected);  // same arithmetic, bitwise
    // leader update chains the rounds together
    const Vec next = axpy(-rec.eta, rec.estimate, rec.x);
    const Vec& stored = (t + 1 < trace.rounds.size()) ? trace.rounds[t + 1].x : trace.final_x;
    CHECK(next == stored);
    CHECK(rec.grad_norm_sq.has_value());
  }
}

TEST_CASE("identical configuration reproduces the trace bitwise") {
  const ProblemBundle bundle = QuadraticBilevel::standard(3).bundle(0.5);
  const SolverConfig cfg = base_config(bundle, 32, 99);
  const RunTrace a = run_algorithm(bundle.leader, bundle.followers, cfg);
  const RunTrace b = run_algorithm(bundle.leader, bundle.followers, cfg);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t t = 0; t < a.rounds.size(); ++t) {
    CHECK(a.rounds[t].x == b.rounds[t].x);
    CHECK(a.rounds[t].v == b.rounds[t].v);
    CHECK(a.rounds[t].f_probe == b.rounds[t].f_probe);
    CHECK(a.rounds[t].f_base == b.rounds[t].f_base);
    CHECK(a.rounds[t].estimate == b.rounds[t].estimate);
  }
  CHECK(a.final_x == b.final_x);
}

TEST_CASE("warm start chains the inner runs") {
  const ProblemBundle bundle = QuadraticBilevel::standard(2).bundle(0.5);
  SolverConfig cfg = base_config(bundle, 12);
  cfg.record_inner = true;
  const RunTrace trace = run_algorithm(bundle.leader, bundle.followers, cfg);

  CHECK(trace.rounds.front().inner_base.front() == cfg.y0);
  CHECK(trace.rounds.front().inner_probe.front() == cfg.y0);
  for (std::size_t t = 1; t < trace.rounds.size(); ++t) {
    // both probes of round t start from the base endpoint of round t-1
    CHECK(trace.rounds[t].inner_base.front() == trace.rounds[t - 1].y_base_final);
    CHECK(trace.rounds[t].inner_probe.front() == trace.rounds[t - 1].y_base_final);
  }
}

TEST_CASE("input validation") {
  const ProblemBundle bundle = QuadraticBilevel::standard(2).bundle(0.5);
  SolverConfig cfg = base_config(bundle, 8);

  SolverConfig bad = cfg;
  bad.x0 = {1.0};
  CHECK_THROWS_AS(run_algorithm(bundle.leader, bundle.followers, bad), std::invalid_argument);

  bad = cfg;
  bad.y0 = {100.0, 0.0};  // outside the box
  CHECK_THROWS_AS(run_algorithm(bundle.leader, bundle.followers, bad), std::invalid_argument);

  bad = cfg;
  bad.rounds = 0;
  CHECK_THROWS_AS(run_algorithm(bundle.leader, bundle.followers, bad), std::invalid_argument);

  // the step-size scale condition is enforced when the smoothness is known
  bad = cfg;
  bad.schedule.eta_bar = 0.6;  // d / (2 ell) = 2 / 4 = 0.5
  CHECK_THROWS_AS(run_algorithm(bundle.leader, bundle.followers, bad), std::invalid_argument);
}

TEST_CASE("unknown smoothness is recorded as a warning") {
  const ProblemBundle bundle = RoutingInstance::two_link(0.1).bundle(0.5);
  SolverConfig cfg;
  cfg.rounds = 4;
  cfg.inner_iterations = 10;
  cfg.schedule = {0.2, 0.5, bundle.leader.leader_dim};
  cfg.seed = 1;
  cfg.x0 = bundle.default_x0;
  cfg.y0 = bundle.default_y0;
  const RunTrace trace = run_algorithm(bundle.leader, bundle.followers, cfg);
  REQUIRE(trace.warnings.size() == 1);
  CHECK(trace.warnings.front().find("unverified") != std::string::npos);
}

TEST_CASE("non-finite leader iterates abort with the round index") {
  LeaderProblem problem;
  problem.leader_dim = 1;
  problem.follower_dim = 1;
  // finite readings whose difference overflows the scaled estimate
  problem.objective = [](const Vec& x, const Vec&) {
    if (x[0] > 1.0) return std::numeric_limits<double>::max();
    if (x[0] < 1.0) return -std::numeric_limits<double>::max();
    return 0.0;
  };
  FollowerSystem followers;
  followers.dim = 1;
  followers.step_size = 0.5;
  followers.rate = RateCertificate::exponential(1.0, 0.5);
  followers.potential_gradient = [](const Vec&, const Vec& y) { return y; };
  followers.projection = [](const Vec& y) { return project_box(y, {-1.0}, {1.0}); };
  followers.feasible = [](const Vec& y, double tol) {
    return y[0] >= -1.0 - tol && y[0] <= 1.0 + tol;
  };

  SolverConfig cfg;
  cfg.rounds = 4;
  cfg.inner_iterations = 1;
  cfg.schedule = {1.0, 1e-3, 1};  // tiny radius blows up the scaled difference
  cfg.seed = 3;
  cfg.x0 = {1.0};
  cfg.y0 = {0.0};

  try {
    run_algorithm(problem, followers, cfg);
    FAIL("expected SolverAbort");
  } catch (const SolverAbort& e) {
    CHECK(e.round() >= 0);
    CHECK(std::string(e.what()).find("round") != std::string::npos);
  }
}

TEST_CASE("longer horizons reach lower stationarity") {
  double short_value = 0.0, long_value = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ProblemBundle bundle = QuadraticBilevel::standard(2).bundle(0.5);
    SolverConfig cfg = base_config(bundle, 64, seed);
    const RunTrace short_run = run_algorithm(bundle.leader, bundle.followers, cfg);
    cfg.rounds = 1024;
    const RunTrace long_run = run_algorithm(bundle.leader, bundle.followers, cfg);
    short_value += min_grad_stationarity(short_run, bundle.leader).value;
    long_value += min_grad_stationarity(long_run, bundle.leader).value;
  }
  CHECK(long_value < short_value);
}

TEST_CASE("min-grad stationarity basics") {
  const ProblemBundle bundle = QuadraticBilevel::standard(2).bundle(0.5);
  SolverConfig cfg = base_config(bundle, 1);
  const RunTrace one = run_algorithm(bundle.leader, bundle.followers, cfg);
  const Stationarity s = min_grad_stationarity(one, bundle.leader);
  CHECK(s.best_t == 0);

  cfg.rounds = 64;
  const RunTrace trace = run_algorithm(bundle.leader, bundle.followers, cfg);
  RunTrace prefix = trace;
  prefix.rounds.resize(16);
  CHECK(min_grad_stationarity(trace, bundle.leader).value <=
        min_grad_stationarity(prefix, bundle.leader).value);

  LeaderProblem no_grad = bundle.leader;
  no_grad.hypergradient = nullptr;
  CHECK_THROWS_AS(min_grad_stationarity(trace, no_grad), std::invalid_argument);

  // an externally supplied gradient source (e.g. finite differences) is
  // interchangeable with the problem's closed form
  const QuadraticBilevel qb = QuadraticBilevel::standard(2);
  const Stationarity via_fn =
      min_grad_stationarity(trace, [&](const Vec& x) { return qb.hypergradient(x); });
  const Stationarity via_problem = min_grad_stationarity(trace, bundle.leader);
  CHECK(via_fn.best_t == via_problem.best_t);
  CHECK(via_fn.value == doctest::Approx(via_problem.value).epsilon(1e-12));
}

TEST_CASE("objective decreases from start to finish on seed average") {
  const ProblemBundle bundle = QuadraticBilevel::standard(2).bundle(0.5);
  double start_mean = 0.0, end_mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    SolverConfig cfg = base_config(bundle, 64, seed);
    const RunTrace trace = run_algorithm(bundle.leader, bundle.followers, cfg);
    start_mean += bundle.leader.hyper_objective(cfg.x0);
    end_mean += bundle.leader.hyper_objective(trace.final_x);
  }
  CHECK(end_mean / 50.0 < start_mean / 50.0);
}

TEST_CASE("fixed small K plateaus above the adaptive choice") {
  const ProblemBundle bundle = QuadraticBilevel::standard(2, 2.0).bundle(0.5);
  double fixed_small = 0.0, adaptive = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SolverConfig cfg = base_config(bundle, 512, seed);
    cfg.inner_iterations = 1;
    fixed_small += min_grad_stationarity(
        run_algorithm(bundle.leader, bundle.followers, cfg), bundle.leader).value;
    cfg.inner_iterations = kAutoInnerIterations;
    adaptive += min_grad_stationarity(
        run_algorithm(bundle.leader, bundle.followers, cfg), bundle.leader).value;
  }
  CHECK(fixed_small > adaptive);
}
