#ifndef FASOPT_DIAGNOSTICS_HPP
#define FASOPT_DIAGNOSTICS_HPP

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fasopt/rng.hpp"
#include "fasopt/solver.hpp"
#include "fasopt/vec.hpp"

namespace fasopt {

/// Per-round split of the two-point estimate into
///   estimate = hypergradient(x_t) + bias + noise + follower_error
/// where `bias` is the smoothing bias of the exact-value estimator,
/// `noise` its zero-mean direction noise, and `follower_error` the extra
/// term from reading unconverged inner endpoints. The three parts sum to
/// estimate - hypergradient(x_t) by construction.
struct ErrorDecompositionRound {
  Vec bias;            // E[oracle estimate | x_t] - hypergradient(x_t)
  Vec noise;           // oracle estimate - E[oracle estimate | x_t]
  Vec follower_error;  // estimate - oracle estimate
};

struct ErrorDecomposition {
  std::vector<ErrorDecompositionRound> rounds;

  double mean_sq_bias() const;
  double mean_sq_noise() const;
  double mean_sq_follower_error() const;
  double max_follower_error_norm() const;
};

/// Central-difference hypergradient with the follower response resolved by
/// a long inner run; all probe runs warm-start from one converged base
/// point (`steps` must reach residual < 1e-8 there). Independent oracle for
/// problems without a closed-form hypergradient.
Vec fd_hypergradient(const LeaderProblem& problem, const FollowerSystem& followers, const Vec& x,
                     double h, std::int64_t steps, const Vec& y0 = {});

/// Requires the problem's closed-form solution map and hypergradient. The
/// conditional mean of the oracle estimator is measured with n_mc fresh
/// sphere directions per round at the frozen iterate.
ErrorDecomposition error_decomposition(const LeaderProblem& problem, const RunTrace& trace,
                                       std::int64_t n_mc, RngStream& rng);

/// Gap between the recorded iterates x_{t+s} and the exact-gradient
/// comparison trajectory started at the round-t probe point with the same
/// decaying step sizes. Returns the gaps for s = 0..horizon.
std::vector<double> shadow_trajectory_gap(const LeaderProblem& problem, const RunTrace& trace,
                                          std::int64_t anchor, std::int64_t horizon);

/// Minimum eigenvalue of the Hessian of the reduced objective at x,
/// estimated from central-difference Hessian-vector products and shifted
/// power iteration. Throws if the Rayleigh quotient has not stabilized
/// after `iters` iterations.
double min_hessian_eigenvalue(const std::function<Vec(const Vec&)>& gradient, const Vec& x,
                              double probe_h, std::int64_t iters);

/// Least-squares slope of log y against log T. Needs >= 3 points with
/// positive coordinates.
double loglog_slope(const std::vector<std::pair<double, double>>& points);

}  // namespace fasopt

#endif
