#include "fasopt/diagnostics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "fasopt/estimator.hpp"

namespace fasopt {

namespace {

double mean_sq(const std::vector<ErrorDecompositionRound>& rounds,
               const Vec ErrorDecompositionRound::*member) {
  if (rounds.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rounds) s += norm2_sq(r.*member);
  return s / static_cast<double>(rounds.size());
}

}  // namespace

double ErrorDecomposition::mean_sq_bias() const {
  return mean_sq(rounds, &ErrorDecompositionRound::bias);
}
double ErrorDecomposition::mean_sq_noise() const {
  return mean_sq(rounds, &ErrorDecompositionRound::noise);
}
double ErrorDecomposition::mean_sq_follower_error() const {
  return mean_sq(rounds, &ErrorDecompositionRound::follower_error);
}
double ErrorDecomposition::max_follower_error_norm() const {
  double m = 0.0;
  for (const auto& r : rounds) m = std::max(m, norm2(r.follower_error));
  return m;
}

Vec fd_hypergradient(const LeaderProblem& problem, const FollowerSystem& followers, const Vec& x,
                     double h, std::int64_t steps, const Vec& y0) {
  if (!(h > 0.0) || !std::isfinite(h))
    throw std::invalid_argument("fd_hypergradient: h must be positive");
  check_dim(x, static_cast<std::size_t>(problem.leader_dim), "fd_hypergradient: x");

  Vec start = y0;
  if (start.empty()) start = followers.projection(Vec(followers.dim, 0.0));

  const InnerRunResult base = run_inner(followers, x, start, steps);
  if (base.residual > 1e-8)
    throw std::runtime_error("fd_hypergradient: inner run not converged (residual " +
                             std::to_string(base.residual) + ")");
  const Vec& warm = base.y_final;

  Vec grad(x.size(), 0.0);
  Vec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const Vec y_plus = run_inner(followers, probe, warm, steps).y_final;
    const double f_plus = problem.objective(probe, y_plus);
    probe[i] = x[i] - h;
    const Vec y_minus = run_inner(followers, probe, warm, steps).y_final;
    const double f_minus = problem.objective(probe, y_minus);
    probe[i] = x[i];
    grad[i] = (f_plus - f_minus) / (2.0 * h);
  }
  return grad;
}

ErrorDecomposition error_decomposition(const LeaderProblem& problem, const RunTrace& trace,
                                       std::int64_t n_mc, RngStream& rng) {
  if (!problem.has_solution_map() || !problem.has_hypergradient())
    throw std::invalid_argument(
        "error_decomposition: problem must supply a closed-form solution map and hypergradient");
  if (n_mc < 1) throw std::invalid_argument("error_decomposition: n_mc must be >= 1");

  const int dim = problem.leader_dim;
  ErrorDecomposition out;
  out.rounds.reserve(trace.rounds.size());

  for (const RoundRecord& rec : trace.rounds) {
    const double hyper_base = problem.hyper_objective(rec.x);
    const double hyper_probe = problem.hyper_objective(rec.x_probe);
    const Vec oracle = oracle_estimate(dim, rec.delta, rec.v, hyper_probe, hyper_base);

    // conditional mean of the oracle estimator at the frozen iterate,
    // measured with fresh directions
    Vec mean(rec.x.size(), 0.0);
    for (std::int64_t i = 0; i < n_mc; ++i) {
      const Vec u = sample_unit_sphere(rng, dim);
      const Vec probe_point = axpy(rec.delta, u, rec.x);
      const Vec draw =
          oracle_estimate(dim, rec.delta, u, problem.hyper_objective(probe_point), hyper_base);
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += draw[j];
    }
    for (auto& m : mean) m /= static_cast<double>(n_mc);

    const Vec grad = problem.hypergradient(rec.x);
    ErrorDecompositionRound row;
    row.bias = sub(mean, grad);
    row.noise = sub(oracle, mean);
    row.follower_error = sub(rec.estimate, oracle);
    out.rounds.push_back(std::move(row));
  }
  return out;
}

std::vector<double> shadow_trajectory_gap(const LeaderProblem& problem, const RunTrace& trace,
                                          std::int64_t anchor, std::int64_t horizon) {
  if (!problem.has_hypergradient())
    throw std::invalid_argument("shadow_trajectory_gap: hypergradient required");
  const std::int64_t rounds = static_cast<std::int64_t>(trace.rounds.size());
  if (anchor < 0 || horizon < 0 || anchor + horizon > rounds)
    throw std::invalid_argument("shadow_trajectory_gap: anchor + horizon exceeds the trace");

  auto iterate_at = [&](std::int64_t t) -> const Vec& {
    return (t < rounds) ? trace.rounds[static_cast<std::size_t>(t)].x : trace.final_x;
  };

  std::vector<double> gaps;
  gaps.reserve(static_cast<std::size_t>(horizon) + 1);
  Vec z = trace.rounds[static_cast<std::size_t>(anchor)].x_probe;
  for (std::int64_t s = 0; s <= horizon; ++s) {
    gaps.push_back(dist2(iterate_at(anchor + s), z));
    if (s < horizon) {
      const double eta = trace.rounds[static_cast<std::size_t>(anchor + s)].eta;
      z = axpy(-eta, problem.hypergradient(z), z);
    }
  }
  return gaps;
}

double min_hessian_eigenvalue(const std::function<Vec(const Vec&)>& gradient, const Vec& x,
                              double probe_h, std::int64_t iters) {
  if (!(probe_h > 0.0)) throw std::invalid_argument("min_hessian_eigenvalue: probe_h must be > 0");
  if (iters < 1) throw std::invalid_argument("min_hessian_eigenvalue: iters must be >= 1");
  const std::size_t dim = x.size();

  // central-difference Hessian-vector product along a unit direction
  auto hvp = [&](const Vec& unit) {
    const Vec plus = gradient(axpy(probe_h, unit, x));
    const Vec minus = gradient(axpy(-probe_h, unit, x));
    Vec out(dim);
    for (std::size_t i = 0; i < dim; ++i) out[i] = (plus[i] - minus[i]) / (2.0 * probe_h);
    return out;
  };

  // shift from a matrix-norm upper bound: max row sum over probed columns
  std::vector<Vec> columns(dim);
  Vec unit(dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    unit[i] = 1.0;
    columns[i] = hvp(unit);
    unit[i] = 0.0;
  }
  double shift = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < dim; ++j) row_sum += std::fabs(columns[j][i]);
    shift = std::max(shift, row_sum);
  }
  shift = std::max(shift, 1e-12);

  // power iteration on shift*I - H; its dominant eigenvalue is
  // shift - lambda_min(H)
  RngStream rng(0x5eedf00dULL);
  Vec z(dim);
  for (auto& c : z) c = rng.gaussian();
  {
    const double n = norm2(z);
    for (auto& c : z) c /= n;
  }
  double rayleigh = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  int stable = 0;
  for (std::int64_t it = 0; it < iters; ++it) {
    const Vec hz = hvp(z);
    Vec w(dim);
    for (std::size_t i = 0; i < dim; ++i) w[i] = shift * z[i] - hz[i];
    const double n = norm2(w);
    if (n == 0.0) return shift;  // H = shift * I exactly
    for (auto& c : w) c /= n;
    const Vec hw = hvp(w);
    rayleigh = 0.0;
    for (std::size_t i = 0; i < dim; ++i) rayleigh += w[i] * (shift * w[i] - hw[i]);
    z = std::move(w);
    if (std::fabs(rayleigh - previous) <= 1e-13 * std::max(1.0, std::fabs(rayleigh))) {
      if (++stable >= 3) return shift - rayleigh;
    } else {
      stable = 0;
    }
    previous = rayleigh;
  }
  throw std::runtime_error("min_hessian_eigenvalue: power iteration did not stabilize");
}

double loglog_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw std::invalid_argument("loglog_slope: need at least 3 points");
  double mean_x = 0.0, mean_y = 0.0;
  std::vector<double> lx, ly;
  for (const auto& [t, y] : points) {
    if (!(t > 0.0) || !(y > 0.0))
      throw std::invalid_argument("loglog_slope: coordinates must be positive");
    lx.push_back(std::log(t));
    ly.push_back(std::log(y));
    mean_x += lx.back();
    mean_y += ly.back();
  }
  mean_x /= static_cast<double>(points.size());
  mean_y /= static_cast<double>(points.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    num += (lx[i] - mean_x) * (ly[i] - mean_y);
    den += (lx[i] - mean_x) * (lx[i] - mean_x);
  }
  if (den == 0.0) throw std::invalid_argument("loglog_slope: degenerate abscissae");
  return num / den;
}

}  // namespace fasopt
