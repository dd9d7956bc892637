#include "fasopt/lower_level.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fasopt {

void FollowerSystem::validate() const {
  if (dim <= 0) throw std::invalid_argument("FollowerSystem: dim must be positive");
  if (!potential_gradient && !exact_map)
    throw std::invalid_argument("FollowerSystem: potential_gradient is required");
  if (!projection) throw std::invalid_argument("FollowerSystem: projection is required");
  if (!(step_size >= 0.0) || !std::isfinite(step_size))
    throw std::invalid_argument("FollowerSystem: step_size must be finite and >= 0");
  rate.validate();
  if (grad_x_lipschitz && (*grad_x_lipschitz < 0.0 || !std::isfinite(*grad_x_lipschitz)))
    throw std::invalid_argument("FollowerSystem: grad_x_lipschitz must be nonnegative");
  if (grad_y_smoothness && (*grad_y_smoothness < 0.0 || !std::isfinite(*grad_y_smoothness)))
    throw std::invalid_argument("FollowerSystem: grad_y_smoothness must be nonnegative");
}

Vec project_box(const Vec& y, const Vec& lo, const Vec& hi) {
  if (lo.size() != y.size() || hi.size() != y.size())
    throw std::invalid_argument("project_box: dimension mismatch");
  Vec out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (lo[i] > hi[i]) throw std::invalid_argument("project_box: lo > hi");
    out[i] = std::min(hi[i], std::max(lo[i], y[i]));
  }
  return out;
}

Vec project_simplex(const Vec& y, double mass) {
  if (y.empty()) throw std::invalid_argument("project_simplex: empty vector");
  if (!(mass > 0.0) || !std::isfinite(mass))
    throw std::invalid_argument("project_simplex: mass must be positive");
  check_finite(y, "project_simplex");

  // Sort descending (stable, so ties keep index order), then find the
  // largest prefix whose shifted values stay positive.
  Vec u = y;
  std::stable_sort(u.begin(), u.end(), std::greater<double>());
  double cumulative = 0.0;
  double theta = u[0] - mass;  // k = 1 prefix always qualifies
  for (std::size_t k = 0; k < u.size(); ++k) {
    cumulative += u[k];
    const double candidate = (cumulative - mass) / static_cast<double>(k + 1);
    if (u[k] - candidate > 0.0) theta = candidate;
  }
  Vec out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = std::max(0.0, y[i] - theta);
  return out;
}

Vec projected_gradient_step(const FollowerSystem& sys, const Vec& x, const Vec& y) {
  const Vec g = sys.potential_gradient(x, y);
  if (g.size() != y.size())
    throw std::invalid_argument("projected_gradient_step: gradient has wrong length");
  if (!all_finite(g))
    throw std::invalid_argument("projected_gradient_step: non-finite gradient");
  return sys.projection(axpy(-sys.step_size, g, y));
}

InnerRunResult run_inner(const FollowerSystem& sys, const Vec& x, const Vec& y0,
                         std::int64_t steps, bool keep_iterates) {
  if (steps < 0) throw std::invalid_argument("run_inner: steps must be >= 0");
  check_dim(y0, static_cast<std::size_t>(sys.dim), "run_inner: y0");

  InnerRunResult result;
  if (sys.exact_map) {
    result.y_final = sys.exact_map(x);
    result.residual = 0.0;
    if (keep_iterates) result.iterates = {y0, result.y_final};
    return result;
  }

  Vec y = y0;
  Vec prev;
  if (keep_iterates) result.iterates.push_back(y);
  for (std::int64_t k = 0; k < steps; ++k) {
    prev = y;
    y = projected_gradient_step(sys, x, y);
    if (keep_iterates) result.iterates.push_back(y);
  }
  result.residual = (steps > 0) ? dist2(y, prev) : 0.0;
  result.y_final = std::move(y);
  if (sys.feasible && !sys.feasible(result.y_final, 1e-9))
    throw std::runtime_error("run_inner: final iterate infeasible");
  return result;
}

RateCertificate estimate_contraction_rate(const FollowerSystem& sys, const Vec& x,
                                          const Vec& y0, std::int64_t steps) {
  if (steps < 1) throw std::invalid_argument("estimate_contraction_rate: steps must be >= 1");

  const InnerRunResult reference = run_inner(sys, x, y0, 10 * steps);
  if (reference.residual > 1e-8)
    throw std::runtime_error(
        "estimate_contraction_rate: reference run not converged (residual " +
        std::to_string(reference.residual) + ")");
  const Vec& equilibrium = reference.y_final;

  const InnerRunResult probe = run_inner(sys, x, y0, steps, /*keep_iterates=*/true);

  // log-linear fit of the distance to equilibrium over the step index
  std::vector<double> ks, logs;
  for (std::size_t k = 0; k < probe.iterates.size(); ++k) {
    const double e = dist2(probe.iterates[k], equilibrium);
    if (e > 1e-13) {
      ks.push_back(static_cast<double>(k));
      logs.push_back(std::log(e));
    }
  }
  if (ks.size() < 2)
    throw std::runtime_error("estimate_contraction_rate: trajectory already at equilibrium");

  const double n = static_cast<double>(ks.size());
  const double mean_k = std::accumulate(ks.begin(), ks.end(), 0.0) / n;
  const double mean_log = std::accumulate(logs.begin(), logs.end(), 0.0) / n;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    num += (ks[i] - mean_k) * (logs[i] - mean_log);
    den += (ks[i] - mean_k) * (ks[i] - mean_k);
  }
  if (den == 0.0)
    throw std::runtime_error("estimate_contraction_rate: degenerate fit");
  const double fitted = std::exp(num / den);
  if (!(fitted < 1.0) || !(fitted > 0.0))
    throw std::runtime_error("estimate_contraction_rate: no contraction observed (rho_hat " +
                             std::to_string(fitted) + ")");
  return RateCertificate::exponential(1.0, fitted);
}

SensitivityCheck iterate_sensitivity_check(const FollowerSystem& sys, const Vec& x,
                                           const Vec& x_probe, const Vec& y0,
                                           std::int64_t steps) {
  if (!sys.grad_x_lipschitz || !sys.grad_y_smoothness)
    throw std::invalid_argument(
        "iterate_sensitivity_check: grad_x_lipschitz and grad_y_smoothness are required");
  if (steps < 1) throw std::invalid_argument("iterate_sensitivity_check: steps must be >= 1");

  const Vec at_probe = run_inner(sys, x_probe, y0, steps).y_final;
  const Vec at_base = run_inner(sys, x, y0, steps).y_final;

  SensitivityCheck out;
  out.measured = dist2(at_probe, at_base);
  const double perturbation = dist2(x_probe, x);
  out.bound = static_cast<double>(steps) * (*sys.grad_x_lipschitz) * sys.step_size *
              perturbation *
              std::exp(sys.step_size * (*sys.grad_y_smoothness) * static_cast<double>(steps));
  return out;
}

}  // namespace fasopt
