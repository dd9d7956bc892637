#include "fasopt/estimator.hpp"

#include <cmath>
#include <stdexcept>

namespace fasopt {

void Perturbation::validate() const {
  if (!(radius > 0.0) || !std::isfinite(radius))
    throw std::invalid_argument("Perturbation: radius must be positive");
  check_finite(direction, "Perturbation.direction");
  if (std::fabs(norm2(direction) - 1.0) > 1e-12)
    throw std::invalid_argument("Perturbation: direction must have unit norm");
}

Vec sample_unit_sphere(RngStream& rng, int dim) {
  if (dim < 1) throw std::invalid_argument("sample_unit_sphere: dim must be >= 1");
  if (dim == 1) {
    // the sign of a standard normal, exactly +-1
    double g;
    do {
      g = rng.gaussian();
    } while (g == 0.0);
    return {g < 0.0 ? -1.0 : 1.0};
  }
  Vec v(static_cast<std::size_t>(dim));
  while (true) {
    for (auto& coord : v) coord = rng.gaussian();
    const double n = norm2(v);
    if (n > 1e-300) {
      for (auto& coord : v) coord /= n;
      return v;
    }
    // numerically zero draw; try again
  }
}

namespace {

Vec scaled_difference(int dim, double delta, const Vec& v, double lhs, double rhs,
                      const char* what) {
  if (dim < 1) throw std::invalid_argument(std::string(what) + ": dim must be >= 1");
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw std::invalid_argument(std::string(what) + ": delta must be positive");
  if (v.size() != static_cast<std::size_t>(dim))
    throw std::invalid_argument(std::string(what) + ": direction has wrong length");
  check_finite(v, what);
  if (!std::isfinite(lhs) || !std::isfinite(rhs))
    throw std::invalid_argument(std::string(what) + ": non-finite function value");
  const double factor = static_cast<double>(dim) / delta * (lhs - rhs);
  return scale(factor, v);
}

}  // namespace

Vec two_point_estimate(int dim, double delta, const Vec& v, double f_probe, double f_base) {
  return scaled_difference(dim, delta, v, f_probe, f_base, "two_point_estimate");
}

Vec oracle_estimate(int dim, double delta, const Vec& v, double hyper_probe, double hyper_base) {
  return scaled_difference(dim, delta, v, hyper_probe, hyper_base, "oracle_estimate");
}

MonteCarloGradient smoothed_gradient_mc(const std::function<double(const Vec&)>& hyper_objective,
                                        const Vec& x, double delta, std::int64_t n_samples,
                                        RngStream& rng) {
  if (n_samples < 1)
    throw std::invalid_argument("smoothed_gradient_mc: n_samples must be >= 1");
  if (!(delta > 0.0)) throw std::invalid_argument("smoothed_gradient_mc: delta must be positive");
  const int dim = static_cast<int>(x.size());
  const double base_value = hyper_objective(x);

  Vec sum(x.size(), 0.0);
  Vec sum_sq(x.size(), 0.0);
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const Vec v = sample_unit_sphere(rng, dim);
    const Vec probe = axpy(delta, v, x);
    const Vec draw = oracle_estimate(dim, delta, v, hyper_objective(probe), base_value);
    for (std::size_t j = 0; j < sum.size(); ++j) {
      sum[j] += draw[j];
      sum_sq[j] += draw[j] * draw[j];
    }
  }

  MonteCarloGradient out;
  out.samples = n_samples;
  out.mean.resize(x.size());
  out.standard_error.resize(x.size());
  const double n = static_cast<double>(n_samples);
  for (std::size_t j = 0; j < sum.size(); ++j) {
    out.mean[j] = sum[j] / n;
    const double variance = std::max(0.0, sum_sq[j] / n - out.mean[j] * out.mean[j]);
    out.standard_error[j] = std::sqrt(variance / n);
  }
  return out;
}

}  // namespace fasopt
