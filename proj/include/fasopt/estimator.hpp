#ifndef FASOPT_ESTIMATOR_HPP
#define FASOPT_ESTIMATOR_HPP

#include <cstdint>
#include <functional>

#include "fasopt/rng.hpp"
#include "fasopt/vec.hpp"

namespace fasopt {

/// A probe direction on the unit sphere together with its radius.
struct Perturbation {
  Vec direction;
  double radius = 0.0;

  /// Throws unless ||direction|| = 1 within 1e-12 and radius > 0.
  void validate() const;
};

/// Uniform draw from the unit sphere in `dim` dimensions (normalized
/// standard Gaussian vector; a numerically zero draw is resampled).
Vec sample_unit_sphere(RngStream& rng, int dim);

/// Two-point gradient estimate from follower-side function readings:
///   (dim / delta) * (f_probe - f_base) * v
/// where f_probe and f_base are the leader objective evaluated at the
/// perturbed and base strategies against the followers' inner endpoints.
Vec two_point_estimate(int dim, double delta, const Vec& v, double f_probe, double f_base);

/// Same form, fed with exact reduced-objective values f(x, S(x)).
Vec oracle_estimate(int dim, double delta, const Vec& v, double hyper_probe, double hyper_base);

struct MonteCarloGradient {
  Vec mean;
  Vec standard_error;  // per-component CLT standard error of the mean
  std::int64_t samples = 0;
};

/// Monte Carlo mean of the oracle estimate over fresh sphere directions.
/// Its expectation is the gradient of the delta-smoothed reduced objective.
MonteCarloGradient smoothed_gradient_mc(const std::function<double(const Vec&)>& hyper_objective,
                                        const Vec& x, double delta, std::int64_t n_samples,
                                        RngStream& rng);

}  // namespace fasopt

#endif
