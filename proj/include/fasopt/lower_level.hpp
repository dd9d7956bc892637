#ifndef FASOPT_LOWER_LEVEL_HPP
#define FASOPT_LOWER_LEVEL_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "fasopt/core.hpp"
#include "fasopt/vec.hpp"

namespace fasopt {

/// Follower-side contract: projected gradient descent on a potential.
/// The update applied by run_inner is
///   y <- projection(y - step_size * potential_gradient(x, y))
/// with a fixed step size per run.
struct FollowerSystem {
  int dim = 0;  // joint follower dimension

  std::function<Vec(const Vec& x, const Vec& y)> potential_gradient;
  std::function<Vec(const Vec& y)> projection;  // Euclidean projection onto Y, idempotent
  std::function<bool(const Vec& y, double tol)> feasible;

  /// The potential itself, when evaluable (used by descent checks).
  std::function<double(const Vec& x, const Vec& y)> potential;

  /// Diagnostic mode: when set, run_inner returns exact_map(x) instead of
  /// iterating, so follower-side error is removed from a run entirely.
  std::function<Vec(const Vec& x)> exact_map;

  double step_size = 0.0;  // gamma > 0 (0 allowed: the update degenerates to projection)
  RateCertificate rate;

  std::optional<double> grad_x_lipschitz;   // of potential_gradient in x
  std::optional<double> grad_y_smoothness;  // of potential_gradient in y

  void validate() const;
};

struct InnerRunResult {
  Vec y_final;
  std::vector<Vec> iterates;  // y^(0) .. y^(K), kept only on request
  double residual = 0.0;      // ||y^(K) - y^(K-1)||; 0 when no step was taken
};

/// Componentwise clamp onto the box [lo, hi].
Vec project_box(const Vec& y, const Vec& lo, const Vec& hi);

/// Euclidean projection onto {q >= 0, sum q = mass} by the sort-based
/// threshold algorithm (O(n log n); sort ties resolved by index order).
Vec project_simplex(const Vec& y, double mass);

Vec projected_gradient_step(const FollowerSystem& sys, const Vec& x, const Vec& y);

/// Applies `steps` projected-gradient updates from y0 at fixed leader
/// strategy x. steps = 0 returns y0 unchanged.
InnerRunResult run_inner(const FollowerSystem& sys, const Vec& x, const Vec& y0,
                         std::int64_t steps, bool keep_iterates = false);

/// Fits an exponential rate rho from the per-step distances to a long
/// reference solution (10x `steps`, which must reach residual <= 1e-8).
/// Returns an exponential certificate with unit prefactor. Throws when the
/// reference run has not converged or when no contraction is observed.
RateCertificate estimate_contraction_rate(const FollowerSystem& sys, const Vec& x,
                                          const Vec& y0, std::int64_t steps);

struct SensitivityCheck {
  double measured = 0.0;  // ||y^(K)(x_probe) - y^(K)(x)||, same start y0
  double bound = 0.0;     // K * L_gx * gamma * ||x_probe - x|| * exp(gamma * ell_gy * K)
};

/// Compares the divergence of two K-step inner runs from a common start
/// against the Gronwall-type a-priori bound. Requires grad_x_lipschitz and
/// grad_y_smoothness on the system.
SensitivityCheck iterate_sensitivity_check(const FollowerSystem& sys, const Vec& x,
                                           const Vec& x_probe, const Vec& y0,
                                           std::int64_t steps);

}  // namespace fasopt

#endif
