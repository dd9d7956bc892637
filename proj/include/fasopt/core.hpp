#ifndef FASOPT_CORE_HPP
#define FASOPT_CORE_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "fasopt/vec.hpp"

namespace fasopt {

/// Lipschitz/smoothness constants of the problem data, when known.
/// Every present value must be finite and nonnegative. Absent values
/// degrade the related step-size checks to recorded warnings.
struct ProblemConstants {
  std::optional<double> f_x_lipschitz;          // of f(., y) in x
  std::optional<double> f_y_lipschitz;          // of f(x, .) in y
  std::optional<double> f_y_smoothness;         // of grad_y f(x, .)
  std::optional<double> solution_map_lipschitz; // of the equilibrium response x -> S(x)
  std::optional<double> hyper_lipschitz;        // of the reduced objective f(x, S(x))
  std::optional<double> hyper_smoothness;       // of its gradient

  void validate() const;
};

/// Leader-side contract: the objective f(x, y), dimension metadata, and
/// optional closed forms used by oracles and diagnostics.
///
/// `objective` must be deterministic (same inputs, same output bitwise).
struct LeaderProblem {
  int leader_dim = 0;    // dimension of the leader strategy x
  int follower_dim = 0;  // dimension of the joint follower profile y

  std::function<double(const Vec& x, const Vec& y)> objective;
  ProblemConstants constants;

  /// Equilibrium response S(x), when available in closed form.
  std::function<Vec(const Vec& x)> solution_map;
  /// Gradient of x -> f(x, S(x)), when available in closed form.
  std::function<Vec(const Vec& x)> hypergradient;

  bool has_solution_map() const { return static_cast<bool>(solution_map); }
  bool has_hypergradient() const { return static_cast<bool>(hypergradient); }

  /// f(x, S(x)); requires solution_map.
  double hyper_objective(const Vec& x) const;

  void validate() const;
};

/// Decaying step-size and probe-radius schedules:
///   step_size(t)    = eta_bar   * (t+1)^{-1/2} / d
///   probe_radius(t) = delta_bar * (t+1)^{-1/4} / sqrt(d)
struct Schedule {
  double eta_bar = 0.0;
  double delta_bar = 0.0;
  int dim = 0;  // leader dimension d

  void validate() const;
};

double step_size(const Schedule& s, std::int64_t t);
double probe_radius(const Schedule& s, std::int64_t t);

enum class RateKind { polynomial, exponential };

/// Convergence-rate certificate of the follower update rule: after K inner
/// steps the (squared) distance to equilibrium shrinks by
///   polynomial  : C * K^{-lambda}
///   exponential : rho^K   (with rho in (0,1); the prefactor is absorbed)
struct RateCertificate {
  RateKind kind = RateKind::exponential;
  double prefactor = 1.0;  // C > 0, used by the polynomial kind
  double exponent = 0.0;   // lambda > 0, polynomial kind only
  double ratio = 0.0;      // rho in (0,1), exponential kind only

  static RateCertificate polynomial(double prefactor, double exponent);
  static RateCertificate exponential(double prefactor, double ratio);

  void validate() const;
};

/// Residual contraction after k inner steps under the certificate.
double alpha_of_k(const RateCertificate& r, std::int64_t k);

/// Smallest inner-iteration count K that keeps the accumulated follower
/// error below the outer-loop noise floor over `horizon` rounds:
///   polynomial  : K >= horizon^{1/(2 lambda)} * d^{2/lambda}
///   exponential : K >= (1/|ln rho|) * ((1/2) ln horizon + 2 ln d)
/// Natural logarithms throughout. Always returns at least 1.
std::int64_t choose_inner_iterations(const RateCertificate& r, std::int64_t horizon, int dim);

}  // namespace fasopt

#endif
