#include "fasopt/core.hpp"

#include <cmath>

namespace fasopt {

namespace {

void check_nonneg(const std::optional<double>& value, const char* name) {
  if (value && (!std::isfinite(*value) || *value < 0.0))
    throw std::invalid_argument(std::string("ProblemConstants.") + name +
                                ": must be finite and nonnegative");
}

}  // namespace

void ProblemConstants::validate() const {
  check_nonneg(f_x_lipschitz, "f_x_lipschitz");
  check_nonneg(f_y_lipschitz, "f_y_lipschitz");
  check_nonneg(f_y_smoothness, "f_y_smoothness");
  check_nonneg(solution_map_lipschitz, "solution_map_lipschitz");
  check_nonneg(hyper_lipschitz, "hyper_lipschitz");
  check_nonneg(hyper_smoothness, "hyper_smoothness");
}

double LeaderProblem::hyper_objective(const Vec& x) const {
  if (!solution_map)
    throw std::logic_error("LeaderProblem::hyper_objective: no solution map available");
  return objective(x, solution_map(x));
}

void LeaderProblem::validate() const {
  if (leader_dim <= 0) throw std::invalid_argument("LeaderProblem: leader_dim must be positive");
  if (follower_dim <= 0)
    throw std::invalid_argument("LeaderProblem: follower_dim must be positive");
  if (!objective) throw std::invalid_argument("LeaderProblem: objective is required");
  constants.validate();
}

void Schedule::validate() const {
  if (!(eta_bar > 0.0) || !std::isfinite(eta_bar))
    throw std::invalid_argument("Schedule: eta_bar must be positive");
  if (!(delta_bar > 0.0) || !std::isfinite(delta_bar))
    throw std::invalid_argument("Schedule: delta_bar must be positive");
  if (dim <= 0) throw std::invalid_argument("Schedule: dim must be positive");
}

double step_size(const Schedule& s, std::int64_t t) {
  return s.eta_bar * std::pow(static_cast<double>(t + 1), -0.5) / static_cast<double>(s.dim);
}

double probe_radius(const Schedule& s, std::int64_t t) {
  return s.delta_bar * std::pow(static_cast<double>(t + 1), -0.25) /
         std::sqrt(static_cast<double>(s.dim));
}

RateCertificate RateCertificate::polynomial(double prefactor, double exponent) {
  RateCertificate r;
  r.kind = RateKind::polynomial;
  r.prefactor = prefactor;
  r.exponent = exponent;
  r.ratio = 0.0;
  r.validate();
  return r;
}

RateCertificate RateCertificate::exponential(double prefactor, double ratio) {
  RateCertificate r;
  r.kind = RateKind::exponential;
  r.prefactor = prefactor;
  r.exponent = 0.0;
  r.ratio = ratio;
  r.validate();
  return r;
}

void RateCertificate::validate() const {
  if (!(prefactor > 0.0) || !std::isfinite(prefactor))
    throw std::invalid_argument("RateCertificate: prefactor must be positive");
  if (kind == RateKind::polynomial) {
    if (!(exponent > 0.0) || !std::isfinite(exponent))
      throw std::invalid_argument("RateCertificate: polynomial exponent must be positive");
  } else {
    if (!(ratio > 0.0 && ratio < 1.0))
      throw std::invalid_argument("RateCertificate: exponential ratio must lie in (0, 1)");
  }
}

double alpha_of_k(const RateCertificate& r, std::int64_t k) {
  if (k < 1) throw std::invalid_argument("alpha_of_k: k must be >= 1");
  if (r.kind == RateKind::polynomial)
    return r.prefactor * std::pow(static_cast<double>(k), -r.exponent);
  return std::pow(r.ratio, static_cast<double>(k));
}

std::int64_t choose_inner_iterations(const RateCertificate& r, std::int64_t horizon, int dim) {
  if (horizon < 1) throw std::invalid_argument("choose_inner_iterations: horizon must be >= 1");
  if (dim < 1) throw std::invalid_argument("choose_inner_iterations: dim must be >= 1");
  r.validate();

  double threshold;
  if (r.kind == RateKind::polynomial) {
    const double lambda = r.exponent;
    threshold = std::pow(static_cast<double>(horizon), 1.0 / (2.0 * lambda)) *
                std::pow(static_cast<double>(dim), 2.0 / lambda);
  } else {
    threshold = (0.5 * std::log(static_cast<double>(horizon)) +
                 2.0 * std::log(static_cast<double>(dim))) /
                std::fabs(std::log(r.ratio));
  }
  const double k = std::ceil(threshold);
  if (k < 1.0) return 1;
  return static_cast<std::int64_t>(k);
}

}  // namespace fasopt
