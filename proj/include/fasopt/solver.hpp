#ifndef FASOPT_SOLVER_HPP
#define FASOPT_SOLVER_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fasopt/core.hpp"
#include "fasopt/lower_level.hpp"
#include "fasopt/vec.hpp"

namespace fasopt {

/// Sentinel: pick the inner-iteration count from the rate certificate.
inline constexpr std::int64_t kAutoInnerIterations = -1;

struct SolverConfig {
  std::int64_t rounds = 0;  // T
  std::int64_t inner_iterations = kAutoInnerIterations;
  Schedule schedule;
  std::uint64_t seed = 0;
  Vec x0;
  Vec y0;
  bool record_inner = false;
};

/// Everything observable in one outer round.
struct RoundRecord {
  std::int64_t t = 0;
  Vec x;                  // leader strategy entering the round
  Vec v;                  // unit probe direction
  double eta = 0.0;
  double delta = 0.0;
  Vec x_probe;            // x + delta * v
  Vec y_probe_final;      // inner endpoint responding to x_probe
  Vec y_base_final;       // inner endpoint responding to x
  double f_probe = 0.0;   // objective(x_probe, y_probe_final)
  double f_base = 0.0;    // objective(x, y_base_final)
  Vec estimate;           // two-point gradient estimate
  std::optional<double> grad_norm_sq;  // ||hypergradient(x)||^2 when available

  std::vector<Vec> inner_probe;  // full inner iterates, kept when record_inner
  std::vector<Vec> inner_base;
};

struct RunTrace {
  SolverConfig config;  // echo, with the resolved inner-iteration count
  std::int64_t resolved_inner_iterations = 0;
  std::vector<RoundRecord> rounds;
  Vec final_x;  // leader strategy after the last update
  std::vector<std::string> warnings;
};

/// Thrown when a leader iterate becomes non-finite; names the round.
class SolverAbort : public std::runtime_error {
 public:
  SolverAbort(std::int64_t round, const std::string& message)
      : std::runtime_error(message), round_(round) {}
  std::int64_t round() const { return round_; }

 private:
  std::int64_t round_;
};

/// The outer loop. Per round: sample a sphere direction, probe the
/// followers at x + delta_t v and at x with the same warm start, take the
/// two-point gradient step, and warm-start the next round from the base
/// endpoint. Decreasing step sizes and probe radii follow cfg.schedule.
RunTrace run_algorithm(const LeaderProblem& problem, const FollowerSystem& followers,
                       const SolverConfig& cfg);

struct Stationarity {
  std::int64_t best_t = 0;
  double value = 0.0;  // min over rounds of ||hypergradient(x_t)||^2
};

Stationarity min_grad_stationarity(const RunTrace& trace, const LeaderProblem& problem);
Stationarity min_grad_stationarity(const RunTrace& trace,
                                   const std::function<Vec(const Vec&)>& hypergradient);

}  // namespace fasopt

#endif
