#ifndef FASOPT_PROBLEMS_HPP
#define FASOPT_PROBLEMS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fasopt/core.hpp"
#include "fasopt/lower_level.hpp"
#include "fasopt/vec.hpp"

namespace fasopt {

/// A leader problem paired with the follower system that answers it, plus
/// canonical starting points. This is the unit the experiment driver and
/// the C API hand around.
struct ProblemBundle {
  std::string kind;
  LeaderProblem leader;
  FollowerSystem followers;
  Vec default_x0;
  Vec default_y0;
};

/// Bilevel benchmark with closed-form equilibrium response and
/// hypergradient:
///   f(x, y) = 1/2 ||x - a||^2 + 1/2 ||y - b||^2
///   g(x, y) = 1/2 ||y - Bx - c||^2,  Y = [lo, hi] box
///   S(x)    = clamp(Bx + c, lo, hi)
struct QuadraticBilevel {
  Vec a;       // leader target, length d
  Vec b;       // follower target inside f, length d'
  Mat B;       // d' x d
  Vec c;       // length d'
  Vec box_lo;  // length d'
  Vec box_hi;

  int leader_dim() const { return static_cast<int>(a.size()); }
  int follower_dim() const { return static_cast<int>(b.size()); }
  void validate() const;

  /// Default instance used by the benchmarks: a = 1, b = -1, B = coupling * I,
  /// c = 0, box [-box_radius, box_radius]^d.
  static QuadraticBilevel standard(int dim, double coupling = 1.0, double box_radius = 10.0);

  Vec solution_map(const Vec& x) const;  // clamp(Bx + c)

  /// (x - a) + B^T (Bx + c - b); only valid while Bx + c stays strictly
  /// inside the box (margin 1e-6) -- throws in the clamped regime.
  Vec hypergradient(const Vec& x) const;

  double objective(const Vec& x, const Vec& y) const;

  LeaderProblem leader() const;
  /// exact_inner = true replaces the inner solver by the closed-form
  /// equilibrium response (diagnostic mode).
  FollowerSystem followers(double gamma, bool exact_inner = false) const;
  ProblemBundle bundle(double gamma, bool exact_inner = false) const;
};

/// Reduced objective 1/2 x^T D x with a trivial follower side (S = 0), so
/// every outer-loop effect is attributable to the estimator alone. D is
/// diagonal with at least one negative entry: the origin is a strict saddle.
struct StrictSaddleProblem {
  Vec curvature;  // diagonal of D, length d

  int leader_dim() const { return static_cast<int>(curvature.size()); }
  void validate() const;

  Vec hypergradient(const Vec& x) const;  // D x
  double objective(const Vec& x, const Vec& y) const;

  LeaderProblem leader() const;
  FollowerSystem followers(double gamma) const;
  ProblemBundle bundle(double gamma) const;
};

/// Nonatomic routing game with affine edge latencies and edge tolls.
/// Leader: one toll per edge. Followers: path flows, one scaled simplex
/// per origin-destination pair. The followers descend the tolled
/// congestion potential; the leader pays total travel time plus a
/// quadratic toll penalty.
struct RoutingEdge {
  int id = 0;
  double slope = 0.0;      // latency a * w + b, slope >= 0
  double intercept = 0.0;  // >= 0
};

struct OdPair {
  double demand = 0.0;
  std::vector<std::vector<int>> paths;  // edge ids per path
};

struct RoutingInstance {
  std::vector<RoutingEdge> edges;
  std::vector<OdPair> od_pairs;
  double toll_penalty = 0.0;  // weight on ||tolls||^2 in the leader objective

  /// Validates ids, path references and demands; resolves path -> edge
  /// index lists. Throws with the offending od_pair index on bad input.
  static RoutingInstance make(std::vector<RoutingEdge> edges, std::vector<OdPair> od_pairs,
                              double toll_penalty);

  /// The two-link classic: ell_1(w) = w, ell_2(w) = 1, one unit of demand.
  static RoutingInstance two_link(double toll_penalty = 0.0);
  /// Three paths (one of them two edges long), one unit of demand.
  static RoutingInstance three_path(double toll_penalty = 0.0);

  int edge_count() const { return static_cast<int>(edges.size()); }
  int path_count() const { return total_paths_; }

  /// Aggregates path flows into edge loads through the incidence map.
  Vec edge_flows(const Vec& q) const;

  /// sum_e [ slope_e w_e^2 / 2 + intercept_e w_e + toll_e w_e ]
  double beckmann_potential(const Vec& q, const Vec& tolls) const;

  /// Gradient of the potential in the path flows: per path, the tolled
  /// latency summed over its edges.
  Vec beckmann_gradient(const Vec& q, const Vec& tolls) const;

  /// sum_e w_e * latency_e(w_e) + toll_penalty * ||tolls||^2
  double leader_objective(const Vec& tolls, const Vec& q) const;

  /// Blockwise simplex projection onto the feasible flow set.
  Vec project_flows(const Vec& q) const;
  bool flows_feasible(const Vec& q, double tol) const;

  /// Equal split of each demand over its paths.
  Vec uniform_flows() const;

  /// Grid minimizer of the potential over the feasible set; test oracle
  /// only. `grid` is the number of cells per free dimension. Rejects
  /// instances with more than four paths in total.
  Vec wardrop_bruteforce(const Vec& tolls, std::int64_t grid) const;

  LeaderProblem leader() const;
  /// The rate certificate is measured on the instance by a seeded probe
  /// run at zero tolls.
  FollowerSystem followers(double gamma) const;
  ProblemBundle bundle(double gamma) const;

 private:
  int total_paths_ = 0;
  std::vector<std::vector<std::size_t>> path_edge_ix_;  // per path, resolved edge indices
  std::vector<std::size_t> path_offset_;                // first path index of each od pair
  friend struct RoutingGradient;
};

}  // namespace fasopt

#endif
