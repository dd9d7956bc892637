#include "fasopt/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace fasopt {

namespace {

// Contraction ratio of projected gradient descent on a unit-curvature
// quadratic potential. gamma in (0, 2) is required; the ratio is clamped
// away from 0 so the certificate stays valid when gamma = 1 solves the
// inner problem in one step.
RateCertificate unit_curvature_rate(double gamma) {
  const double raw = std::fabs(1.0 - gamma);
  if (raw >= 1.0)
    throw std::invalid_argument("follower step size must lie in (0, 2) for a contractive update");
  return RateCertificate::exponential(1.0, std::clamp(raw, 1e-12, 1.0 - 1e-12));
}

bool box_feasible(const Vec& y, const Vec& lo, const Vec& hi, double tol) {
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] < lo[i] - tol || y[i] > hi[i] + tol) return false;
  return true;
}

}  // namespace

// ---- QuadraticBilevel ------------------------------------------------------

void QuadraticBilevel::validate() const {
  if (a.empty() || b.empty()) throw std::invalid_argument("QuadraticBilevel: empty targets");
  if (B.rows != b.size() || B.cols != a.size())
    throw std::invalid_argument("QuadraticBilevel: B must be follower_dim x leader_dim");
  check_dim(c, b.size(), "QuadraticBilevel: c");
  check_dim(box_lo, b.size(), "QuadraticBilevel: box_lo");
  check_dim(box_hi, b.size(), "QuadraticBilevel: box_hi");
  for (std::size_t i = 0; i < b.size(); ++i)
    if (box_lo[i] > box_hi[i]) throw std::invalid_argument("QuadraticBilevel: box_lo > box_hi");
  check_finite(a, "QuadraticBilevel: a");
  check_finite(b, "QuadraticBilevel: b");
  check_finite(c, "QuadraticBilevel: c");
  check_finite(B.data, "QuadraticBilevel: B");
}

QuadraticBilevel QuadraticBilevel::standard(int dim, double coupling, double box_radius) {
  if (dim < 1) throw std::invalid_argument("QuadraticBilevel::standard: dim must be >= 1");
  QuadraticBilevel qb;
  const std::size_t n = static_cast<std::size_t>(dim);
  qb.a.assign(n, 1.0);
  qb.b.assign(n, -1.0);
  qb.B = Mat::identity(n);
  for (std::size_t i = 0; i < n; ++i) qb.B.at(i, i) = coupling;
  qb.c.assign(n, 0.0);
  qb.box_lo.assign(n, -box_radius);
  qb.box_hi.assign(n, box_radius);
  qb.validate();
  return qb;
}

Vec QuadraticBilevel::solution_map(const Vec& x) const {
  return project_box(axpy(1.0, B.apply(x), c), box_lo, box_hi);
}

Vec QuadraticBilevel::hypergradient(const Vec& x) const {
  const Vec inner = axpy(1.0, B.apply(x), c);  // Bx + c
  for (std::size_t i = 0; i < inner.size(); ++i)
    if (inner[i] < box_lo[i] + 1e-6 || inner[i] > box_hi[i] - 1e-6)
      throw std::runtime_error(
          "QuadraticBilevel::hypergradient: equilibrium response clamped at coordinate " +
          std::to_string(i) + "; no closed form in the boundary regime");
  return add(sub(x, a), B.apply_transpose(sub(inner, b)));
}

double QuadraticBilevel::objective(const Vec& x, const Vec& y) const {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - a[i];
    s += 0.5 * d * d;
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - b[i];
    s += 0.5 * d * d;
  }
  return s;
}

LeaderProblem QuadraticBilevel::leader() const {
  validate();
  QuadraticBilevel qb = *this;
  LeaderProblem p;
  p.leader_dim = leader_dim();
  p.follower_dim = follower_dim();
  p.objective = [qb](const Vec& x, const Vec& y) { return qb.objective(x, y); };
  p.solution_map = [qb](const Vec& x) { return qb.solution_map(x); };
  p.hypergradient = [qb](const Vec& x) { return qb.hypergradient(x); };

  const double coupling_norm = spectral_norm(B);
  p.constants.f_y_smoothness = 1.0;
  p.constants.solution_map_lipschitz = coupling_norm;
  p.constants.hyper_smoothness = 1.0 + coupling_norm * coupling_norm;
  // sup over the box of ||y - b||, attained at a corner
  double corner_sq = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double r = std::max(std::fabs(box_lo[i] - b[i]), std::fabs(box_hi[i] - b[i]));
    corner_sq += r * r;
  }
  p.constants.f_y_lipschitz = std::sqrt(corner_sq);
  return p;
}

FollowerSystem QuadraticBilevel::followers(double gamma, bool exact_inner) const {
  validate();
  QuadraticBilevel qb = *this;
  FollowerSystem sys;
  sys.dim = follower_dim();
  sys.step_size = gamma;
  sys.rate = unit_curvature_rate(gamma);
  sys.potential_gradient = [qb](const Vec& x, const Vec& y) {
    return sub(y, axpy(1.0, qb.B.apply(x), qb.c));
  };
  sys.projection = [qb](const Vec& y) { return project_box(y, qb.box_lo, qb.box_hi); };
  sys.feasible = [qb](const Vec& y, double tol) {
    return box_feasible(y, qb.box_lo, qb.box_hi, tol);
  };
  sys.potential = [qb](const Vec& x, const Vec& y) {
    const Vec target = axpy(1.0, qb.B.apply(x), qb.c);
    return 0.5 * norm2_sq(sub(y, target));
  };
  sys.grad_x_lipschitz = spectral_norm(B);
  sys.grad_y_smoothness = 1.0;
  if (exact_inner) sys.exact_map = [qb](const Vec& x) { return qb.solution_map(x); };
  return sys;
}

ProblemBundle QuadraticBilevel::bundle(double gamma, bool exact_inner) const {
  ProblemBundle out;
  out.kind = "quadratic";
  out.leader = leader();
  out.followers = followers(gamma, exact_inner);
  out.default_x0 = a;
  out.default_y0 = project_box(Vec(b.size(), 0.0), box_lo, box_hi);
  return out;
}

// ---- StrictSaddleProblem ---------------------------------------------------

void StrictSaddleProblem::validate() const {
  if (curvature.empty()) throw std::invalid_argument("StrictSaddleProblem: empty curvature");
  check_finite(curvature, "StrictSaddleProblem: curvature");
  if (*std::min_element(curvature.begin(), curvature.end()) >= 0.0)
    throw std::invalid_argument(
        "StrictSaddleProblem: at least one curvature entry must be negative");
}

Vec StrictSaddleProblem::hypergradient(const Vec& x) const {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = curvature[i] * x[i];
  return g;
}

double StrictSaddleProblem::objective(const Vec& x, const Vec& y) const {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += 0.5 * curvature[i] * x[i] * x[i];
  for (double yi : y) s += 0.5 * yi * yi;
  return s;
}

LeaderProblem StrictSaddleProblem::leader() const {
  validate();
  StrictSaddleProblem sp = *this;
  LeaderProblem p;
  p.leader_dim = leader_dim();
  p.follower_dim = 1;
  p.objective = [sp](const Vec& x, const Vec& y) { return sp.objective(x, y); };
  p.solution_map = [](const Vec&) { return Vec{0.0}; };
  p.hypergradient = [sp](const Vec& x) { return sp.hypergradient(x); };
  double max_abs = 0.0;
  for (double d : curvature) max_abs = std::max(max_abs, std::fabs(d));
  p.constants.hyper_smoothness = max_abs;
  p.constants.f_y_smoothness = 1.0;
  p.constants.f_y_lipschitz = 1.0;  // sup of ||y|| over Y = [-1, 1]
  p.constants.solution_map_lipschitz = 0.0;
  return p;
}

FollowerSystem StrictSaddleProblem::followers(double gamma) const {
  FollowerSystem sys;
  sys.dim = 1;
  sys.step_size = gamma;
  sys.rate = unit_curvature_rate(gamma);
  sys.potential_gradient = [](const Vec&, const Vec& y) { return y; };
  sys.projection = [](const Vec& y) { return project_box(y, {-1.0}, {1.0}); };
  sys.feasible = [](const Vec& y, double tol) {
    return box_feasible(y, {-1.0}, {1.0}, tol);
  };
  sys.potential = [](const Vec&, const Vec& y) { return 0.5 * norm2_sq(y); };
  sys.grad_x_lipschitz = 0.0;
  sys.grad_y_smoothness = 1.0;
  return sys;
}

ProblemBundle StrictSaddleProblem::bundle(double gamma) const {
  ProblemBundle out;
  out.kind = "strict_saddle";
  out.leader = leader();
  out.followers = followers(gamma);
  out.default_x0.assign(curvature.size(), 0.0);  // start at the saddle
  out.default_y0 = {0.0};
  return out;
}

// ---- RoutingInstance -------------------------------------------------------

RoutingInstance RoutingInstance::make(std::vector<RoutingEdge> edges,
                                      std::vector<OdPair> od_pairs, double toll_penalty) {
  if (edges.empty()) throw std::invalid_argument("routing: edges must be nonempty");
  if (od_pairs.empty()) throw std::invalid_argument("routing: od_pairs must be nonempty");
  if (!(toll_penalty >= 0.0) || !std::isfinite(toll_penalty))
    throw std::invalid_argument("routing: lambda must be nonnegative");

  RoutingInstance inst;
  inst.edges = std::move(edges);
  inst.od_pairs = std::move(od_pairs);
  inst.toll_penalty = toll_penalty;

  std::set<int> seen;
  for (const RoutingEdge& e : inst.edges) {
    if (!seen.insert(e.id).second)
      throw std::invalid_argument("routing: duplicate edge id " + std::to_string(e.id));
    if (!(e.slope >= 0.0) || !std::isfinite(e.slope))
      throw std::invalid_argument("routing: edge " + std::to_string(e.id) +
                                  ": latency slope must be nonnegative");
    if (!(e.intercept >= 0.0) || !std::isfinite(e.intercept))
      throw std::invalid_argument("routing: edge " + std::to_string(e.id) +
                                  ": latency intercept must be nonnegative");
  }

  inst.total_paths_ = 0;
  for (std::size_t z = 0; z < inst.od_pairs.size(); ++z) {
    const OdPair& pair = inst.od_pairs[z];
    if (!(pair.demand > 0.0) || !std::isfinite(pair.demand))
      throw std::invalid_argument("routing: od_pairs[" + std::to_string(z) +
                                  "].demand must be positive");
    if (pair.paths.empty())
      throw std::invalid_argument("routing: od_pairs[" + std::to_string(z) +
                                  "].paths must be nonempty");
    inst.path_offset_.push_back(static_cast<std::size_t>(inst.total_paths_));
    for (std::size_t pi = 0; pi < pair.paths.size(); ++pi) {
      if (pair.paths[pi].empty())
        throw std::invalid_argument("routing: od_pairs[" + std::to_string(z) + "].paths[" +
                                    std::to_string(pi) + "] is empty");
      std::vector<std::size_t> resolved;
      for (int edge_id : pair.paths[pi]) {
        const auto it = std::find_if(inst.edges.begin(), inst.edges.end(),
                                     [edge_id](const RoutingEdge& e) { return e.id == edge_id; });
        if (it == inst.edges.end())
          throw std::invalid_argument("routing: od_pairs[" + std::to_string(z) + "].paths[" +
                                      std::to_string(pi) + "]: unknown edge id " +
                                      std::to_string(edge_id));
        resolved.push_back(static_cast<std::size_t>(it - inst.edges.begin()));
      }
      inst.path_edge_ix_.push_back(std::move(resolved));
      ++inst.total_paths_;
    }
  }
  return inst;
}

RoutingInstance RoutingInstance::two_link(double toll_penalty) {
  return make({{1, 1.0, 0.0}, {2, 0.0, 1.0}}, {{1.0, {{1}, {2}}}}, toll_penalty);
}

RoutingInstance RoutingInstance::three_path(double toll_penalty) {
  // paths: a direct link, a two-edge route with the same total latency
  // profile, and a flat overflow link
  return make({{1, 1.0, 0.0}, {2, 1.0, 0.125}, {3, 1.0, 0.125}, {4, 0.0, 1.0}},
              {{1.0, {{1}, {2, 3}, {4}}}}, toll_penalty);
}

Vec RoutingInstance::edge_flows(const Vec& q) const {
  check_dim(q, static_cast<std::size_t>(total_paths_), "edge_flows: q");
  Vec w(edges.size(), 0.0);
  for (std::size_t p = 0; p < path_edge_ix_.size(); ++p)
    for (std::size_t e : path_edge_ix_[p]) w[e] += q[p];
  return w;
}

double RoutingInstance::beckmann_potential(const Vec& q, const Vec& tolls) const {
  check_dim(tolls, edges.size(), "beckmann_potential: tolls");
  const Vec w = edge_flows(q);
  double phi = 0.0;
  for (std::size_t e = 0; e < edges.size(); ++e)
    phi += 0.5 * edges[e].slope * w[e] * w[e] + edges[e].intercept * w[e] + tolls[e] * w[e];
  return phi;
}

Vec RoutingInstance::beckmann_gradient(const Vec& q, const Vec& tolls) const {
  check_dim(tolls, edges.size(), "beckmann_gradient: tolls");
  const Vec w = edge_flows(q);
  Vec cost(static_cast<std::size_t>(total_paths_), 0.0);
  for (std::size_t p = 0; p < path_edge_ix_.size(); ++p)
    for (std::size_t e : path_edge_ix_[p])
      cost[p] += edges[e].slope * w[e] + edges[e].intercept + tolls[e];
  return cost;
}

double RoutingInstance::leader_objective(const Vec& tolls, const Vec& q) const {
  check_dim(tolls, edges.size(), "leader_objective: tolls");
  const Vec w = edge_flows(q);
  double total = 0.0;
  for (std::size_t e = 0; e < edges.size(); ++e)
    total += w[e] * (edges[e].slope * w[e] + edges[e].intercept);
  return total + toll_penalty * norm2_sq(tolls);
}

Vec RoutingInstance::project_flows(const Vec& q) const {
  check_dim(q, static_cast<std::size_t>(total_paths_), "project_flows: q");
  Vec out(q.size());
  for (std::size_t z = 0; z < od_pairs.size(); ++z) {
    const std::size_t begin = path_offset_[z];
    const std::size_t count = od_pairs[z].paths.size();
    const Vec block(q.begin() + begin, q.begin() + begin + count);
    const Vec projected = project_simplex(block, od_pairs[z].demand);
    std::copy(projected.begin(), projected.end(), out.begin() + begin);
  }
  return out;
}

bool RoutingInstance::flows_feasible(const Vec& q, double tol) const {
  if (q.size() != static_cast<std::size_t>(total_paths_)) return false;
  for (std::size_t z = 0; z < od_pairs.size(); ++z) {
    const std::size_t begin = path_offset_[z];
    const std::size_t count = od_pairs[z].paths.size();
    double sum = 0.0;
    for (std::size_t i = begin; i < begin + count; ++i) {
      if (q[i] < -tol) return false;
      sum += q[i];
    }
    if (std::fabs(sum - od_pairs[z].demand) > tol * std::max(1.0, od_pairs[z].demand))
      return false;
  }
  return true;
}

Vec RoutingInstance::uniform_flows() const {
  Vec q(static_cast<std::size_t>(total_paths_), 0.0);
  for (std::size_t z = 0; z < od_pairs.size(); ++z) {
    const double share = od_pairs[z].demand / static_cast<double>(od_pairs[z].paths.size());
    for (std::size_t i = 0; i < od_pairs[z].paths.size(); ++i) q[path_offset_[z] + i] = share;
  }
  return q;
}

Vec RoutingInstance::wardrop_bruteforce(const Vec& tolls, std::int64_t grid) const {
  if (total_paths_ > 4)
    throw std::invalid_argument("wardrop_bruteforce: too many paths (max 4)");
  if (grid < 2) throw std::invalid_argument("wardrop_bruteforce: grid must be >= 2");
  check_dim(tolls, edges.size(), "wardrop_bruteforce: tolls");

  Vec q(static_cast<std::size_t>(total_paths_), 0.0);
  Vec best = q;
  double best_value = std::numeric_limits<double>::infinity();

  // enumerate the grid over each od pair's simplex, last coordinate implied
  auto recurse = [&](auto&& self, std::size_t z) -> void {
    if (z == od_pairs.size()) {
      const double value = beckmann_potential(q, tolls);
      if (value < best_value) {
        best_value = value;
        best = q;
      }
      return;
    }
    const std::size_t begin = path_offset_[z];
    const std::size_t count = od_pairs[z].paths.size();
    const double demand = od_pairs[z].demand;
    auto fill = [&](auto&& fill_self, std::size_t i, double remaining) -> void {
      if (i + 1 == count) {
        q[begin + i] = remaining;
        self(self, z + 1);
        return;
      }
      for (std::int64_t step = 0; step <= grid; ++step) {
        const double value = demand * static_cast<double>(step) / static_cast<double>(grid);
        if (value > remaining + 1e-12) break;
        q[begin + i] = value;
        fill_self(fill_self, i + 1, remaining - value);
      }
    };
    fill(fill, 0, demand);
  };
  recurse(recurse, 0);
  return best;
}

LeaderProblem RoutingInstance::leader() const {
  RoutingInstance inst = *this;
  LeaderProblem p;
  p.leader_dim = edge_count();
  p.follower_dim = path_count();
  p.objective = [inst](const Vec& tolls, const Vec& q) {
    return inst.leader_objective(tolls, q);
  };
  // No closed-form equilibrium response: the hyper-objective is only
  // reachable through the inner solver or the brute-force oracle.
  return p;
}

FollowerSystem RoutingInstance::followers(double gamma) const {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw std::invalid_argument("routing followers: gamma must be positive");
  RoutingInstance inst = *this;
  FollowerSystem sys;
  sys.dim = path_count();
  sys.step_size = gamma;
  sys.rate = RateCertificate::exponential(1.0, 0.5);  // replaced by the probe below
  sys.potential_gradient = [inst](const Vec& tolls, const Vec& q) {
    return inst.beckmann_gradient(q, tolls);
  };
  sys.projection = [inst](const Vec& q) { return inst.project_flows(q); };
  sys.feasible = [inst](const Vec& q, double tol) { return inst.flows_feasible(q, tol); };
  sys.potential = [inst](const Vec& tolls, const Vec& q) {
    return inst.beckmann_potential(q, tolls);
  };

  // Lipschitz data of the potential gradient from the incidence structure.
  Mat incidence(static_cast<std::size_t>(total_paths_), edges.size());
  for (std::size_t p = 0; p < path_edge_ix_.size(); ++p)
    for (std::size_t e : path_edge_ix_[p]) incidence.at(p, e) += 1.0;
  sys.grad_x_lipschitz = spectral_norm(incidence);
  Mat hessian(static_cast<std::size_t>(total_paths_), static_cast<std::size_t>(total_paths_));
  for (std::size_t p = 0; p < path_edge_ix_.size(); ++p)
    for (std::size_t r = 0; r < path_edge_ix_.size(); ++r) {
      double h = 0.0;
      for (std::size_t e : path_edge_ix_[p])
        for (std::size_t e2 : path_edge_ix_[r])
          if (e == e2) h += edges[e].slope;
      hessian.at(p, r) = h;
    }
  sys.grad_y_smoothness = spectral_norm(hessian);

  // Measure the contraction ratio on the instance itself with a seeded
  // probe run at zero tolls. Symmetric instances can start at equilibrium,
  // in which case a vertex start is tried instead.
  const Vec zero_tolls(edges.size(), 0.0);
  auto try_estimate = [&](const Vec& start) -> bool {
    try {
      sys.rate = estimate_contraction_rate(sys, zero_tolls, start, 60);
      return true;
    } catch (const std::runtime_error&) {
      return false;
    }
  };
  Vec vertex(static_cast<std::size_t>(total_paths_), 0.0);
  for (std::size_t z = 0; z < od_pairs.size(); ++z)
    vertex[path_offset_[z]] = od_pairs[z].demand;
  if (!try_estimate(uniform_flows()) && !try_estimate(vertex))
    sys.rate = RateCertificate::exponential(1.0, 0.5);
  return sys;
}

ProblemBundle RoutingInstance::bundle(double gamma) const {
  ProblemBundle out;
  out.kind = "routing";
  out.leader = leader();
  out.followers = followers(gamma);
  out.default_x0.assign(edges.size(), 0.0);
  out.default_y0 = uniform_flows();
  return out;
}

}  // namespace fasopt
