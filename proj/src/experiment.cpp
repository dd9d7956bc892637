#include "fasopt/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "fasopt/diagnostics.hpp"
#include "fasopt/estimator.hpp"
#include "fasopt/rng.hpp"

namespace fs = std::filesystem;

namespace fasopt {

using nlohmann::json;

// ---- small helpers ----------------------------------------------------------

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_hash_hex: cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a offset basis
  char chunk[4096];
  while (in.read(chunk, sizeof(chunk)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(chunk[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ConfigError(path + ": " + message);
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "must be a number");
  return j.get<double>();
}

std::int64_t as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "must be an integer");
  return j.get<std::int64_t>();
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "must be a boolean");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "must be a string");
  return j.get<std::string>();
}

Vec as_vec(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "must be a nonempty array of numbers");
  Vec out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(as_number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* k) { return key == k; }) == allowed.end())
      fail(path.empty() ? key : path + "." + key, "unknown field");
  }
}

std::string join_path(const std::string& dir, const std::string& leaf) {
  if (leaf.empty()) return dir;
  fs::path p(leaf);
  if (p.is_absolute() || dir.empty()) return leaf;
  return (fs::path(dir) / p).string();
}

}  // namespace

// ---- routing instance document ----------------------------------------------

RoutingInstance parse_routing_instance(const json& doc) {
  if (!doc.is_object()) fail("instance", "must be an object");
  check_keys(doc, "instance", {"edges", "od_pairs", "lambda"});
  if (!doc.contains("edges")) fail("instance.edges", "required");
  if (!doc.contains("od_pairs")) fail("instance.od_pairs", "required");

  std::vector<RoutingEdge> edges;
  const json& je = doc["edges"];
  if (!je.is_array() || je.empty()) fail("instance.edges", "must be a nonempty array");
  for (std::size_t i = 0; i < je.size(); ++i) {
    const std::string path = "instance.edges[" + std::to_string(i) + "]";
    if (!je[i].is_object()) fail(path, "must be an object");
    check_keys(je[i], path, {"id", "a", "b"});
    RoutingEdge e;
    e.id = static_cast<int>(as_int(je[i].at("id"), path + ".id"));
    e.slope = as_number(je[i].at("a"), path + ".a");
    e.intercept = as_number(je[i].at("b"), path + ".b");
    edges.push_back(e);
  }

  std::vector<OdPair> pairs;
  const json& jo = doc["od_pairs"];
  if (!jo.is_array() || jo.empty()) fail("instance.od_pairs", "must be a nonempty array");
  for (std::size_t i = 0; i < jo.size(); ++i) {
    const std::string path = "instance.od_pairs[" + std::to_string(i) + "]";
    if (!jo[i].is_object()) fail(path, "must be an object");
    check_keys(jo[i], path, {"demand", "paths"});
    OdPair pair;
    pair.demand = as_number(jo[i].at("demand"), path + ".demand");
    const json& jp = jo[i].at("paths");
    if (!jp.is_array() || jp.empty()) fail(path + ".paths", "must be a nonempty array");
    for (std::size_t k = 0; k < jp.size(); ++k) {
      const std::string ppath = path + ".paths[" + std::to_string(k) + "]";
      if (!jp[k].is_array() || jp[k].empty()) fail(ppath, "must be a nonempty array of edge ids");
      std::vector<int> edge_ids;
      for (std::size_t m = 0; m < jp[k].size(); ++m)
        edge_ids.push_back(
            static_cast<int>(as_int(jp[k][m], ppath + "[" + std::to_string(m) + "]")));
      pair.paths.push_back(std::move(edge_ids));
    }
    pairs.push_back(std::move(pair));
  }

  double lambda = 0.0;
  if (doc.contains("lambda")) lambda = as_number(doc["lambda"], "instance.lambda");

  try {
    return RoutingInstance::make(std::move(edges), std::move(pairs), lambda);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RoutingInstance load_routing_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("routing instance file not readable: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("routing instance " + path + ": " + e.what());
  }
  return parse_routing_instance(doc);
}

// ---- experiment config --------------------------------------------------------

std::string SweepCell::label() const {
  std::string s;
  auto append = [&](const std::string& part) {
    if (!s.empty()) s += "_";
    s += part;
  };
  if (T) append("T" + std::to_string(*T));
  if (K) append("K" + std::to_string(*K));
  if (d) append("d" + std::to_string(*d));
  if (rho) append("rho" + format_double(*rho));
  if (lambda) append("lam" + format_double(*lambda));
  return s;
}

namespace {

void parse_problem_node(const json& node, ExperimentConfig& cfg) {
  if (!node.is_object()) fail("problem", "must be an object");
  if (!node.contains("kind")) fail("problem.kind", "required");
  cfg.kind = as_string(node["kind"], "problem.kind");

  json resolved = node;
  if (cfg.kind == "quadratic") {
    check_keys(node, "problem",
               {"kind", "d", "coupling", "box_radius", "a", "b", "B", "c", "box_lo", "box_hi",
                "gamma", "exact_inner"});
    const bool recipe = node.contains("d");
    const bool explicit_arrays = node.contains("a") || node.contains("B");
    if (recipe == explicit_arrays)
      fail("problem", "give either d (standard instance) or explicit a/b/B/c/box arrays");
  } else if (cfg.kind == "strict_saddle") {
    check_keys(node, "problem", {"kind", "d", "D", "gamma"});
    if (node.contains("d") == node.contains("D"))
      fail("problem", "give either d (last curvature negative) or an explicit diagonal D");
  } else if (cfg.kind == "routing") {
    check_keys(node, "problem", {"kind", "instance", "edges", "od_pairs", "lambda", "gamma"});
    if (node.contains("instance")) {
      // inline the referenced document so manifests are self-contained
      const std::string path =
          join_path(cfg.config_dir, as_string(node["instance"], "problem.instance"));
      std::ifstream in(path);
      if (!in) fail("problem.instance", "file not readable: " + path);
      json doc;
      try {
        in >> doc;
      } catch (const json::exception& e) {
        fail("problem.instance", std::string("invalid JSON: ") + e.what());
      }
      resolved.erase("instance");
      for (const auto& [key, value] : doc.items()) {
        if (!resolved.contains(key)) resolved[key] = value;
      }
    }
    if (!resolved.contains("edges") || !resolved.contains("od_pairs"))
      fail("problem", "routing needs edges and od_pairs (inline or via instance file)");
  } else {
    fail("problem.kind", "must be quadratic, strict_saddle or routing");
  }

  if (resolved.contains("gamma")) {
    cfg.gamma = as_number(resolved["gamma"], "problem.gamma");
    if (!(cfg.gamma > 0.0)) fail("problem.gamma", "must be positive");
  }
  cfg.problem = std::move(resolved);
}

void parse_solver_node(const json& node, ExperimentConfig& cfg) {
  if (!node.is_object()) fail("solver", "must be an object");
  check_keys(node, "solver",
             {"T", "K", "eta_bar", "delta_bar", "x0", "y0", "record_inner"});
  if (!node.contains("T")) fail("solver.T", "required");
  cfg.rounds = as_int(node["T"], "solver.T");
  if (cfg.rounds < 1) fail("solver.T", "must be a positive integer");
  if (node.contains("K")) {
    if (node["K"].is_string()) {
      if (node["K"].get<std::string>() != "auto") fail("solver.K", "must be \"auto\" or an integer");
      cfg.inner_iterations = kAutoInnerIterations;
    } else {
      cfg.inner_iterations = as_int(node["K"], "solver.K");
      if (cfg.inner_iterations < 1) fail("solver.K", "must be >= 1");
    }
  }
  if (node.contains("eta_bar")) {
    cfg.eta_bar = as_number(node["eta_bar"], "solver.eta_bar");
    if (!(cfg.eta_bar > 0.0)) fail("solver.eta_bar", "must be positive");
  }
  if (node.contains("delta_bar")) {
    cfg.delta_bar = as_number(node["delta_bar"], "solver.delta_bar");
    if (!(cfg.delta_bar > 0.0)) fail("solver.delta_bar", "must be positive");
  }
  if (node.contains("x0")) cfg.x0 = as_vec(node["x0"], "solver.x0");
  if (node.contains("y0")) cfg.y0 = as_vec(node["y0"], "solver.y0");
  if (node.contains("record_inner"))
    cfg.record_inner = as_bool(node["record_inner"], "solver.record_inner");
}

void parse_sweep_node(const json& node, ExperimentConfig& cfg) {
  if (!node.is_object()) fail("sweep", "must be an object");
  check_keys(node, "sweep", {"T", "K", "d", "rho", "lambda"});
  auto ints = [&](const char* key, auto& target) {
    if (!node.contains(key)) return;
    const json& j = node[key];
    if (!j.is_array() || j.empty()) fail(std::string("sweep.") + key, "must be a nonempty array");
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::int64_t v = as_int(j[i], std::string("sweep.") + key);
      if (v < 1) fail(std::string("sweep.") + key, "entries must be >= 1");
      target.push_back(v);
    }
  };
  ints("T", cfg.sweep.T);
  ints("K", cfg.sweep.K);
  if (node.contains("d")) {
    const json& j = node["d"];
    if (!j.is_array() || j.empty()) fail("sweep.d", "must be a nonempty array");
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::int64_t v = as_int(j[i], "sweep.d");
      if (v < 1) fail("sweep.d", "entries must be >= 1");
      cfg.sweep.d.push_back(static_cast<int>(v));
    }
  }
  auto reals = [&](const char* key, std::vector<double>& target, double lo, double hi) {
    if (!node.contains(key)) return;
    const json& j = node[key];
    if (!j.is_array() || j.empty()) fail(std::string("sweep.") + key, "must be a nonempty array");
    for (std::size_t i = 0; i < j.size(); ++i) {
      const double v = as_number(j[i], std::string("sweep.") + key);
      if (!(v >= lo && v < hi)) fail(std::string("sweep.") + key, "entry out of range");
      target.push_back(v);
    }
  };
  reals("rho", cfg.sweep.rho, 1e-12, 1.0);
  reals("lambda", cfg.sweep.lambda, 0.0, 1e300);

  if (!cfg.sweep.d.empty()) {
    const bool recipe = cfg.problem.contains("d");
    if (!recipe) fail("sweep.d", "requires the standard-instance problem form (problem.d)");
  }
  if (!cfg.sweep.rho.empty() && cfg.kind == "routing")
    fail("sweep.rho", "not applicable to routing problems");
  if (!cfg.sweep.lambda.empty() && cfg.kind != "routing")
    fail("sweep.lambda", "only applicable to routing problems");
}

void parse_diagnostics_node(const json& node, ExperimentConfig& cfg) {
  if (!node.is_object()) fail("diagnostics", "must be an object");
  check_keys(node, "diagnostics",
             {"error_decomposition", "shadow", "saddle_escape", "rate_fit", "mc_samples"});
  DiagnosticsFlags& d = cfg.diagnostics;
  if (node.contains("error_decomposition"))
    d.error_decomposition = as_bool(node["error_decomposition"], "diagnostics.error_decomposition");
  if (node.contains("mc_samples")) {
    d.mc_samples = as_int(node["mc_samples"], "diagnostics.mc_samples");
    if (d.mc_samples < 1) fail("diagnostics.mc_samples", "must be >= 1");
  }
  if (node.contains("shadow")) {
    const json& j = node["shadow"];
    if (j.is_boolean()) {
      d.shadow = j.get<bool>();
    } else if (j.is_object()) {
      check_keys(j, "diagnostics.shadow", {"anchors", "horizon"});
      d.shadow = true;
      if (j.contains("anchors")) {
        d.shadow_anchors.clear();
        for (std::size_t i = 0; i < j["anchors"].size(); ++i)
          d.shadow_anchors.push_back(as_int(j["anchors"][i], "diagnostics.shadow.anchors"));
        if (d.shadow_anchors.empty()) fail("diagnostics.shadow.anchors", "must be nonempty");
      }
      if (j.contains("horizon")) {
        d.shadow_horizon = as_int(j["horizon"], "diagnostics.shadow.horizon");
        if (d.shadow_horizon < 1) fail("diagnostics.shadow.horizon", "must be >= 1");
      }
    } else {
      fail("diagnostics.shadow", "must be a boolean or an object");
    }
  }
  if (node.contains("saddle_escape")) {
    const json& j = node["saddle_escape"];
    if (j.is_boolean()) {
      d.saddle_escape = j.get<bool>();
    } else if (j.is_object()) {
      check_keys(j, "diagnostics.saddle_escape", {"radius_sq"});
      d.saddle_escape = true;
      if (j.contains("radius_sq")) {
        d.escape_radius_sq = as_number(j["radius_sq"], "diagnostics.saddle_escape.radius_sq");
        if (!(d.escape_radius_sq > 0.0)) fail("diagnostics.saddle_escape.radius_sq", "must be > 0");
      }
    } else {
      fail("diagnostics.saddle_escape", "must be a boolean or an object");
    }
  }
  if (node.contains("rate_fit")) d.rate_fit = as_bool(node["rate_fit"], "diagnostics.rate_fit");
}

}  // namespace

ExperimentConfig parse_config_json(const json& doc, const std::string& config_dir) {
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  check_keys(doc, "",
             {"problem", "solver", "replicates", "seeds", "seed_base", "sweep", "diagnostics",
              "output_dir"});

  ExperimentConfig cfg;
  cfg.config_dir = config_dir;
  if (!doc.contains("problem")) fail("problem", "required");
  parse_problem_node(doc["problem"], cfg);
  if (!doc.contains("solver")) fail("solver", "required");
  parse_solver_node(doc["solver"], cfg);

  if (doc.contains("replicates")) {
    cfg.replicates = as_int(doc["replicates"], "replicates");
    if (cfg.replicates < 1) fail("replicates", "must be >= 1");
  }

  if (doc.contains("seeds") && doc.contains("seed_base"))
    fail("seeds", "give either seeds or seed_base, not both");
  if (doc.contains("seeds")) {
    const json& j = doc["seeds"];
    if (!j.is_array() || j.empty()) fail("seeds", "must be a nonempty array");
    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::int64_t s = as_int(j[i], "seeds[" + std::to_string(i) + "]");
      if (s < 0) fail("seeds[" + std::to_string(i) + "]", "must be nonnegative");
      if (!seen.insert(static_cast<std::uint64_t>(s)).second)
        fail("seeds[" + std::to_string(i) + "]", "duplicate seed");
      cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    cfg.replicates = static_cast<std::int64_t>(cfg.seeds.size());
  } else {
    std::uint64_t base = 1;
    if (doc.contains("seed_base")) {
      const std::int64_t s = as_int(doc["seed_base"], "seed_base");
      if (s < 0) fail("seed_base", "must be nonnegative");
      base = static_cast<std::uint64_t>(s);
    }
    for (std::int64_t i = 0; i < cfg.replicates; ++i)
      cfg.seeds.push_back(base + static_cast<std::uint64_t>(i));
  }

  if (doc.contains("sweep")) parse_sweep_node(doc["sweep"], cfg);
  if (doc.contains("diagnostics")) parse_diagnostics_node(doc["diagnostics"], cfg);
  if (doc.contains("output_dir")) cfg.output_dir = as_string(doc["output_dir"], "output_dir");

  cfg.echo = doc;
  cfg.echo["problem"] = cfg.problem;  // instance files resolved inline

  // Fail early on an unconstructible problem or inconsistent starting points.
  const ProblemBundle bundle = build_bundle(cfg, SweepCell{});
  (void)build_solver_config(cfg, bundle, SweepCell{}, cfg.seeds.front());
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not readable: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config_json(doc, fs::path(path).parent_path().string());
}

// ---- bundle / solver-config construction --------------------------------------

ProblemBundle build_bundle(const ExperimentConfig& cfg, const SweepCell& cell) {
  const json& node = cfg.problem;
  const double gamma = cell.rho ? (1.0 - *cell.rho) : cfg.gamma;
  try {
    if (cfg.kind == "quadratic") {
      const bool exact_inner =
          node.contains("exact_inner") && as_bool(node["exact_inner"], "problem.exact_inner");
      if (node.contains("d")) {
        const int dim = cell.d ? *cell.d
                               : static_cast<int>(as_int(node["d"], "problem.d"));
        const double coupling =
            node.contains("coupling") ? as_number(node["coupling"], "problem.coupling") : 1.0;
        const double radius =
            node.contains("box_radius") ? as_number(node["box_radius"], "problem.box_radius")
                                        : 10.0;
        return QuadraticBilevel::standard(dim, coupling, radius).bundle(gamma, exact_inner);
      }
      if (cell.d) fail("sweep.d", "explicit quadratic arrays fix the dimension");
      QuadraticBilevel qb;
      qb.a = as_vec(node.at("a"), "problem.a");
      qb.b = as_vec(node.at("b"), "problem.b");
      const json& jb = node.at("B");
      if (!jb.is_array() || jb.empty()) fail("problem.B", "must be a nonempty array of rows");
      qb.B = Mat(jb.size(), qb.a.size());
      for (std::size_t i = 0; i < jb.size(); ++i) {
        const Vec row = as_vec(jb[i], "problem.B[" + std::to_string(i) + "]");
        if (row.size() != qb.a.size()) fail("problem.B", "row length must equal leader dim");
        for (std::size_t j = 0; j < row.size(); ++j) qb.B.at(i, j) = row[j];
      }
      qb.c = node.contains("c") ? as_vec(node["c"], "problem.c") : Vec(qb.b.size(), 0.0);
      qb.box_lo = node.contains("box_lo") ? as_vec(node["box_lo"], "problem.box_lo")
                                          : Vec(qb.b.size(), -10.0);
      qb.box_hi = node.contains("box_hi") ? as_vec(node["box_hi"], "problem.box_hi")
                                          : Vec(qb.b.size(), 10.0);
      return qb.bundle(gamma, exact_inner);
    }
    if (cfg.kind == "strict_saddle") {
      StrictSaddleProblem sp;
      if (node.contains("D") && !cell.d) {
        sp.curvature = as_vec(node["D"], "problem.D");
      } else {
        const int dim = cell.d ? *cell.d : static_cast<int>(as_int(node.at("d"), "problem.d"));
        if (dim < 2) fail("problem.d", "strict saddle needs d >= 2");
        sp.curvature.assign(static_cast<std::size_t>(dim), 1.0);
        sp.curvature.back() = -1.0;
      }
      return sp.bundle(gamma);
    }
    // routing: the parse step guarantees inline edges/od_pairs
    json doc{{"edges", node.at("edges")},
             {"od_pairs", node.at("od_pairs")},
             {"lambda", node.contains("lambda") ? node["lambda"] : json(0.0)}};
    RoutingInstance inst = parse_routing_instance(doc);
    if (cell.lambda) inst.toll_penalty = *cell.lambda;
    return inst.bundle(gamma);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
}

SolverConfig build_solver_config(const ExperimentConfig& cfg, const ProblemBundle& bundle,
                                 const SweepCell& cell, std::uint64_t seed) {
  SolverConfig sc;
  sc.rounds = cell.T ? *cell.T : cfg.rounds;
  sc.inner_iterations = cell.K ? *cell.K : cfg.inner_iterations;
  sc.seed = seed;
  sc.record_inner = cfg.record_inner;

  const int dim = bundle.leader.leader_dim;
  sc.schedule.dim = dim;
  if (cfg.eta_bar > 0.0) {
    sc.schedule.eta_bar = cfg.eta_bar;
    if (bundle.leader.constants.hyper_smoothness) {
      const double limit =
          static_cast<double>(dim) / (2.0 * *bundle.leader.constants.hyper_smoothness);
      if (cfg.eta_bar > limit)
        throw ConfigError("solver.eta_bar: " + format_double(cfg.eta_bar) +
                          " exceeds the stable range d / (2 * smoothness) = " +
                          format_double(limit));
    }
  } else if (bundle.leader.constants.hyper_smoothness) {
    sc.schedule.eta_bar =
        static_cast<double>(dim) / (4.0 * *bundle.leader.constants.hyper_smoothness);
  } else {
    sc.schedule.eta_bar = 0.1 * static_cast<double>(dim);
  }
  sc.schedule.delta_bar = (cfg.delta_bar > 0.0) ? cfg.delta_bar : 0.5;

  if (cfg.x0) {
    if (cfg.x0->size() != static_cast<std::size_t>(dim))
      throw ConfigError("solver.x0: length " + std::to_string(cfg.x0->size()) +
                        " does not match leader dimension " + std::to_string(dim));
    sc.x0 = *cfg.x0;
  } else {
    sc.x0 = bundle.default_x0;
  }
  if (cfg.y0) {
    if (cfg.y0->size() != static_cast<std::size_t>(bundle.followers.dim))
      throw ConfigError("solver.y0: length " + std::to_string(cfg.y0->size()) +
                        " does not match follower dimension " +
                        std::to_string(bundle.followers.dim));
    sc.y0 = *cfg.y0;
  } else {
    sc.y0 = bundle.default_y0;
  }
  return sc;
}

// ---- trace CSV -----------------------------------------------------------------

void write_trace_csv(const RunTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // '\n' endings everywhere
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  const std::size_t dim = trace.config.x0.size();
  const bool has_grad =
      !trace.rounds.empty() && trace.rounds.front().grad_norm_sq.has_value();

  out << "t,eta,delta";
  for (std::size_t i = 0; i < dim; ++i) out << ",v[" << i << "]";
  for (std::size_t i = 0; i < dim; ++i) out << ",x[" << i << "]";
  out << ",f_hat,f_base,est_norm";
  if (has_grad) out << ",grad_norm_sq";
  out << "\n";

  for (const RoundRecord& rec : trace.rounds) {
    out << rec.t << "," << format_double(rec.eta) << "," << format_double(rec.delta);
    for (double c : rec.v) out << "," << format_double(c);
    for (double c : rec.x) out << "," << format_double(c);
    out << "," << format_double(rec.f_probe) << "," << format_double(rec.f_base) << ","
        << format_double(norm2(rec.estimate));
    if (has_grad) out << "," << format_double(rec.grad_norm_sq.value_or(0.0));
    out << "\n";
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

double parse_double_field(const std::string& s, const char* what) {
  double value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error(std::string("read_trace_csv: bad ") + what + " field '" + s + "'");
  return value;
}

}  // namespace

RunTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_trace_csv: cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("read_trace_csv: empty file " + path);
  if (!header.empty() && header.back() == '\r') header.pop_back();

  const std::vector<std::string> cols = split_csv_line(header);
  std::size_t dim = 0;
  while (3 + dim < cols.size() && cols[3 + dim] == "v[" + std::to_string(dim) + "]") ++dim;
  if (dim == 0) throw std::runtime_error("read_trace_csv: no direction columns in " + path);
  const bool has_grad = !cols.empty() && cols.back() == "grad_norm_sq";
  const std::size_t expected = 3 + 2 * dim + 3 + (has_grad ? 1 : 0);
  if (cols.size() != expected)
    throw std::runtime_error("read_trace_csv: unexpected header in " + path);

  RunTrace trace;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != expected)
      throw std::runtime_error("read_trace_csv: ragged row in " + path);
    RoundRecord rec;
    rec.t = static_cast<std::int64_t>(parse_double_field(f[0], "t"));
    rec.eta = parse_double_field(f[1], "eta");
    rec.delta = parse_double_field(f[2], "delta");
    rec.v.resize(dim);
    rec.x.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) rec.v[i] = parse_double_field(f[3 + i], "v");
    for (std::size_t i = 0; i < dim; ++i) rec.x[i] = parse_double_field(f[3 + dim + i], "x");
    rec.f_probe = parse_double_field(f[3 + 2 * dim], "f_hat");
    rec.f_base = parse_double_field(f[3 + 2 * dim + 1], "f_base");
    if (has_grad) rec.grad_norm_sq = parse_double_field(f[3 + 2 * dim + 3], "grad_norm_sq");
    rec.x_probe = axpy(rec.delta, rec.v, rec.x);
    rec.estimate =
        two_point_estimate(static_cast<int>(dim), rec.delta, rec.v, rec.f_probe, rec.f_base);
    trace.rounds.push_back(std::move(rec));
  }
  if (trace.rounds.empty()) throw std::runtime_error("read_trace_csv: no rounds in " + path);

  const RoundRecord& last = trace.rounds.back();
  trace.final_x = axpy(-last.eta, last.estimate, last.x);
  trace.config.rounds = static_cast<std::int64_t>(trace.rounds.size());
  trace.config.x0 = trace.rounds.front().x;
  trace.config.schedule.dim = static_cast<int>(dim);
  trace.config.schedule.eta_bar = trace.rounds.front().eta * static_cast<double>(dim);
  trace.config.schedule.delta_bar =
      trace.rounds.front().delta * std::sqrt(static_cast<double>(dim));
  return trace;
}

// ---- experiment execution -------------------------------------------------------

namespace {

struct RunPlan {
  std::size_t cell_ix = 0;
  std::uint64_t seed = 0;
  std::string file_name;
};

std::vector<SweepCell> enumerate_cells(const ExperimentConfig& cfg, bool honor_sweep) {
  std::vector<SweepCell> cells;
  if (!honor_sweep || cfg.sweep.empty()) {
    cells.push_back(SweepCell{});
    return cells;
  }
  const auto& sw = cfg.sweep;
  const std::size_t nT = std::max<std::size_t>(1, sw.T.size());
  const std::size_t nK = std::max<std::size_t>(1, sw.K.size());
  const std::size_t nd = std::max<std::size_t>(1, sw.d.size());
  const std::size_t nr = std::max<std::size_t>(1, sw.rho.size());
  const std::size_t nl = std::max<std::size_t>(1, sw.lambda.size());
  for (std::size_t iT = 0; iT < nT; ++iT)
    for (std::size_t iK = 0; iK < nK; ++iK)
      for (std::size_t id = 0; id < nd; ++id)
        for (std::size_t ir = 0; ir < nr; ++ir)
          for (std::size_t il = 0; il < nl; ++il) {
            SweepCell cell;
            if (!sw.T.empty()) cell.T = sw.T[iT];
            if (!sw.K.empty()) cell.K = sw.K[iK];
            if (!sw.d.empty()) cell.d = sw.d[id];
            if (!sw.rho.empty()) cell.rho = sw.rho[ir];
            if (!sw.lambda.empty()) cell.lambda = sw.lambda[il];
            cells.push_back(cell);
          }
  return cells;
}

std::string trace_file_name(const SweepCell& cell, std::uint64_t seed) {
  const std::string label = cell.label();
  return "trace_" + (label.empty() ? "" : label + "_") + "seed" + std::to_string(seed) + ".csv";
}

std::string resolve_output_dir(const ExperimentConfig& cfg, const RunOptions& opts) {
  if (!opts.output_dir_override.empty()) return opts.output_dir_override;
  if (const char* env = std::getenv("FASOPT_OUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

std::vector<std::uint64_t> resolve_seeds(const ExperimentConfig& cfg, const RunOptions& opts) {
  if (opts.seed_base_override < 0) return cfg.seeds;
  std::vector<std::uint64_t> seeds;
  for (std::int64_t i = 0; i < cfg.replicates; ++i)
    seeds.push_back(static_cast<std::uint64_t>(opts.seed_base_override) +
                    static_cast<std::uint64_t>(i));
  return seeds;
}

struct CellSummary {
  SweepCell cell;
  std::int64_t resolved_T = 0;
  std::int64_t resolved_K = 0;
  int resolved_d = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> min_grad_sq;   // NaN when no gradient source
  std::vector<double> final_value;   // reduced objective at the final iterate
};

double reduced_final_value(const ProblemBundle& bundle, const RunTrace& trace) {
  if (bundle.leader.has_solution_map()) return bundle.leader.hyper_objective(trace.final_x);
  return trace.rounds.back().f_base;  // best available proxy without a closed form
}

std::int64_t resolved_inner_for(const ExperimentConfig& cfg, const ProblemBundle& bundle,
                                const SweepCell& cell) {
  const std::int64_t k = cell.K ? *cell.K : cfg.inner_iterations;
  if (k != kAutoInnerIterations) return k;
  const std::int64_t horizon = cell.T ? *cell.T : cfg.rounds;
  return choose_inner_iterations(bundle.followers.rate, horizon, bundle.leader.leader_dim);
}

void write_aggregate_csv(const std::string& path, const std::vector<CellSummary>& cells) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "T,K,d,seed_count,min_grad_sq_mean,min_grad_sq_stderr,final_ftilde_mean\n";
  for (const CellSummary& c : cells) {
    double mean = 0.0, stderr_ = 0.0, fmean = 0.0;
    std::size_t n = c.min_grad_sq.size();
    for (double v : c.min_grad_sq) mean += v;
    for (double v : c.final_value) fmean += v;
    if (n > 0) {
      mean /= static_cast<double>(n);
      fmean /= static_cast<double>(n);
      if (n > 1) {
        double ss = 0.0;
        for (double v : c.min_grad_sq) ss += (v - mean) * (v - mean);
        stderr_ = std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
      }
    }
    out << c.resolved_T << "," << c.resolved_K << "," << c.resolved_d << "," << n << ","
        << format_double(mean) << "," << format_double(stderr_) << "," << format_double(fmean)
        << "\n";
  }
}

void write_long_csv(const std::string& path, const std::vector<CellSummary>& cells) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "T,K,d,rho,lambda,seed,min_grad_sq,final_ftilde\n";
  for (const CellSummary& c : cells) {
    for (std::size_t i = 0; i < c.seeds.size(); ++i) {
      out << c.resolved_T << "," << c.resolved_K << "," << c.resolved_d << ","
          << (c.cell.rho ? format_double(*c.cell.rho) : "") << ","
          << (c.cell.lambda ? format_double(*c.cell.lambda) : "") << "," << c.seeds[i] << ","
          << format_double(c.min_grad_sq[i]) << "," << format_double(c.final_value[i]) << "\n";
    }
  }
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, const RunOptions& opts, bool honor_sweep) {
  const std::string out_dir = resolve_output_dir(cfg, opts);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + out_dir + ": " + ec.message());

  const std::vector<SweepCell> cells = enumerate_cells(cfg, honor_sweep);
  const std::vector<std::uint64_t> seeds = resolve_seeds(cfg, opts);

  // Bundles are built once per cell, up front: routing bundles probe their
  // contraction rate at construction.
  std::vector<ProblemBundle> bundles;
  bundles.reserve(cells.size());
  for (const SweepCell& cell : cells) bundles.push_back(build_bundle(cfg, cell));

  // Surface inconsistent per-cell configuration before any run starts.
  for (std::size_t ci = 0; ci < cells.size(); ++ci)
    (void)build_solver_config(cfg, bundles[ci], cells[ci], seeds.front());

  std::vector<RunPlan> plan;
  for (std::size_t ci = 0; ci < cells.size(); ++ci)
    for (std::uint64_t seed : seeds)
      plan.push_back(RunPlan{ci, seed, trace_file_name(cells[ci], seed)});

  if (opts.verbose)
    std::fprintf(stderr, "fasopt: %zu run(s) planned into %s\n", plan.size(), out_dir.c_str());

  struct Slot {
    bool ok = false;
    std::string error;
    double min_grad_sq = std::numeric_limits<double>::quiet_NaN();
    double final_value = std::numeric_limits<double>::quiet_NaN();
    std::int64_t resolved_K = 0;
  };
  std::vector<Slot> slots(plan.size());

  const int jobs = std::max(1, opts.jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plan.size()) return;
      const RunPlan& p = plan[i];
      Slot& slot = slots[i];
      try {
        const ProblemBundle& bundle = bundles[p.cell_ix];
        SolverConfig sc = build_solver_config(cfg, bundle, cells[p.cell_ix], p.seed);
        const RunTrace trace = run_algorithm(bundle.leader, bundle.followers, sc);
        write_trace_csv(trace, join_path(out_dir, p.file_name));
        slot.resolved_K = trace.resolved_inner_iterations;
        if (bundle.leader.has_hypergradient())
          slot.min_grad_sq = min_grad_stationarity(trace, bundle.leader).value;
        slot.final_value = reduced_final_value(bundle, trace);
        slot.ok = true;
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // aggregate in deterministic (cell, seed) order
  std::vector<CellSummary> summaries;
  std::vector<json> failures;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    CellSummary summary;
    summary.cell = cells[ci];
    summary.resolved_d = bundles[ci].leader.leader_dim;
    summary.resolved_T = cells[ci].T ? *cells[ci].T : cfg.rounds;
    for (std::size_t i = 0; i < plan.size(); ++i) {
      if (plan[i].cell_ix != ci) continue;
      if (!slots[i].ok) {
        failures.push_back(json{{"file", plan[i].file_name}, {"error", slots[i].error}});
        continue;
      }
      summary.resolved_K = slots[i].resolved_K;
      summary.seeds.push_back(plan[i].seed);
      summary.min_grad_sq.push_back(slots[i].min_grad_sq);
      summary.final_value.push_back(slots[i].final_value);
    }
    summaries.push_back(std::move(summary));
  }

  write_aggregate_csv(join_path(out_dir, "aggregate.csv"), summaries);
  write_long_csv(join_path(out_dir, "long.csv"), summaries);

  json manifest;
  manifest["library"] = "fasopt";
  manifest["version"] = "0.1.0";
  manifest["status"] = failures.empty() ? "ok" : "aborted";
  manifest["config"] = cfg.echo;
  if (!failures.empty()) manifest["failures"] = failures;
  json outputs = json::array();
  for (const RunPlan& p : plan) {
    const std::string full = join_path(out_dir, p.file_name);
    if (fs::exists(full))
      outputs.push_back(json{{"path", p.file_name}, {"fnv1a64", file_hash_hex(full)}});
  }
  for (const char* name : {"aggregate.csv", "long.csv"})
    outputs.push_back(
        json{{"path", name}, {"fnv1a64", file_hash_hex(join_path(out_dir, name))}});
  manifest["outputs"] = outputs;
  {
    std::ofstream out(join_path(out_dir, "manifest.json"), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest.json");
    out << manifest.dump(2) << "\n";
  }

  if (!failures.empty()) {
    for (const json& f : failures)
      std::fprintf(stderr, "fasopt: run %s failed: %s\n", f["file"].get<std::string>().c_str(),
                   f["error"].get<std::string>().c_str());
    return kExitRunAbort;
  }
  return kExitOk;
}

// ---- diagnostics ---------------------------------------------------------------

namespace {

struct TraceSet {
  std::vector<RunTrace> traces;  // one per seed, order of cfg seeds
  std::vector<std::uint64_t> seeds;
};

TraceSet load_cell_traces(const std::string& out_dir, const SweepCell& cell,
                          const std::vector<std::uint64_t>& seeds) {
  TraceSet set;
  for (std::uint64_t seed : seeds) {
    const std::string path = join_path(out_dir, trace_file_name(cell, seed));
    if (!fs::exists(path))
      throw ConfigError("diagnose: missing trace " + path + " (run the experiment first)");
    set.traces.push_back(read_trace_csv(path));
    set.seeds.push_back(seed);
  }
  return set;
}

}  // namespace

int run_diagnostics(const ExperimentConfig& cfg, const RunOptions& opts) {
  const std::string out_dir = resolve_output_dir(cfg, opts);
  const std::vector<std::uint64_t> seeds = resolve_seeds(cfg, opts);
  const DiagnosticsFlags& flags = cfg.diagnostics;
  if (!flags.error_decomposition && !flags.shadow && !flags.saddle_escape && !flags.rate_fit)
    throw ConfigError("diagnose: no diagnostics enabled in the config");

  const SweepCell base_cell{};
  const ProblemBundle bundle = build_bundle(cfg, base_cell);
  json report;
  bool failed = false;
  auto note_failure = [&](const std::string& what) {
    failed = true;
    std::fprintf(stderr, "fasopt: diagnostic assertion failed: %s\n", what.c_str());
  };

  if (flags.error_decomposition) {
    if (!bundle.leader.has_solution_map() || !bundle.leader.has_hypergradient())
      throw ConfigError(
          "diagnostics.error_decomposition: needs a problem with closed-form solution map");
    const TraceSet set = load_cell_traces(out_dir, base_cell, {seeds.front()});
    RngStream rng(seeds.front(), /*stream_id=*/1);
    const ErrorDecomposition dec =
        error_decomposition(bundle.leader, set.traces.front(), flags.mc_samples, rng);

    // identity: the three parts must reassemble estimate - hypergradient
    double identity_gap = 0.0;
    for (std::size_t t = 0; t < dec.rounds.size(); ++t) {
      const RoundRecord& rec = set.traces.front().rounds[t];
      const Vec grad = bundle.leader.hypergradient(rec.x);
      Vec sum = add(add(dec.rounds[t].bias, dec.rounds[t].noise), dec.rounds[t].follower_error);
      identity_gap = std::max(identity_gap, dist2(sum, sub(rec.estimate, grad)));
    }
    report["error_decomposition"] = {{"mean_sq_bias", dec.mean_sq_bias()},
                                     {"mean_sq_noise", dec.mean_sq_noise()},
                                     {"mean_sq_follower_error", dec.mean_sq_follower_error()},
                                     {"max_identity_gap", identity_gap},
                                     {"mc_samples", flags.mc_samples}};
    if (identity_gap > 1e-10) note_failure("error decomposition identity gap > 1e-10");
  }

  if (flags.shadow) {
    if (!bundle.leader.has_hypergradient())
      throw ConfigError("diagnostics.shadow: needs a closed-form hypergradient");
    const TraceSet set = load_cell_traces(out_dir, base_cell, seeds);
    json anchors = json::array();
    std::vector<double> means;
    for (std::int64_t anchor : flags.shadow_anchors) {
      double mean_sup = 0.0;
      for (const RunTrace& trace : set.traces) {
        const std::vector<double> gaps =
            shadow_trajectory_gap(bundle.leader, trace, anchor, flags.shadow_horizon);
        mean_sup += *std::max_element(gaps.begin(), gaps.end());
      }
      mean_sup /= static_cast<double>(set.traces.size());
      anchors.push_back(json{{"anchor", anchor}, {"mean_sup_gap", mean_sup}});
      means.push_back(mean_sup);
    }
    report["shadow"] = {{"horizon", flags.shadow_horizon}, {"anchors", anchors}};
    for (std::size_t i = 1; i < means.size(); ++i)
      if (!(means[i] < means[i - 1]))
        note_failure("shadow gap did not shrink between anchors " +
                     std::to_string(flags.shadow_anchors[i - 1]) + " and " +
                     std::to_string(flags.shadow_anchors[i]));
  }

  if (flags.saddle_escape) {
    const TraceSet set = load_cell_traces(out_dir, base_cell, seeds);
    std::size_t escaped = 0;
    for (const RunTrace& trace : set.traces) {
      const std::size_t total = trace.rounds.size();
      const std::size_t from = total - total / 4;
      bool stays_out = true;
      for (std::size_t t = from; t < total; ++t)
        if (norm2_sq(trace.rounds[t].x) <= flags.escape_radius_sq) {
          stays_out = false;
          break;
        }
      if (stays_out) ++escaped;
    }
    const double fraction =
        static_cast<double>(escaped) / static_cast<double>(set.traces.size());
    report["saddle_escape"] = {{"radius_sq", flags.escape_radius_sq},
                               {"seeds", set.traces.size()},
                               {"escaped_fraction", fraction}};
    if (fraction < 0.95) note_failure("saddle escape fraction below 0.95");
  }

  if (flags.rate_fit) {
    // group aggregate rows by (K, d) and fit the decay of the seed-mean
    // min-stationarity against T
    const std::string agg_path = join_path(out_dir, "aggregate.csv");
    if (!fs::exists(agg_path)) throw ConfigError("diagnose: missing " + agg_path);
    std::ifstream in(agg_path);
    std::string line;
    std::getline(in, line);  // header
    // the decay is fitted per dimension; a resolved K only separates
    // groups when K itself was swept explicitly
    const bool split_by_k = !cfg.sweep.K.empty();
    std::map<std::string, std::vector<std::pair<double, double>>> groups;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      if (f.size() < 7) continue;
      const std::string key = split_by_k ? ("d" + f[2] + ",K" + f[1]) : ("d" + f[2]);
      groups[key].push_back(
          {parse_double_field(f[0], "T"), parse_double_field(f[4], "min_grad_sq_mean")});
    }
    json fits = json::array();
    for (auto& [key, points] : groups) {
      if (points.size() < 3) continue;
      const double slope = loglog_slope(points);
      fits.push_back(json{{"group", key}, {"slope", slope}});
      if (!(slope >= -0.7 && slope <= -0.3))
        note_failure("rate fit slope " + format_double(slope) + " outside [-0.7, -0.3]");
    }
    if (fits.empty())
      throw ConfigError("diagnostics.rate_fit: needs a sweep over at least 3 values of T");
    report["rate_fit"] = fits;
  }

  {
    std::ofstream out(join_path(out_dir, "diagnostics.json"), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write diagnostics.json");
    out << report.dump(2) << "\n";
  }
  if (opts.verbose) std::fprintf(stderr, "fasopt: diagnostics written to %s\n", out_dir.c_str());
  return failed ? kExitDiagnosticFailure : kExitOk;
}

// ---- report ---------------------------------------------------------------------

int write_report(const std::string& dir, bool verbose) {
  const std::string manifest_path = join_path(dir, "manifest.json");
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("report: missing manifest.json in " + dir);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report: manifest.json invalid: ") + e.what());
  }
  if (!manifest.contains("config")) throw ConfigError("report: manifest has no config echo");
  const ExperimentConfig cfg = parse_config_json(manifest["config"], dir);

  // regenerate the aggregates from the stored traces
  const bool swept = !cfg.sweep.empty();
  const std::vector<SweepCell> cells = enumerate_cells(cfg, swept);
  std::vector<CellSummary> summaries;
  for (const SweepCell& cell : cells) {
    const ProblemBundle bundle = build_bundle(cfg, cell);
    CellSummary summary;
    summary.cell = cell;
    summary.resolved_d = bundle.leader.leader_dim;
    summary.resolved_T = cell.T ? *cell.T : cfg.rounds;
    summary.resolved_K = resolved_inner_for(cfg, bundle, cell);
    for (std::uint64_t seed : cfg.seeds) {
      const std::string path = join_path(dir, trace_file_name(cell, seed));
      if (!fs::exists(path)) continue;
      const RunTrace trace = read_trace_csv(path);
      summary.seeds.push_back(seed);
      summary.min_grad_sq.push_back(bundle.leader.has_hypergradient()
                                        ? min_grad_stationarity(trace, bundle.leader).value
                                        : std::numeric_limits<double>::quiet_NaN());
      summary.final_value.push_back(reduced_final_value(bundle, trace));
    }
    summaries.push_back(std::move(summary));
  }
  write_aggregate_csv(join_path(dir, "aggregate.csv"), summaries);
  write_long_csv(join_path(dir, "long.csv"), summaries);
  if (verbose) std::fprintf(stderr, "fasopt: report written to %s\n", dir.c_str());
  return kExitOk;
}

}  // namespace fasopt
