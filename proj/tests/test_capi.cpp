// Exercises the shared-library C interface: handles, error codes, and the
// determinism contract seen by external callers.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "fasopt.h"

namespace {

fasopt_solver_config default_config(int64_t rounds, uint64_t seed) {
  fasopt_solver_config cfg;
  cfg.rounds = rounds;
  cfg.inner_iterations = 0;  // automatic
  cfg.eta_bar = 0.0;         // problem default
  cfg.delta_bar = 0.0;       // 0.5
  cfg.seed = seed;
  cfg.record_inner = 0;
  return cfg;
}

}  // namespace

TEST_CASE("version and error message plumbing") {
  CHECK(std::string(fasopt_version()) == "0.1.0");
  CHECK(fasopt_problem_quadratic_standard(0, 1.0, 0.5, nullptr) ==
        FASOPT_ERR_INVALID_ARGUMENT);
  CHECK(std::string(fasopt_last_error()).size() > 0);
}

TEST_CASE("quadratic standard problem lifecycle") {
  fasopt_problem* problem = nullptr;
  REQUIRE(fasopt_problem_quadratic_standard(2, 1.0, 0.5, &problem) == FASOPT_OK);
  int32_t d = 0, dprime = 0;
  CHECK(fasopt_problem_dims(problem, &d, &dprime) == FASOPT_OK);
  CHECK(d == 2);
  CHECK(dprime == 2);

  std::vector<double> x0(d), y0(dprime);
  CHECK(fasopt_problem_default_start(problem, x0.data(), y0.data()) == FASOPT_OK);
  CHECK(x0[0] == 1.0);
  CHECK(y0[0] == 0.0);

  const fasopt_solver_config cfg = default_config(16, 3);
  fasopt_trace* trace = nullptr;
  REQUIRE(fasopt_run(problem, &cfg, nullptr, nullptr, &trace) == FASOPT_OK);
  CHECK(fasopt_trace_rounds(trace) == 16);
  CHECK(fasopt_trace_inner_iterations(trace) > 0);

  // per-round identity: estimate = (d / delta)(f_probe - f_base) v
  std::vector<double> x(d), v(d), estimate(d);
  double eta = 0, delta = 0, f_probe = 0, f_base = 0, grad_sq = 0;
  int32_t has_grad = 0;
  for (int64_t t = 0; t < 16; ++t) {
    REQUIRE(fasopt_trace_round(trace, t, x.data(), v.data(), &eta, &delta, &f_probe, &f_base,
                               estimate.data(), &grad_sq, &has_grad) == FASOPT_OK);
    CHECK(has_grad == 1);
    for (int i = 0; i < d; ++i)
      CHECK(estimate[i] == doctest::Approx(2.0 / delta * (f_probe - f_base) * v[i])
                               .epsilon(1e-12));
  }
  CHECK(fasopt_trace_round(trace, 16, nullptr, nullptr, nullptr, nullptr, nullptr, nullptr,
                           nullptr, nullptr, nullptr) == FASOPT_ERR_INVALID_ARGUMENT);

  int64_t best_t = -1;
  double best = -1.0;
  CHECK(fasopt_trace_min_grad(trace, problem, &best_t, &best) == FASOPT_OK);
  CHECK(best >= 0.0);
  CHECK(best_t >= 0);

  fasopt_trace_free(trace);
  fasopt_problem_free(problem);
}

TEST_CASE("explicit quadratic matches the standard constructor") {
  const double a[2] = {1.0, 1.0};
  const double b[2] = {-1.0, -1.0};
  const double B[4] = {1.0, 0.0, 0.0, 1.0};
  const double c[2] = {0.0, 0.0};
  const double lo[2] = {-10.0, -10.0};
  const double hi[2] = {10.0, 10.0};
  fasopt_problem* explicit_problem = nullptr;
  REQUIRE(fasopt_problem_quadratic(a, 2, b, 2, B, c, lo, hi, 0.5, &explicit_problem) ==
          FASOPT_OK);
  fasopt_problem* standard = nullptr;
  REQUIRE(fasopt_problem_quadratic_standard(2, 1.0, 0.5, &standard) == FASOPT_OK);

  const fasopt_solver_config cfg = default_config(8, 17);
  fasopt_trace *ta = nullptr, *tb = nullptr;
  REQUIRE(fasopt_run(explicit_problem, &cfg, nullptr, nullptr, &ta) == FASOPT_OK);
  REQUIRE(fasopt_run(standard, &cfg, nullptr, nullptr, &tb) == FASOPT_OK);
  double xa[2], xb[2];
  CHECK(fasopt_trace_final_x(ta, xa) == FASOPT_OK);
  CHECK(fasopt_trace_final_x(tb, xb) == FASOPT_OK);
  CHECK(xa[0] == xb[0]);
  CHECK(xa[1] == xb[1]);
  fasopt_trace_free(ta);
  fasopt_trace_free(tb);
  fasopt_problem_free(explicit_problem);
  fasopt_problem_free(standard);
}

TEST_CASE("strict saddle rejects all-positive curvature") {
  const double convex[2] = {1.0, 2.0};
  fasopt_problem* problem = nullptr;
  CHECK(fasopt_problem_strict_saddle(convex, 2, 0.5, &problem) ==
        FASOPT_ERR_INVALID_ARGUMENT);
  CHECK(std::string(fasopt_last_error()).find("negative") != std::string::npos);

  const double saddle[2] = {1.0, -1.0};
  REQUIRE(fasopt_problem_strict_saddle(saddle, 2, 0.5, &problem) == FASOPT_OK);
  fasopt_problem_free(problem);
}

TEST_CASE("routing problem from a JSON document") {
  const char* doc = R"({"edges":[{"id":1,"a":1.0,"b":0.0},{"id":2,"a":0.0,"b":1.0}],
                        "od_pairs":[{"demand":1.0,"paths":[[1],[2]]}],
                        "lambda":0.1})";
  fasopt_problem* problem = nullptr;
  REQUIRE(fasopt_problem_routing_json(doc, 0.5, &problem) == FASOPT_OK);
  int32_t d = 0, dprime = 0;
  CHECK(fasopt_problem_dims(problem, &d, &dprime) == FASOPT_OK);
  CHECK(d == 2);       // one toll per edge
  CHECK(dprime == 2);  // one flow per path

  fasopt_solver_config cfg = default_config(16, 5);
  cfg.inner_iterations = 20;
  fasopt_trace* trace = nullptr;
  REQUIRE(fasopt_run(problem, &cfg, nullptr, nullptr, &trace) == FASOPT_OK);
  int32_t has_grad = 1;
  CHECK(fasopt_trace_round(trace, 0, nullptr, nullptr, nullptr, nullptr, nullptr, nullptr,
                           nullptr, nullptr, &has_grad) == FASOPT_OK);
  CHECK(has_grad == 0);  // no closed-form hypergradient on routing games
  int64_t best_t;
  double value;
  CHECK(fasopt_trace_min_grad(trace, problem, &best_t, &value) ==
        FASOPT_ERR_INVALID_ARGUMENT);
  fasopt_trace_free(trace);
  fasopt_problem_free(problem);

  CHECK(fasopt_problem_routing_json("{not json", 0.5, &problem) ==
        FASOPT_ERR_INVALID_ARGUMENT);
  CHECK(fasopt_problem_routing_json(R"({"edges":[{"id":1,"a":1.0,"b":0.0}],
        "od_pairs":[{"demand":1.0,"paths":[[9]]}]})", 0.5, &problem) ==
        FASOPT_ERR_INVALID_ARGUMENT);
  CHECK(std::string(fasopt_last_error()).find("od_pairs[0]") != std::string::npos);
}

TEST_CASE("schedules and iteration selection through the C surface") {
  CHECK(fasopt_step_size(1.0, 4, 3) == doctest::Approx(0.125));
  CHECK(fasopt_probe_radius(1.0, 4, 0) == doctest::Approx(0.5));

  double alpha = 0.0;
  REQUIRE(fasopt_alpha_of_k(FASOPT_RATE_POLYNOMIAL, 1.0, 1.0, 0.0, 4, &alpha) == FASOPT_OK);
  CHECK(alpha == doctest::Approx(0.25));
  REQUIRE(fasopt_alpha_of_k(FASOPT_RATE_EXPONENTIAL, 1.0, 0.0, 0.5, 3, &alpha) == FASOPT_OK);
  CHECK(alpha == doctest::Approx(0.125));

  int64_t k = 0;
  REQUIRE(fasopt_choose_inner_iterations(FASOPT_RATE_POLYNOMIAL, 1.0, 1.0, 0.0, 16, 1, &k) ==
          FASOPT_OK);
  CHECK(k == 4);
  REQUIRE(fasopt_choose_inner_iterations(FASOPT_RATE_EXPONENTIAL, 1.0, 0.0, 0.5, 10000, 1,
                                         &k) == FASOPT_OK);
  CHECK(k == 7);
  CHECK(fasopt_choose_inner_iterations(FASOPT_RATE_EXPONENTIAL, 1.0, 0.0, 1.5, 100, 1, &k) ==
        FASOPT_ERR_INVALID_ARGUMENT);
}

TEST_CASE("identical seeds give identical traces through the C surface") {
  fasopt_problem* problem = nullptr;
  REQUIRE(fasopt_problem_quadratic_standard(3, 1.0, 0.5, &problem) == FASOPT_OK);
  const fasopt_solver_config cfg = default_config(24, 1234);
  fasopt_trace *ta = nullptr, *tb = nullptr;
  REQUIRE(fasopt_run(problem, &cfg, nullptr, nullptr, &ta) == FASOPT_OK);
  REQUIRE(fasopt_run(problem, &cfg, nullptr, nullptr, &tb) == FASOPT_OK);
  double xa[3], xb[3];
  for (int64_t t = 0; t < 24; ++t) {
    REQUIRE(fasopt_trace_round(ta, t, xa, nullptr, nullptr, nullptr, nullptr, nullptr, nullptr,
                               nullptr, nullptr) == FASOPT_OK);
    REQUIRE(fasopt_trace_round(tb, t, xb, nullptr, nullptr, nullptr, nullptr, nullptr, nullptr,
                               nullptr, nullptr) == FASOPT_OK);
    CHECK(std::memcmp(xa, xb, sizeof(xa)) == 0);
  }
  fasopt_trace_free(ta);
  fasopt_trace_free(tb);
  fasopt_problem_free(problem);
}

TEST_CASE("rounds must be positive") {
  fasopt_problem* problem = nullptr;
  REQUIRE(fasopt_problem_quadratic_standard(2, 1.0, 0.5, &problem) == FASOPT_OK);
  const fasopt_solver_config cfg = default_config(0, 1);
  fasopt_trace* trace = nullptr;
  CHECK(fasopt_run(problem, &cfg, nullptr, nullptr, &trace) == FASOPT_ERR_INVALID_ARGUMENT);
  fasopt_problem_free(problem);
}
