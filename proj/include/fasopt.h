/* fasopt -- follower-agnostic Stackelberg optimization.
 *
 * C interface to the shared library. All functions return a status code
 * (FASOPT_OK on success); fasopt_last_error() describes the most recent
 * failure on the calling thread. Objects are opaque handles released with
 * their matching _free function.
 */
#ifndef FASOPT_H
#define FASOPT_H

#include <stdint.h>

#if defined(_WIN32)
#define FASOPT_API __declspec(dllexport)
#else
#define FASOPT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* ---- status codes ----------------------------------------------------- */

#define FASOPT_OK 0
#define FASOPT_ERR_INVALID_ARGUMENT 1
#define FASOPT_ERR_RUNTIME 2
#define FASOPT_ERR_IO 3
#define FASOPT_ERR_DIVERGED 4 /* leader iterate became non-finite */

FASOPT_API const char* fasopt_version(void);

/* Message for the last failing call on this thread; empty string if none. */
FASOPT_API const char* fasopt_last_error(void);

/* ---- problems ---------------------------------------------------------- */

typedef struct fasopt_problem fasopt_problem;

/* Bilevel quadratic benchmark.
 *   f(x,y) = 1/2|x-a|^2 + 1/2|y-b|^2, followers minimize 1/2|y-Bx-c|^2
 * over the box [lo, hi]. B is row-major, dprime x d. gamma is the
 * followers' step size. */
FASOPT_API int fasopt_problem_quadratic(const double* a, int32_t d, const double* b,
                                        int32_t dprime, const double* B, const double* c,
                                        const double* lo, const double* hi, double gamma,
                                        fasopt_problem** out);

/* Standard quadratic instance of dimension d (a = 1, b = -1, B = coupling*I). */
FASOPT_API int fasopt_problem_quadratic_standard(int32_t d, double coupling, double gamma,
                                                 fasopt_problem** out);

/* Reduced objective 1/2 x^T diag(curvature) x with a trivial follower side. */
FASOPT_API int fasopt_problem_strict_saddle(const double* curvature, int32_t d, double gamma,
                                            fasopt_problem** out);

/* Routing toll-design game from a JSON document:
 *   {"edges":[{"id":..,"a":..,"b":..}],
 *    "od_pairs":[{"demand":..,"paths":[[edge ids]..]}],
 *    "lambda": ..}
 */
FASOPT_API int fasopt_problem_routing_json(const char* json_text, double gamma,
                                           fasopt_problem** out);

FASOPT_API void fasopt_problem_free(fasopt_problem* problem);

FASOPT_API int fasopt_problem_dims(const fasopt_problem* problem, int32_t* leader_dim,
                                   int32_t* follower_dim);

/* Canonical starting points (arrays sized by fasopt_problem_dims). */
FASOPT_API int fasopt_problem_default_start(const fasopt_problem* problem, double* x0,
                                            double* y0);

/* ---- schedules --------------------------------------------------------- */

FASOPT_API double fasopt_step_size(double eta_bar, int32_t d, int64_t t);
FASOPT_API double fasopt_probe_radius(double delta_bar, int32_t d, int64_t t);

#define FASOPT_RATE_POLYNOMIAL 0
#define FASOPT_RATE_EXPONENTIAL 1

/* Residual contraction alpha(K) under a rate certificate. */
FASOPT_API int fasopt_alpha_of_k(int32_t rate_kind, double prefactor, double exponent,
                                 double ratio, int64_t k, double* out);

/* Smallest inner-iteration count for the given horizon and dimension. */
FASOPT_API int fasopt_choose_inner_iterations(int32_t rate_kind, double prefactor,
                                              double exponent, double ratio, int64_t horizon,
                                              int32_t d, int64_t* out);

/* ---- solver ------------------------------------------------------------ */

typedef struct fasopt_trace fasopt_trace;

typedef struct fasopt_solver_config {
  int64_t rounds;           /* T > 0 */
  int64_t inner_iterations; /* K > 0, or <= 0 for automatic selection */
  double eta_bar;           /* <= 0: default for the problem */
  double delta_bar;         /* <= 0: default 0.5 */
  uint64_t seed;
  int32_t record_inner; /* keep all inner iterates (memory-heavy) */
} fasopt_solver_config;

/* x0/y0 may be NULL to use the problem's canonical starting points. */
FASOPT_API int fasopt_run(const fasopt_problem* problem, const fasopt_solver_config* config,
                          const double* x0, const double* y0, fasopt_trace** out);

FASOPT_API void fasopt_trace_free(fasopt_trace* trace);

FASOPT_API int64_t fasopt_trace_rounds(const fasopt_trace* trace);
FASOPT_API int64_t fasopt_trace_inner_iterations(const fasopt_trace* trace);

/* Any output pointer may be NULL. Vector outputs are sized by the leader
 * dimension; has_grad_norm_sq reports whether grad_norm_sq is meaningful. */
FASOPT_API int fasopt_trace_round(const fasopt_trace* trace, int64_t t, double* x, double* v,
                                  double* eta, double* delta, double* f_probe, double* f_base,
                                  double* estimate, double* grad_norm_sq,
                                  int32_t* has_grad_norm_sq);

FASOPT_API int fasopt_trace_final_x(const fasopt_trace* trace, double* x);

/* Round index and value of the smallest squared hypergradient norm;
 * requires a problem with a closed-form hypergradient. */
FASOPT_API int fasopt_trace_min_grad(const fasopt_trace* trace, const fasopt_problem* problem,
                                     int64_t* best_t, double* value);

FASOPT_API int fasopt_trace_write_csv(const fasopt_trace* trace, const char* path);

/* ---- experiment driver (powers the CLI) -------------------------------- */

/* All four return process exit codes: 0 ok, 2 config error, 3 run abort,
 * 4 diagnostic assertion failure. out_dir may be NULL (config's choice);
 * seed_base < 0 keeps the config's seeds. */
FASOPT_API int fasopt_experiment_run(const char* config_path, const char* out_dir, int32_t jobs,
                                     int64_t seed_base, int32_t verbose);
FASOPT_API int fasopt_experiment_sweep(const char* config_path, const char* out_dir,
                                       int32_t jobs, int64_t seed_base, int32_t verbose);
FASOPT_API int fasopt_experiment_diagnose(const char* config_path, const char* out_dir,
                                          int32_t verbose);
FASOPT_API int fasopt_experiment_report(const char* dir, int32_t verbose);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FASOPT_H */
