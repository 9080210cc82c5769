#ifndef DIVDRAW_H
#define DIVDRAW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call.
 */
typedef enum DdStatus {
  DD_STATUS_OK = 0,
  DD_STATUS_INVALID_PARAMS = 1,
  DD_STATUS_DOMAIN = 2,
  DD_STATUS_REGIME = 3,
  DD_STATUS_NO_ROOT = 4,
  DD_STATUS_NON_CONVERGENCE = 5,
  DD_STATUS_OBSTACLE_VIOLATION = 6,
  DD_STATUS_NOT_FOUND = 7,
  DD_STATUS_ADMISSIBILITY = 8,
  DD_STATUS_CONFIG = 9,
  DD_STATUS_GATE = 10,
  DD_STATUS_IO = 11,
  DD_STATUS_NULL_POINTER = 12,
  DD_STATUS_PANIC = 13,
} DdStatus;

/**
 * Opaque model handle: validated parameters plus derived constants.
 */
typedef struct DdModel DdModel;

/**
 * Opaque solution handle: a solved value surface with extracted boundaries.
 */
typedef struct DdSolution DdSolution;

/**
 * Monte Carlo outcome. `mean_ruin_time` is NaN when no path ruined.
 */
typedef struct DdSimOutcome {
  double estimate;
  double std_error;
  double ruin_fraction;
  double mean_ruin_time;
} DdSimOutcome;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`); returns the full message length.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null (query mode).
 */
size_t dd_last_error(char *buf, size_t len);

/**
 * Builds a model from the five primitive parameters.
 *
 * # Safety
 * `out` must be a valid pointer; the returned handle must be released with
 * `dd_model_free`.
 */
enum DdStatus dd_model_new(double mu,
                           double sigma,
                           double r,
                           double cbar,
                           double b,
                           struct DdModel **out);

/**
 * # Safety
 * `handle` must come from `dd_model_new` and not be freed twice.
 */
void dd_model_free(struct DdModel *handle);

/**
 * Returns 0 for the simple regime, 1 for the complicated one, -1 on null.
 *
 * # Safety
 * `handle` must be valid or null.
 */
int32_t dd_model_regime(const struct DdModel *handle);

/**
 * Value of the boundary case (running maximum pinned at `cbar`).
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
enum DdStatus dd_boundary_value(const struct DdModel *handle, double x, double *out);

/**
 * First derivative of the boundary-case value.
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
enum DdStatus dd_boundary_value_dx(const struct DdModel *handle, double x, double *out);

/**
 * Barrier super-solution (upper bound with slope >= 1).
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
enum DdStatus dd_barrier_value(const struct DdModel *handle, double x, double *out);

/**
 * Optimal boundary-case payout rate at surplus `x`.
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
enum DdStatus dd_boundary_strategy_rate(const struct DdModel *handle, double x, double *out);

/**
 * Free point of the boundary case; errors in the simple regime.
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
enum DdStatus dd_model_free_point(const struct DdModel *handle, double *out);

/**
 * Solves the value surface and extracts both free boundaries.
 *
 * Pass `x_max <= 0` or `nx == 0` / `nc == 0` for model-dependent defaults.
 *
 * # Safety
 * `handle` and `out` must be valid; release the solution with
 * `dd_solution_free`.
 */
enum DdStatus dd_solve(const struct DdModel *handle,
                       size_t nx,
                       size_t nc,
                       double x_max,
                       struct DdSolution **out);

/**
 * # Safety
 * `handle` must come from `dd_solve` and not be freed twice.
 */
void dd_solution_free(struct DdSolution *handle);

/**
 * Bilinear value lookup on the solved surface.
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
enum DdStatus dd_solution_value(const struct DdSolution *handle, double x, double c, double *out);

/**
 * Bilinear slope lookup on the solved surface.
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
enum DdStatus dd_solution_slope(const struct DdSolution *handle, double x, double c, double *out);

/**
 * Number of payout levels carrying both boundary curves.
 *
 * # Safety
 * `handle` must be valid or null.
 */
size_t dd_solution_levels(const struct DdSolution *handle);

/**
 * Reads one sampled point of both boundary curves.
 *
 * # Safety
 * All pointers must be valid.
 */
enum DdStatus dd_solution_boundary_point(const struct DdSolution *handle,
                                         size_t level,
                                         double *c,
                                         double *x_switch,
                                         double *y_convert);

/**
 * Simulates the optimal feedback strategy against a solved surface.
 *
 * Pass `horizon <= 0` for the default `100 / r`.
 *
 * # Safety
 * All handles and `out` must be valid pointers.
 */
enum DdStatus dd_simulate_optimal(const struct DdModel *model,
                                  const struct DdSolution *solution,
                                  double x0,
                                  double c0,
                                  double dt,
                                  double horizon,
                                  size_t n_paths,
                                  uint64_t seed,
                                  bool antithetic,
                                  bool bridge,
                                  struct DdSimOutcome *out);

/**
 * Simulates the closed-form boundary-case strategy; needs no solve.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum DdStatus dd_simulate_boundary_case(const struct DdModel *model,
                                        double x0,
                                        double c0,
                                        double dt,
                                        double horizon,
                                        size_t n_paths,
                                        uint64_t seed,
                                        bool antithetic,
                                        bool bridge,
                                        struct DdSimOutcome *out);

/**
 * Simulates a constant-rate comparison strategy.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum DdStatus dd_simulate_constant_rate(const struct DdModel *model,
                                        double rate,
                                        double x0,
                                        double c0,
                                        double dt,
                                        double horizon,
                                        size_t n_paths,
                                        uint64_t seed,
                                        bool antithetic,
                                        bool bridge,
                                        struct DdSimOutcome *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIVDRAW_H */
