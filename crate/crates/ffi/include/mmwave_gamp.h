#ifndef MMWAVE_GAMP_H
#define MMWAVE_GAMP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MgStatus {
  MG_STATUS_OK = 0,
  MG_STATUS_NULL_POINTER = 1,
  MG_STATUS_SHAPE = 2,
  MG_STATUS_DOMAIN = 3,
  MG_STATUS_DIVERGED = 4,
  MG_STATUS_SINGULAR = 5,
  MG_STATUS_NUMERICAL = 6,
  MG_STATUS_DEGENERATE_CHANNEL = 7,
  MG_STATUS_CONFIG = 8,
  MG_STATUS_IO = 9,
  MG_STATUS_PANIC = 10,
} MgStatus;

/**
 * Opaque linear operator.
 */
typedef struct MgOperator MgOperator;

/**
 * Opaque solver settings.
 */
typedef struct MgSolver MgSolver;

/**
 * Summary of an EM-GAMP run.
 */
typedef struct MgRunInfo {
  size_t iterations;
  /**
   * 1 when the stopping rule fired before the iteration cap.
   */
  int32_t converged;
  double b_hat;
  double noise_var;
} MgRunInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *mg_last_error_message(void);

/**
 * NUL-terminated library version.
 */
const char *mg_version(void);

/**
 * `exp(x²)·erfc(x)`.
 */
double mg_erfcx(double x);

/**
 * Posterior mean, variance and mean absolute value of `x ~ Laplace(b)`
 * observed as `r = x + N(0, mu_r)`. Any output pointer may be null.
 *
 * # Safety
 * Non-null output pointers must be valid for a write of one `double`.
 */
enum MgStatus mg_laplace_posterior(double r,
                                   double mu_r,
                                   double b,
                                   double *mean,
                                   double *variance,
                                   double *abs_mean);

/**
 * Real-lifted operator for complex pilots `B` (`mt × k`, column-major, split
 * into real and imaginary planes) and `mr` receive antennas. Rows:
 * `2·mr·k`, columns: `2·mr·mt`.
 *
 * # Safety
 * `pilot_re` and `pilot_im` must point to `mt·k` doubles; `out` must be a
 * valid pointer to a handle slot.
 */
enum MgStatus mg_operator_new_lifted(size_t mt,
                                     size_t k,
                                     size_t mr,
                                     const double *pilot_re,
                                     const double *pilot_im,
                                     struct MgOperator **out);

/**
 * Dense real operator from a column-major `rows × cols` array.
 *
 * # Safety
 * `data` must point to `rows·cols` doubles; `out` must be a valid pointer.
 */
enum MgStatus mg_operator_new_dense(size_t rows,
                                    size_t cols,
                                    const double *data,
                                    struct MgOperator **out);

/**
 * # Safety
 * `op` must be null or a handle from an `mg_operator_new_*` call.
 */
void mg_operator_free(struct MgOperator *op);

/**
 * # Safety
 * `op` must be a live handle.
 */
size_t mg_operator_rows(const struct MgOperator *op);

/**
 * # Safety
 * `op` must be a live handle.
 */
size_t mg_operator_cols(const struct MgOperator *op);

/**
 * `y = A x`.
 *
 * # Safety
 * `x` must hold `x_len` doubles and `y` must have room for `y_len`.
 */
enum MgStatus mg_operator_apply(const struct MgOperator *op,
                                const double *x,
                                size_t x_len,
                                double *y,
                                size_t y_len);

/**
 * `x = Aᵀ y`.
 *
 * # Safety
 * `y` must hold `y_len` doubles and `x` must have room for `x_len`.
 */
enum MgStatus mg_operator_apply_adjoint(const struct MgOperator *op,
                                        const double *y,
                                        size_t y_len,
                                        double *x,
                                        size_t x_len);

/**
 * Solver with default settings (tolerance 1e-6, 50 iterations, no damping,
 * one EM step per iteration).
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum MgStatus mg_solver_new(struct MgSolver **out);

/**
 * # Safety
 * `solver` must be null or a handle from [`mg_solver_new`].
 */
void mg_solver_free(struct MgSolver *solver);

/**
 * Sets the GAMP stopping tolerance, iteration cap and damping factor.
 *
 * # Safety
 * `solver` must be a live handle.
 */
enum MgStatus mg_solver_set_gamp(struct MgSolver *solver,
                                 double tolerance,
                                 size_t max_iters,
                                 double damping);

/**
 * Sets the EM tolerance, inner iteration count, initial SNR guess (linear)
 * and initial Laplace scale.
 *
 * # Safety
 * `solver` must be a live handle.
 */
enum MgStatus mg_solver_set_em(struct MgSolver *solver,
                               double tolerance,
                               size_t max_inner_iters,
                               double snr0,
                               double b0);

/**
 * EM-GAMP with a Laplacian prior. Writes the posterior mean into `x_hat`
 * and, when `info` is non-null, a run summary.
 *
 * # Safety
 * `y` must hold `y_len` doubles, `x_hat` must have room for `x_len`, and
 * `info` must be null or valid for one write.
 */
enum MgStatus mg_solver_run_laplace(const struct MgSolver *solver,
                                    const struct MgOperator *op,
                                    const double *y,
                                    size_t y_len,
                                    double *x_hat,
                                    size_t x_len,
                                    struct MgRunInfo *info);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMWAVE_GAMP_H */
