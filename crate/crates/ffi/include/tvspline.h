#ifndef TVSPLINE_H
#define TVSPLINE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TvsStatus {
  TVS_STATUS_OK = 0,
  TVS_STATUS_NULL_POINTER = 1,
  TVS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A result was produced but the solver hit its iteration limit.
   */
  TVS_STATUS_NOT_CONVERGED = 3,
  TVS_STATUS_PANIC = 4,
} TvsStatus;

typedef enum TvsSolver {
  TVS_SOLVER_ADMM = 0,
  TVS_SOLVER_FRANK_WOLFE = 1,
} TvsSolver;

/**
 * Mean and positive-frequency Fourier coefficients of a real signal.
 */
typedef struct TvsMeasurements TvsMeasurements;

/**
 * A reconstructed periodic spline.
 */
typedef struct TvsSpline TvsSpline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library from the same thread.
 */
const char *tvs_last_error(void);

/**
 * Builds measurements from `cutoff` coefficients for `k = 1..=cutoff`.
 *
 * # Safety
 * `re` and `im` must point to `cutoff` readable doubles; `out` must be
 * writable.
 */
enum TvsStatus tvs_measurements_new(double mean,
                                    const double *re,
                                    const double *im,
                                    size_t cutoff,
                                    struct TvsMeasurements **out);

/**
 * # Safety
 * `m` must be null or a handle from [`tvs_measurements_new`] not yet freed.
 */
void tvs_measurements_free(struct TvsMeasurements *m);

/**
 * Solves the regularized problem. `grid_points` is the ADMM grid size and,
 * for Frank-Wolfe, only sets the knot merge distance. On `NotConverged`
 * the last iterate is still returned in `out`.
 *
 * # Safety
 * `y` must be a live measurement handle; `out` must be writable.
 */
enum TvsStatus tvs_reconstruct(const struct TvsMeasurements *y,
                               uint32_t order,
                               size_t grid_points,
                               double lambda,
                               enum TvsSolver solver,
                               struct TvsSpline **out);

/**
 * # Safety
 * `s` must be null or a spline handle not yet freed.
 */
void tvs_spline_free(struct TvsSpline *s);

/**
 * Evaluates the spline at `n` points.
 *
 * # Safety
 * `s` must be live; `xs` and `values` must hold `n` doubles.
 */
enum TvsStatus tvs_spline_eval(const struct TvsSpline *s,
                               const double *xs,
                               size_t n,
                               double *values);

/**
 * Writes mean, order and knot count of the spline. Any output may be null.
 *
 * # Safety
 * `s` must be live.
 */
enum TvsStatus tvs_spline_info(const struct TvsSpline *s,
                               double *mean,
                               uint32_t *order,
                               size_t *n_knots);

/**
 * Copies knot locations and jump amplitudes into buffers of `capacity`
 * entries. Fails with `InvalidArgument` if the buffers are too small;
 * query the count with [`tvs_spline_info`] first.
 *
 * # Safety
 * `s` must be live; `knots` and `amplitudes` must hold `capacity` doubles.
 */
enum TvsStatus tvs_spline_knots(const struct TvsSpline *s,
                                double *knots,
                                double *amplitudes,
                                size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TVSPLINE_H */
