#ifndef RDD_FFI_H
#define RDD_FFI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RddStatus {
  RDD_STATUS_OK = 0,
  RDD_STATUS_NULL_POINTER = 1,
  RDD_STATUS_INVALID_ARGUMENT = 2,
  RDD_STATUS_IO = 3,
  RDD_STATUS_FORMAT = 4,
  RDD_STATUS_NUMERICAL = 5,
  RDD_STATUS_DOMAIN = 6,
  RDD_STATUS_PANIC = 7,
} RddStatus;

/**
 * Opaque handle to a trained diffusion model.
 */
typedef struct RddModel RddModel;

/**
 * Opaque handle to a boosted-tree surrogate.
 */
typedef struct RddSurrogate RddSurrogate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *rdd_last_error(void);

/**
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum RddStatus rdd_model_load(const char *path, struct RddModel **out);

/**
 * Design dimension of `model`, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t rdd_model_dim(const struct RddModel *model);

/**
 * Draws `n` unguided designs into `out` (row-major, `n * dim` values).
 *
 * # Safety
 * `model` must be a live handle and `out` must hold `out_len` doubles.
 */
enum RddStatus rdd_model_sample(const struct RddModel *model,
                                size_t n,
                                uint64_t seed,
                                double *out,
                                size_t out_len);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void rdd_model_free(struct RddModel *model);

/**
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum RddStatus rdd_surrogate_load(const char *path, struct RddSurrogate **out);

/**
 * Predicts `n_rows` rows of width `dim` from `x` into `out`.
 *
 * # Safety
 * `x` must hold `n_rows * dim` doubles and `out` `n_rows` doubles.
 */
enum RddStatus rdd_surrogate_predict(const struct RddSurrogate *surrogate,
                                     const double *x,
                                     size_t n_rows,
                                     size_t dim,
                                     double *out);

/**
 * # Safety
 * `surrogate` must be null or a handle not yet freed.
 */
void rdd_surrogate_free(struct RddSurrogate *surrogate);

/**
 * Friction coefficient of the ITTC-style line at Reynolds number `re`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RddStatus rdd_friction_coefficient(double re, double *out);

/**
 * Aggregate resistance (N) of the hull with six shape parameters `params`
 * scaled to length `loa`, with default fluid constants and quadrature.
 *
 * # Safety
 * `params` must hold 6 doubles and `out` be a valid pointer.
 */
enum RddStatus rdd_hull_resistance(const double *params, double loa, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RDD_FFI_H */
