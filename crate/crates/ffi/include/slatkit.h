#ifndef SLATKIT_H
#define SLATKIT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SlatStatus {
  SLAT_STATUS_OK = 0,
  SLAT_STATUS_NULL_POINTER = 1,
  SLAT_STATUS_INVALID_ARGUMENT = 2,
  SLAT_STATUS_SOLVER_FAILURE = 3,
  SLAT_STATUS_INTERNAL = 4,
} SlatStatus;

typedef enum SlatLocateMethod {
  SLAT_LOCATE_METHOD_SLCP = 0,
  SLAT_LOCATE_METHOD_SLL1 = 1,
} SlatLocateMethod;

/**
 * Refined positions, sensors first.
 */
typedef struct SlatEstimateHandle SlatEstimateHandle;

/**
 * Range measurements of one scenario.
 */
typedef struct SlatRanges SlatRanges;

/**
 * Anchors, sensors and targets.
 */
typedef struct SlatScenario SlatScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next failing call.
 */
const char *slat_last_error(void);

/**
 * Random scenario in the square `[lo, hi]²`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle pointer.
 */
enum SlatStatus slat_scenario_generate(size_t n_anchors,
                                       size_t n_sensors,
                                       size_t n_targets,
                                       double lo,
                                       double hi,
                                       uint64_t seed,
                                       struct SlatScenario **out);

/**
 * Scenario from point arrays of `2 * count` interleaved `x, y` values.
 *
 * # Safety
 * Each array must hold `2 * count` readable doubles; null is allowed for a zero count.
 */
enum SlatStatus slat_scenario_new(const double *anchors,
                                  size_t n_anchors,
                                  const double *sensors,
                                  size_t n_sensors,
                                  const double *targets,
                                  size_t n_targets,
                                  struct SlatScenario **out);

/**
 * # Safety
 * `s` must be null or a handle from this library not yet freed.
 */
void slat_scenario_free(struct SlatScenario *s);

/**
 * # Safety
 * `s` must be a live handle; the count pointers may be null.
 */
enum SlatStatus slat_scenario_counts(const struct SlatScenario *s,
                                     size_t *n_anchors,
                                     size_t *n_sensors,
                                     size_t *n_targets);

/**
 * Noisy ranges for every sensor-target and anchor-target pair.
 * `noise` uses the CLI grammar, e.g. `"gaussian:0.01"`.
 *
 * # Safety
 * `s` must be a live handle, `noise` a NUL-terminated string, `out` writable.
 */
enum SlatStatus slat_ranges_synthesize(const struct SlatScenario *s,
                                       const char *noise,
                                       uint64_t seed,
                                       struct SlatRanges **out);

/**
 * Exact ranges of the scenario.
 *
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum SlatStatus slat_ranges_exact(const struct SlatScenario *s, struct SlatRanges **out);

/**
 * # Safety
 * `r` must be null or a handle from this library not yet freed.
 */
void slat_ranges_free(struct SlatRanges *r);

/**
 * Batch estimation; `method` is e.g. `"edm-r+mm"` or `"edm-r-l1+wmm"`.
 *
 * # Safety
 * Handles must be live, `method` NUL-terminated, `out` writable.
 */
enum SlatStatus slat_batch_run(const struct SlatScenario *s,
                               const struct SlatRanges *r,
                               const char *method,
                               struct SlatEstimateHandle **out);

/**
 * # Safety
 * `e` must be null or a handle from this library not yet freed.
 */
void slat_estimate_free(struct SlatEstimateHandle *e);

/**
 * Number of estimated points (sensors then targets); 0 for a null handle.
 *
 * # Safety
 * `e` must be null or a live handle.
 */
size_t slat_estimate_num_points(const struct SlatEstimateHandle *e);

/**
 * Copies `2 * num_points` interleaved coordinates into `buf`.
 *
 * # Safety
 * `e` must be a live handle and `buf` must hold `len` writable doubles.
 */
enum SlatStatus slat_estimate_coords(const struct SlatEstimateHandle *e, double *buf, size_t len);

/**
 * Initial and final refinement cost.
 *
 * # Safety
 * `e` must be a live handle; output pointers may be null.
 */
enum SlatStatus slat_estimate_costs(const struct SlatEstimateHandle *e,
                                    double *initial,
                                    double *final_);

/**
 * Single-source position from `n` stations `(x[i], y[i])` with ranges `d[i]`.
 * `sigma` is the SLℓ1 projector constant and is ignored by SLCP.
 *
 * # Safety
 * `x`, `y`, `d` must hold `n` readable doubles; `out_xy` must hold 2 writable doubles;
 * `rank1_ratio` may be null.
 */
enum SlatStatus slat_locate(const double *x,
                            const double *y,
                            const double *d,
                            size_t n,
                            enum SlatLocateMethod method,
                            double sigma,
                            double *out_xy,
                            double *rank1_ratio);

/**
 * Total Cramér-Rao bound of the scenario for Gaussian range noise `sigma`.
 *
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum SlatStatus slat_crlb(const struct SlatScenario *s, double sigma, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLATKIT_H */
