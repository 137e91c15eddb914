/* Copyright 2026 The spinreg Contributors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef SPINREG_H
#define SPINREG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpinregStatus {
  SPINREG_STATUS_OK = 0,
  SPINREG_STATUS_NULL_POINTER = 1,
  SPINREG_STATUS_INVALID_ARGUMENT = 2,
  SPINREG_STATUS_INSUFFICIENT_ATOMS = 3,
  SPINREG_STATUS_PLANNING_STALLED = 4,
  SPINREG_STATUS_INVALID_PLAN = 5,
  SPINREG_STATUS_PANIC = 255,
} SpinregStatus;

/**
 * Trap geometry.
 */
typedef struct SpinregArray SpinregArray;

/**
 * Hologram phase mask.
 */
typedef struct SpinregMask SpinregMask;

/**
 * Per-site occupancy of an array.
 */
typedef struct SpinregOccupancy SpinregOccupancy;

/**
 * Ordered rearrangement moves.
 */
typedef struct SpinregPlan SpinregPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Owned by the
 * library; valid until the next failing call on the same thread.
 */
const char *spinreg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *spinreg_version(void);

/**
 * Rectangular `rows` x `cols` array with `pitch_um` spacing.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SpinregStatus spinreg_array_new(size_t rows,
                                     size_t cols,
                                     double pitch_um,
                                     struct SpinregArray **out);

/**
 * Number of sites, or 0 for a null handle.
 *
 * # Safety
 * `array` must be null or a live handle from [`spinreg_array_new`].
 */
size_t spinreg_array_len(const struct SpinregArray *array);

/**
 * # Safety
 * `array` must be null or a live handle; it is invalid afterwards.
 */
void spinreg_array_free(struct SpinregArray *array);

/**
 * Independent fill of every site with probability `p_fill`.
 *
 * # Safety
 * `array` must be a live handle and `out` valid for one write.
 */
enum SpinregStatus spinreg_occupancy_sample(const struct SpinregArray *array,
                                            double p_fill,
                                            uint64_t seed,
                                            struct SpinregOccupancy **out);

/**
 * Occupancy from one byte per site in row-major order (non-zero = atom).
 *
 * # Safety
 * `bits` must point to `len` readable bytes; `array` must be live and `out`
 * valid for one write.
 */
enum SpinregStatus spinreg_occupancy_from_bits(const struct SpinregArray *array,
                                               const uint8_t *bits,
                                               size_t len,
                                               struct SpinregOccupancy **out);

/**
 * Number of occupied sites, or 0 for a null handle.
 *
 * # Safety
 * `occ` must be null or a live handle.
 */
size_t spinreg_occupancy_count(const struct SpinregOccupancy *occ);

/**
 * Whether `site` holds an atom; false when out of range.
 *
 * # Safety
 * `occ` must be null or a live handle.
 */
bool spinreg_occupancy_get(const struct SpinregOccupancy *occ, size_t site);

/**
 * # Safety
 * `occ` must be null or a live handle; it is invalid afterwards.
 */
void spinreg_occupancy_free(struct SpinregOccupancy *occ);

/**
 * Plans moves filling a centred `reg_rows` x `reg_cols` block.
 *
 * # Safety
 * `array` and `occ` must be live handles and `out` valid for one write.
 */
enum SpinregStatus spinreg_plan_moves(const struct SpinregArray *array,
                                      const struct SpinregOccupancy *occ,
                                      size_t reg_rows,
                                      size_t reg_cols,
                                      struct SpinregPlan **out);

/**
 * Number of moves, or 0 for a null handle.
 *
 * # Safety
 * `plan` must be null or a live handle.
 */
size_t spinreg_plan_len(const struct SpinregPlan *plan);

/**
 * Reads move `index` as source site, destination site and parking flag.
 *
 * # Safety
 * `plan` must be a live handle; the out pointers must be valid for writes.
 */
enum SpinregStatus spinreg_plan_move(const struct SpinregPlan *plan,
                                     size_t index,
                                     size_t *from,
                                     size_t *to,
                                     bool *is_parking);

/**
 * Runs the plan with the given per-move loss probabilities and returns the
 * resulting occupancy. The plan is validated first.
 *
 * # Safety
 * All handles must be live and `out` valid for one write.
 */
enum SpinregStatus spinreg_plan_execute(const struct SpinregArray *array,
                                        const struct SpinregOccupancy *occ,
                                        const struct SpinregPlan *plan,
                                        double p_pickup,
                                        double p_transit_per_site,
                                        double p_dropoff,
                                        uint64_t seed,
                                        struct SpinregOccupancy **out);

/**
 * # Safety
 * `plan` must be null or a live handle; it is invalid afterwards.
 */
void spinreg_plan_free(struct SpinregPlan *plan);

/**
 * Weighted Gerchberg-Saxton mask for a `rows` x `cols` spot grid with
 * `spacing` focal pixels between spots. Writes the final uniformity.
 *
 * # Safety
 * `out` and `uniformity` must be valid for one write each.
 */
enum SpinregStatus spinreg_wgs(size_t rows,
                               size_t cols,
                               size_t spacing,
                               size_t grid_size,
                               size_t iterations,
                               uint64_t seed,
                               struct SpinregMask **out,
                               double *uniformity);

/**
 * Side length of the mask, or 0 for a null handle.
 *
 * # Safety
 * `mask` must be null or a live handle.
 */
size_t spinreg_mask_grid_size(const struct SpinregMask *mask);

/**
 * Copies the row-major phases (radians) into `buf`, which must hold
 * `grid_size * grid_size` values.
 *
 * # Safety
 * `mask` must be live and `buf` valid for `len` writes.
 */
enum SpinregStatus spinreg_mask_phases(const struct SpinregMask *mask, double *buf, size_t len);

/**
 * # Safety
 * `mask` must be null or a live handle; it is invalid afterwards.
 */
void spinreg_mask_free(struct SpinregMask *mask);

/**
 * Wilson score interval for `k` successes in `n` trials.
 *
 * # Safety
 * `lo` and `hi` must be valid for one write each.
 */
enum SpinregStatus spinreg_wilson_interval(uint64_t k,
                                           uint64_t n,
                                           double z,
                                           double *lo,
                                           double *hi);

/**
 * `(m - p) / (1 - p - q)` clamped to `[0, 1]`; `clamped` reports clamping.
 *
 * # Safety
 * `value` and `clamped` must be valid for one write each.
 */
enum SpinregStatus spinreg_povm_correct(double m, double p, double q, double *value, bool *clamped);

/**
 * `|up>` population after driving `|down>` on the two-level qubit.
 *
 * # Safety
 * `p_up` must be valid for one write.
 */
enum SpinregStatus spinreg_rabi_population(double rabi_hz,
                                           double detuning_hz,
                                           double duration_s,
                                           double *p_up);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPINREG_H */
