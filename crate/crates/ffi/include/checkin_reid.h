#ifndef CHECKIN_REID_H
#define CHECKIN_REID_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 2..=4 match the CLI exit codes.
 */
typedef enum CrStatus {
  CR_STATUS_OK = 0,
  CR_STATUS_NULL_POINTER = 1,
  CR_STATUS_INVALID_INPUT = 2,
  CR_STATUS_INFEASIBLE = 3,
  CR_STATUS_IO = 4,
  CR_STATUS_PANIC = 5,
} CrStatus;

/**
 * Opaque dataset handle.
 */
typedef struct CrDataset CrDataset;

/**
 * Opaque attack result handle.
 */
typedef struct CrResult CrResult;

typedef struct CrDatasetStats {
  uint64_t checkins;
  uint64_t users;
  uint64_t venues;
  /**
   * Users per venue; NaN for a dataset without venues.
   */
  double users_per_venue;
} CrDatasetStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *cr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cr_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed at most once.
 */
void cr_string_free(char *s);

/**
 * Reads a dataset directory (check-ins, venues, lineage) written by the CLI.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CrStatus cr_dataset_read_dir(const char *path, struct CrDataset **out);

/**
 * # Safety
 * `ds` must be a valid handle; `path` a NUL-terminated string.
 */
enum CrStatus cr_dataset_write_dir(const struct CrDataset *ds, const char *path);

/**
 * Generates a synthetic dataset. `spec_json` is a JSON object with any
 * subset of the synthesis parameters; null uses the defaults.
 *
 * # Safety
 * `spec_json` must be null or NUL-terminated; `out` must be writable.
 */
enum CrStatus cr_synth_generate(const char *spec_json, struct CrDataset **out);

/**
 * # Safety
 * `ds` must be a valid handle and `out` writable.
 */
enum CrStatus cr_dataset_stats(const struct CrDataset *ds, struct CrDatasetStats *out);

/**
 * # Safety
 * `ds` must be null or a handle from this library, freed at most once.
 */
void cr_dataset_free(struct CrDataset *ds);

/**
 * Runs the repeated attack. `config_json` is a JSON object with any subset
 * of `alpha`, `repetitions`, `max_test_size`, `min_class_checkins`,
 * `base_seed` and `class_spec`; null uses the defaults.
 *
 * # Safety
 * `ds` must be a valid handle, `config_json` null or NUL-terminated, and
 * `out` writable.
 */
enum CrStatus cr_experiment_run(const struct CrDataset *ds,
                                const char *config_json,
                                struct CrResult **out);

/**
 * Number of evaluated test sizes (m = 1..=count).
 *
 * # Safety
 * `r` must be a valid handle and `out` writable.
 */
enum CrStatus cr_result_test_sizes(const struct CrResult *r, size_t *out);

/**
 * Eligible users (k) and class venues (|L|).
 *
 * # Safety
 * `r` must be a valid handle; output pointers writable.
 */
enum CrStatus cr_result_sizes(const struct CrResult *r, size_t *n_users, size_t *n_venues);

/**
 * Mean accuracy and its standard error at test size `m`.
 *
 * # Safety
 * `r` must be a valid handle; output pointers writable.
 */
enum CrStatus cr_result_accuracy(const struct CrResult *r, size_t m, double *mean, double *stderr);

/**
 * Full result as JSON; release with [`cr_string_free`].
 *
 * # Safety
 * `r` must be a valid handle and `out` writable.
 */
enum CrStatus cr_result_to_json(const struct CrResult *r, char **out);

/**
 * # Safety
 * `r` must be null or a handle from this library, freed at most once.
 */
void cr_result_free(struct CrResult *r);

/**
 * Great-circle distance in metres between two points in degrees.
 */
double cr_haversine(double lat1, double lon1, double lat2, double lon2);

/**
 * Shannon entropy in bits of a count histogram.
 *
 * # Safety
 * `counts` must point to `n` values; `out` must be writable.
 */
enum CrStatus cr_entropy_bits(const uint64_t *counts, size_t n, double *out);

/**
 * Pearson correlation and two-sided p-value. Below five pairs the p-value
 * comes from a seeded permutation test.
 *
 * # Safety
 * `xs` and `ys` must point to `n` values; `r` and `p_value` writable.
 */
enum CrStatus cr_pearson(const double *xs,
                         const double *ys,
                         size_t n,
                         uint64_t seed,
                         double *r,
                         double *p_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHECKIN_REID_H */
