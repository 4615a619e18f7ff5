#ifndef SEMCAND_H
#define SEMCAND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SemcandStatus {
  SEMCAND_STATUS_OK = 0,
  SEMCAND_STATUS_NULL_POINTER = 1,
  SEMCAND_STATUS_INVALID_UTF8 = 2,
  /**
   * Snapshot missing, unreadable, corrupt or of another version.
   */
  SEMCAND_STATUS_SNAPSHOT = 3,
  SEMCAND_STATUS_UNKNOWN_SEED = 4,
  SEMCAND_STATUS_INVALID_ARGUMENT = 5,
  SEMCAND_STATUS_BASELINE_UNAVAILABLE = 6,
  SEMCAND_STATUS_EMPTY_INDEX = 7,
  /**
   * The metric has no defined value for this input.
   */
  SEMCAND_STATUS_UNDEFINED = 8,
  SEMCAND_STATUS_INTERNAL = 98,
  SEMCAND_STATUS_PANIC = 99,
} SemcandStatus;

/**
 * Result of one retrieval, in rank order.
 */
typedef struct SemcandCandidates SemcandCandidates;

/**
 * Loaded snapshot. Safe to share between threads for retrieval.
 */
typedef struct SemcandEngine SemcandEngine;

typedef struct SemcandScore {
  double final_score;
  double stage1_score;
  double stage2_score;
  uint32_t hop_count;
} SemcandScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *semcand_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next semcand call on the same thread.
 */
const char *semcand_last_error(void);

/**
 * Opens a snapshot file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SemcandStatus semcand_engine_open(const char *path, struct SemcandEngine **out);

/**
 * Releases an engine. NULL is ignored.
 *
 * # Safety
 * `engine` must come from [`semcand_engine_open`] and not be used afterwards.
 */
void semcand_engine_free(struct SemcandEngine *engine);

/**
 * # Safety
 * `engine` must be a live handle; `out` must be writable.
 */
enum SemcandStatus semcand_engine_ad_count(const struct SemcandEngine *engine, size_t *out);

/**
 * Hex content hash of the snapshot. Free with [`semcand_string_free`].
 *
 * # Safety
 * `engine` must be a live handle; `out` must be writable.
 */
enum SemcandStatus semcand_engine_snapshot_hash(const struct SemcandEngine *engine, char **out);

/**
 * Top-`k` candidates for `seed_id`. `baseline` selects the title-overlap
 * retriever.
 *
 * # Safety
 * `engine` must be a live handle, `seed_id` NUL-terminated, `out` writable.
 */
enum SemcandStatus semcand_retrieve(const struct SemcandEngine *engine,
                                    const char *seed_id,
                                    size_t k,
                                    bool baseline,
                                    struct SemcandCandidates **out);

/**
 * Same as [`semcand_retrieve`] but returns the ranked list as JSON. Free
 * with [`semcand_string_free`].
 *
 * # Safety
 * `engine` must be a live handle, `seed_id` NUL-terminated, `out` writable.
 */
enum SemcandStatus semcand_retrieve_json(const struct SemcandEngine *engine,
                                         const char *seed_id,
                                         size_t k,
                                         bool baseline,
                                         char **out);

/**
 * Number of candidates; 0 for NULL.
 *
 * # Safety
 * `c` must be NULL or a live handle.
 */
size_t semcand_candidates_len(const struct SemcandCandidates *c);

/**
 * Ad id at rank `i`, or NULL when out of range. Borrowed from `c`.
 *
 * # Safety
 * `c` must be NULL or a live handle.
 */
const char *semcand_candidates_ad_id(const struct SemcandCandidates *c, size_t i);

/**
 * # Safety
 * `c` must be a live handle; `out` must be writable.
 */
enum SemcandStatus semcand_candidates_score(const struct SemcandCandidates *c,
                                            size_t i,
                                            struct SemcandScore *out);

/**
 * # Safety
 * `c` must come from [`semcand_retrieve`] and not be used afterwards.
 */
void semcand_candidates_free(struct SemcandCandidates *c);

/**
 * # Safety
 * `s` must be NULL or a string handed out by this library.
 */
void semcand_string_free(char *s);

/**
 * Significance exceedance for one pair. `Undefined` when both counts are 0.
 *
 * # Safety
 * `out` must be writable.
 */
enum SemcandStatus semcand_stat_sig_diff_pair(uint64_t conv_p, uint64_t conv_s, double *out);

/**
 * Revenue-weighted mean of per-pair values (weights sqrt(revenue)).
 *
 * # Safety
 * `values` and `revenues` must each point to `n` doubles; `out` writable.
 */
enum SemcandStatus semcand_aggregate_stat_sig_diff(const double *values,
                                                   const double *revenues,
                                                   size_t n,
                                                   double *out);

/**
 * Median absolute deviation of `n` values.
 *
 * # Safety
 * `series` must point to `n` doubles; `out` must be writable.
 */
enum SemcandStatus semcand_mad(const double *series, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMCAND_H */
