/* Generated by cbindgen from crates/ffi. Do not edit. */

#ifndef GRIDPLAN_H
#define GRIDPLAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum GpStatus {
  GP_STATUS_OK = 0,
  GP_STATUS_NULL_POINTER = 1,
  GP_STATUS_INVALID_ARGUMENT = 2,
  GP_STATUS_IO = 3,
  GP_STATUS_PARSE = 4,
  GP_STATUS_INVALID_FEEDER = 5,
  GP_STATUS_DOMAIN = 6,
  GP_STATUS_NON_CONVERGENCE = 7,
  GP_STATUS_NOT_FOUND = 8,
  GP_STATUS_CONFIG = 9,
  GP_STATUS_PIPELINE = 10,
  GP_STATUS_PARTIAL = 11,
  GP_STATUS_PANIC = 12,
} GpStatus;

/**
 * A validated feeder model.
 */
typedef struct GpFeeder GpFeeder;

/**
 * The outcome of a finished pipeline run.
 */
typedef struct GpRun GpRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the
 * library and valid until the next call on the same thread.
 */
const char *gp_last_error(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void gp_string_free(char *s);

/**
 * Loads and validates a feeder JSON file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a writable pointer.
 */
enum GpStatus gp_feeder_load(const char *path, struct GpFeeder **out);

/**
 * Replaces lumped transformer loads by individual customers.
 *
 * # Safety
 * `feeder` must be a live handle and `out` a writable pointer.
 */
enum GpStatus gp_feeder_disaggregate(const struct GpFeeder *feeder,
                                     double houses_per_kva,
                                     struct GpFeeder **out);

/**
 * Releases a feeder. Null is ignored.
 *
 * # Safety
 * `feeder` must come from this library and not be freed twice.
 */
void gp_feeder_free(struct GpFeeder *feeder);

/**
 * Bus, transformer and customer counts.
 *
 * # Safety
 * `feeder` must be a live handle; each out pointer may be null.
 */
enum GpStatus gp_feeder_counts(const struct GpFeeder *feeder,
                               size_t *buses,
                               size_t *transformers,
                               size_t *customers);

/**
 * Longest source-to-bus path, in lines.
 *
 * # Safety
 * `feeder` must be a live handle and `out` writable.
 */
enum GpStatus gp_feeder_max_depth(const struct GpFeeder *feeder, size_t *out);

/**
 * Id of transformer `index` in feeder order, as a new string.
 *
 * # Safety
 * `feeder` must be a live handle and `out` writable.
 */
enum GpStatus gp_feeder_transformer_id(const struct GpFeeder *feeder, size_t index, char **out);

/**
 * Probability that a customer has adopted by year `t`: `1 - (1 - p)^t`.
 *
 * # Safety
 * `out` must be writable.
 */
enum GpStatus gp_adoption_probability(double p, int64_t t, double *out);

/**
 * Solves one hour with default power-flow settings.
 *
 * `customer_ids`, `p_kw` and `q_kvar` have `count` entries each. Customers
 * not listed draw nothing. `loading_kva` receives one value per transformer
 * in feeder order and must hold `loading_len` entries, at least the
 * transformer count. `balance_error` (nullable) receives the relative
 * power-balance mismatch.
 *
 * # Safety
 * All arrays must be valid for the stated lengths.
 */
enum GpStatus gp_solve_snapshot(const struct GpFeeder *feeder,
                                const char *const *customer_ids,
                                const double *p_kw,
                                const double *q_kvar,
                                size_t count,
                                double *loading_kva,
                                size_t loading_len,
                                double *balance_error);

/**
 * Runs (or resumes) the full pipeline from a TOML config file.
 *
 * `out` receives the run even when some jobs failed, in which case the
 * status is `GP_STATUS_PARTIAL`.
 *
 * # Safety
 * `config_path` must be a nul-terminated string and `out` writable.
 */
enum GpStatus gp_run_pipeline(const char *config_path, struct GpRun **out);

/**
 * Total, completed and failed job counts; out pointers may be null.
 *
 * # Safety
 * `run` must be a live handle.
 */
enum GpStatus gp_run_counts(const struct GpRun *run,
                            size_t *total,
                            size_t *completed,
                            size_t *failed);

/**
 * Wall-clock seconds of the invocation that produced `run`.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum GpStatus gp_run_wall_seconds(const struct GpRun *run, double *out);

/**
 * Run id as a new string.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum GpStatus gp_run_id(const struct GpRun *run, char **out);

/**
 * Releases a run. Null is ignored.
 *
 * # Safety
 * `run` must come from this library and not be freed twice.
 */
void gp_run_free(struct GpRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDPLAN_H */
