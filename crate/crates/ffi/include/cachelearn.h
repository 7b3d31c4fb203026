#ifndef CACHELEARN_H
#define CACHELEARN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum ClStatus {
  CL_STATUS_OK = 0,
  CL_STATUS_NULL_POINTER = 1,
  CL_STATUS_INVALID_ARGUMENT = 2,
  CL_STATUS_CONFIG = 3,
  CL_STATUS_RUNTIME = 4,
  CL_STATUS_IO = 5,
  CL_STATUS_UTF8 = 6,
  CL_STATUS_BUFFER_TOO_SMALL = 7,
  CL_STATUS_PANIC = 8,
} ClStatus;

/**
 * Parsed and validated experiment configuration.
 */
typedef struct ClConfig ClConfig;

/**
 * Single-cache environment driven step by step from C.
 */
typedef struct ClEnv ClEnv;

/**
 * Cost trace of one seed.
 */
typedef struct ClRecord ClRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next `cl_*` call on the same thread.
 */
const char *cl_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cl_version(void);

/**
 * Loads and validates a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ClStatus cl_config_load(const char *path, struct ClConfig **out);

/**
 * Parses and validates a TOML configuration held in memory.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum ClStatus cl_config_parse(const char *toml, struct ClConfig **out);

/**
 * # Safety
 * `cfg` must come from `cl_config_load` / `cl_config_parse` and not be used
 * afterwards. Null is ignored.
 */
void cl_config_free(struct ClConfig *cfg);

/**
 * Number of configured seeds.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum ClStatus cl_config_seed_count(const struct ClConfig *cfg, uintptr_t *out);

/**
 * Copies the configured seeds into `seeds` (capacity `len`).
 *
 * # Safety
 * `cfg` must be a live handle; `seeds` must hold `len` values.
 */
enum ClStatus cl_config_seeds(const struct ClConfig *cfg, uint64_t *seeds, uintptr_t len);

/**
 * Runs the configured scenario for one seed.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum ClStatus cl_run_seed(const struct ClConfig *cfg, uint64_t seed, struct ClRecord **out);

/**
 * # Safety
 * `rec` must come from `cl_run_seed` and not be used afterwards. Null is
 * ignored.
 */
void cl_record_free(struct ClRecord *rec);

/**
 * Number of steps in the trace.
 *
 * # Safety
 * `rec` must be a live handle; `out` must be writable.
 */
enum ClStatus cl_record_steps(const struct ClRecord *rec, uintptr_t *out);

/**
 * Number of policy columns; column 0 is the primary policy.
 *
 * # Safety
 * `rec` must be a live handle; `out` must be writable.
 */
enum ClStatus cl_record_column_count(const struct ClRecord *rec, uintptr_t *out);

/**
 * Name of policy column `index`.
 *
 * # Safety
 * `rec` must be a live handle; `buf` must hold `len` bytes; `needed` may be
 * null.
 */
enum ClStatus cl_record_column_name(const struct ClRecord *rec,
                                    uintptr_t index,
                                    char *buf,
                                    uintptr_t len,
                                    uintptr_t *needed);

/**
 * Copies policy column `index` into `values`, which must hold at least
 * `cl_record_steps` entries.
 *
 * # Safety
 * `rec` must be a live handle; `values` must hold `len` doubles.
 */
enum ClStatus cl_record_column(const struct ClRecord *rec,
                               uintptr_t index,
                               double *values,
                               uintptr_t len);

/**
 * The trace in the harness CSV format.
 *
 * # Safety
 * `rec` must be a live handle; `buf` must hold `len` bytes; `needed` may be
 * null.
 */
enum ClStatus cl_record_csv(const struct ClRecord *rec,
                            char *buf,
                            uintptr_t len,
                            uintptr_t *needed);

/**
 * Optimal single-node policy for `seed` as JSON (values, policy, indexing).
 *
 * # Safety
 * `cfg` must be a live handle; `buf` must hold `len` bytes; `needed` may be
 * null.
 */
enum ClStatus cl_oracle_json(const struct ClConfig *cfg,
                             uint64_t seed,
                             char *buf,
                             uintptr_t len,
                             uintptr_t *needed);

/**
 * Single-cache environment of a single-node configuration.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum ClStatus cl_env_new(const struct ClConfig *cfg, uint64_t seed, struct ClEnv **out);

/**
 * # Safety
 * `env` must come from `cl_env_new` and not be used afterwards. Null is
 * ignored.
 */
void cl_env_free(struct ClEnv *env);

/**
 * File count and cache capacity.
 *
 * # Safety
 * `env` must be a live handle; `files` and `capacity` must be writable.
 */
enum ClStatus cl_env_dims(const struct ClEnv *env, uintptr_t *files, uintptr_t *capacity);

/**
 * Current chain indices and cache contents (`action` holds `files` bytes).
 *
 * # Safety
 * `env` must be a live handle; the out pointers must be writable and
 * `action` must hold `files` bytes.
 */
enum ClStatus cl_env_state(const struct ClEnv *env,
                           uintptr_t *global_idx,
                           uintptr_t *local_idx,
                           uint8_t *action,
                           uintptr_t files);

/**
 * Caches `action` (0/1 bytes, exactly `capacity` ones) for the next slot and
 * returns the slot's cost.
 *
 * # Safety
 * `env` must be a live handle; `action` must hold `files` bytes; `cost`
 * must be writable.
 */
enum ClStatus cl_env_step(struct ClEnv *env, const uint8_t *action, uintptr_t files, double *cost);

/**
 * Network cost `sum_f D_f (2 - a0_f)` of parent action `a0` given the
 * weighted leaf misses `misses`.
 *
 * # Safety
 * `misses` must hold `files` doubles and `a0` `files` bytes; `out` must be
 * writable.
 */
enum ClStatus cl_network_cost(const double *misses,
                              const uint8_t *a0,
                              uintptr_t files,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CACHELEARN_H */
