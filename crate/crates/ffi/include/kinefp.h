#ifndef KINEFP_H
#define KINEFP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which stored series `kfp_run_copy_field` reads.
 */
typedef enum KfpField {
  /**
   * Phase-space density, `nx^N · nv^N` values.
   */
  KFP_FIELD_DENSITY = 0,
  /**
   * `∫ p dv`, `nx^N` values.
   */
  KFP_FIELD_MARGINAL = 1,
  /**
   * TAF concentration, `nx^N` values.
   */
  KFP_FIELD_TAF = 2,
  /**
   * Speed-weighted flux, `nx^N` values.
   */
  KFP_FIELD_FLUX = 3,
} KfpField;

typedef enum KfpRunStatus {
  KFP_RUN_STATUS_CONVERGED = 0,
  KFP_RUN_STATUS_MAX_ITERATIONS = 1,
  KFP_RUN_STATUS_DIVERGED = 2,
} KfpRunStatus;

typedef enum KfpStatus {
  KFP_STATUS_OK = 0,
  KFP_STATUS_NULL_POINTER = 1,
  KFP_STATUS_INVALID_ARGUMENT = 2,
  KFP_STATUS_CONFIG = 3,
  KFP_STATUS_HYPOTHESIS = 4,
  KFP_STATUS_STABILITY = 5,
  KFP_STATUS_DIVERGENCE = 6,
  KFP_STATUS_NON_FINITE = 7,
  KFP_STATUS_IO = 8,
  KFP_STATUS_BUFFER_TOO_SMALL = 9,
  KFP_STATUS_PANIC = 10,
} KfpStatus;

/**
 * Parsed and validated run configuration.
 */
typedef struct KfpConfig KfpConfig;

/**
 * Finished run: every stored time of the final iterate.
 */
typedef struct KfpRun KfpRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next `kfp_*` call on the same thread.
 */
const char *kfp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *kfp_version(void);

/**
 * # Safety
 * `s` must come from a `kfp_*` function returning `char *`, or be NULL.
 */
void kfp_string_free(char *s);

/**
 * Parses a TOML configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum KfpStatus kfp_config_from_toml(const char *text, struct KfpConfig **out);

/**
 * # Safety
 * `cfg` must come from `kfp_config_from_toml` and not be used afterwards.
 */
void kfp_config_free(struct KfpConfig *cfg);

/**
 * Hex SHA-256 of the configuration; free with `kfp_string_free`.
 *
 * # Safety
 * `cfg` must be a live handle or NULL.
 */
char *kfp_config_hash(const struct KfpConfig *cfg);

/**
 * Overrides one numeric `model` or `grid` field by name.
 *
 * # Safety
 * `cfg` must be a live handle and `name` a NUL-terminated string.
 */
enum KfpStatus kfp_config_set(struct KfpConfig *cfg, const char *name, double value);

/**
 * Runs the coupled scheme. A run that stops without converging still
 * yields a handle; inspect it with `kfp_run_summary`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum KfpStatus kfp_run(const struct KfpConfig *cfg, struct KfpRun **out);

/**
 * # Safety
 * `run` must come from `kfp_run` and not be used afterwards.
 */
void kfp_run_free(struct KfpRun *run);

/**
 * # Safety
 * `run` must be a live handle; `status` and `iterations` writable.
 */
enum KfpStatus kfp_run_summary(const struct KfpRun *run,
                               enum KfpRunStatus *status,
                               size_t *iterations);

/**
 * Number of stored times (`nt + 1`), or 0 for a NULL handle.
 *
 * # Safety
 * `run` must be a live handle or NULL.
 */
size_t kfp_run_time_count(const struct KfpRun *run);

/**
 * Time and `‖p(t)‖₁` at stored index `n`.
 *
 * # Safety
 * `run` must be a live handle; `t` and `mass` writable.
 */
enum KfpStatus kfp_run_sample(const struct KfpRun *run, size_t n, double *t, double *mass);

/**
 * Number of values per stored time of `field`.
 *
 * # Safety
 * `run` must be a live handle or NULL.
 */
size_t kfp_run_field_len(const struct KfpRun *run, enum KfpField field);

/**
 * Copies `field` at stored index `n` into `buf` (row-major, x axes before
 * v axes). Fails with `BUFFER_TOO_SMALL` if `len` is short.
 *
 * # Safety
 * `run` must be a live handle and `buf` valid for `len` writes.
 */
enum KfpStatus kfp_run_copy_field(const struct KfpRun *run,
                                  enum KfpField field,
                                  size_t n,
                                  double *buf,
                                  size_t len);

/**
 * Transition density `G(t, x, v; tau, xi, nu)` of the free kinetic flow;
 * each point argument holds `dim` values.
 *
 * # Safety
 * The point arguments must be valid for `dim` reads; `out` writable.
 */
enum KfpStatus kfp_eval_kernel(double k,
                               double sigma,
                               size_t dim,
                               double t,
                               const double *x,
                               const double *v,
                               double tau,
                               const double *xi,
                               const double *nu,
                               double *out);

/**
 * Runs a verification suite by name; counts go to `passed` and `failed`.
 * Returns `OK` even when checks fail.
 *
 * # Safety
 * `suite` must be NUL-terminated; `passed` and `failed` writable.
 */
enum KfpStatus kfp_verify(const char *suite, size_t *passed, size_t *failed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KINEFP_H */
