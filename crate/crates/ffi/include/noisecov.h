#ifndef NOISECOV_H
#define NOISECOV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NcWindowKind {
  /**
   * `k` common observations on each side.
   */
  NC_WINDOW_KIND_INDEX = 0,
  /**
   * All common observations within `xi` years.
   */
  NC_WINDOW_KIND_TIME = 1,
} NcWindowKind;

typedef enum NcThresholdKind {
  NC_THRESHOLD_KIND_NONE = 0,
  NC_THRESHOLD_KIND_UNIVERSAL = 1,
  NC_THRESHOLD_KIND_ADAPTIVE = 2,
} NcThresholdKind;

/**
 * Result codes.
 */
typedef enum NcStatus {
  NC_STATUS_OK = 0,
  NC_STATUS_NULL_POINTER = 1,
  NC_STATUS_INVALID_ARGUMENT = 2,
  NC_STATUS_IO = 3,
  NC_STATUS_PARSE = 4,
  NC_STATUS_INVALID_PANEL = 5,
  NC_STATUS_ESTIMATION = 6,
  NC_STATUS_BUFFER_TOO_SMALL = 7,
  NC_STATUS_INTERNAL = 8,
} NcStatus;

/**
 * Result of an estimation run.
 */
typedef struct NcEstimate NcEstimate;

/**
 * An immutable observation panel.
 */
typedef struct NcPanel NcPanel;

/**
 * Accumulates observations before building a panel.
 */
typedef struct NcPanelBuilder NcPanelBuilder;

/**
 * Estimator settings. Start from [`nc_estimator_config_default`].
 */
typedef struct NcEstimatorConfig {
  enum NcWindowKind window;
  size_t k;
  double xi;
  enum NcThresholdKind threshold;
  /**
   * Universal β, or the fallback β of the adaptive rule.
   */
  double beta;
  bool diagonal_exempt;
} NcEstimatorConfig;

typedef struct NcPanelSummary {
  /**
   * Distinct observation ticks across all assets.
   */
  size_t n;
  /**
   * Smallest pairwise overlap (0 when some pair is disjoint).
   */
  size_t n_star;
  size_t n_pair_max;
  /**
   * Number of pairs with no common tick.
   */
  size_t empty_pairs;
} NcPanelSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL.
 *
 * The pointer stays valid until the next `nc_*` call on the same thread.
 */
const char *nc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nc_version(void);

/**
 * Quadratic spectral kernel weight at `x`.
 */
double nc_qs_kernel(double x);

struct NcEstimatorConfig nc_estimator_config_default(void);

/**
 * New empty builder, or NULL if `tick_duration` is not positive.
 */
struct NcPanelBuilder *nc_panel_builder_new(double tick_duration);

/**
 * Adds one observation. Order of calls does not matter.
 *
 * # Safety
 * `builder` must come from [`nc_panel_builder_new`]; `asset` must be a
 * NUL-terminated string.
 */
enum NcStatus nc_panel_builder_push(struct NcPanelBuilder *builder,
                                    const char *asset,
                                    uint64_t tick,
                                    double value);

/**
 * Consumes `builder` (even on failure) and writes the panel to `*out`.
 *
 * Assets are ordered by name. Duplicate `(asset, tick)` pairs are rejected.
 *
 * # Safety
 * `builder` must come from [`nc_panel_builder_new`] and not be used again;
 * `out` must be writable.
 */
enum NcStatus nc_panel_builder_build(struct NcPanelBuilder *builder, struct NcPanel **out);

/**
 * # Safety
 * `builder` must come from [`nc_panel_builder_new`] or be NULL.
 */
void nc_panel_builder_free(struct NcPanelBuilder *builder);

/**
 * Loads a `tick,asset,value` CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum NcStatus nc_panel_from_csv(const char *path, double tick_duration, struct NcPanel **out);

/**
 * Number of assets, or 0 for NULL.
 *
 * # Safety
 * `panel` must be a live handle or NULL.
 */
size_t nc_panel_dim(const struct NcPanel *panel);

/**
 * # Safety
 * `panel` must be a live handle; `out` writable.
 */
enum NcStatus nc_panel_summary(const struct NcPanel *panel, struct NcPanelSummary *out);

/**
 * # Safety
 * `panel` must come from this library or be NULL.
 */
void nc_panel_free(struct NcPanel *panel);

/**
 * Estimates the noise covariance of `panel`.
 *
 * # Safety
 * `panel` must be a live handle, `config` readable (or NULL for defaults),
 * `out` writable.
 */
enum NcStatus nc_estimate(const struct NcPanel *panel,
                          const struct NcEstimatorConfig *config,
                          struct NcEstimate **out);

/**
 * Matrix dimension, or 0 for NULL.
 *
 * # Safety
 * `est` must be a live handle or NULL.
 */
size_t nc_estimate_dim(const struct NcEstimate *est);

/**
 * Effective sample size used by the threshold rule, or 0 for NULL.
 *
 * # Safety
 * `est` must be a live handle or NULL.
 */
size_t nc_estimate_n_star(const struct NcEstimate *est);

/**
 * Copies the unthresholded estimate, row-major, into `buf[0..p*p]`.
 *
 * # Safety
 * `buf` must have room for `len` doubles.
 */
enum NcStatus nc_estimate_copy_raw(const struct NcEstimate *est, double *buf, size_t len);

/**
 * Copies the thresholded estimate, row-major, into `buf[0..p*p]`.
 *
 * # Safety
 * `buf` must have room for `len` doubles.
 */
enum NcStatus nc_estimate_copy_thresholded(const struct NcEstimate *est, double *buf, size_t len);

/**
 * # Safety
 * `est` must come from [`nc_estimate`] or be NULL.
 */
void nc_estimate_free(struct NcEstimate *est);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NOISECOV_H */
