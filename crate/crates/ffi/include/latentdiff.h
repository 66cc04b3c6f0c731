#ifndef LATENTDIFF_H
#define LATENTDIFF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LdStatus {
  LD_STATUS_OK = 0,
  LD_STATUS_NULL_POINTER = 1,
  LD_STATUS_INVALID_UTF8 = 2,
  LD_STATUS_CONFIG = 3,
  LD_STATUS_SHAPE = 4,
  LD_STATUS_IO = 5,
  LD_STATUS_NUMERIC = 6,
  LD_STATUS_MISSING_ARTIFACT = 7,
  LD_STATUS_NOT_FOUND = 8,
  LD_STATUS_PANIC = 9,
} LdStatus;

typedef enum LdScheduleKind {
  LD_SCHEDULE_KIND_COSINE = 0,
  LD_SCHEDULE_KIND_LINEAR = 1,
} LdScheduleKind;

typedef enum LdAllocationMode {
  LD_ALLOCATION_MODE_PRIORITY = 0,
  LD_ALLOCATION_MODE_UNIFORM = 1,
} LdAllocationMode;

/**
 * Parsed pipeline configuration.
 */
typedef struct LdConfig LdConfig;

/**
 * Result of a completed pipeline run.
 */
typedef struct LdRun LdRun;

/**
 * Noise schedule tables.
 */
typedef struct LdSchedule LdSchedule;

/**
 * Metrics of one set of predictions.
 */
typedef struct LdRegionMetrics {
  size_t count;
  double mae;
  double mse;
  double gm;
  double pearson;
  double r2;
  /**
   * Nonzero when Pearson/R² were undefined and reported as 0.
   */
  int32_t degenerate;
} LdRegionMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into the library from the same thread.
 */
const char *ld_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ld_version(void);

/**
 * Parses a JSON config document. Pass an empty string for the defaults.
 */
enum LdStatus ld_config_parse(const char *json, bool permissive, struct LdConfig **out);

/**
 * Overrides the master seed.
 */
enum LdStatus ld_config_set_seed(struct LdConfig *config, uint64_t seed);

/**
 * Writes the 64-character config hash plus NUL into `buf` (at least 65 bytes).
 */
enum LdStatus ld_config_hash(const struct LdConfig *config, char *buf, size_t len);

void ld_config_free(struct LdConfig *config);

/**
 * Runs every stage, writing artifacts under `out_dir`.
 */
enum LdStatus ld_run_pipeline(const struct LdConfig *config,
                              const char *out_dir,
                              struct LdRun **out);

/**
 * Reads a flat metric such as `mae.few` from the `vanilla` or `augmented`
 * report. Absent regions give `LD_STATUS_NOT_FOUND`.
 */
enum LdStatus ld_run_metric(const struct LdRun *run,
                            const char *report,
                            const char *key,
                            double *out);

/**
 * Synthetic rows accepted across all bins.
 */
enum LdStatus ld_run_synthetic_count(const struct LdRun *run, size_t *out);

void ld_run_free(struct LdRun *run);

enum LdStatus ld_schedule_new(enum LdScheduleKind kind,
                              size_t steps,
                              double offset,
                              struct LdSchedule **out);

/**
 * `ᾱ_t` for `t` in `0..=T`.
 */
enum LdStatus ld_schedule_alpha_bar(const struct LdSchedule *schedule, size_t t, double *out);

void ld_schedule_free(struct LdSchedule *schedule);

/**
 * Normalized priorities for `bins` bins into `out_probabilities`.
 */
enum LdStatus ld_priority_scores(const double *errors,
                                 const size_t *counts,
                                 size_t bins,
                                 double lambda,
                                 bool normalize_errors,
                                 double *out_probabilities);

/**
 * Integer quotas summing to `total` into `out_quotas`.
 */
enum LdStatus ld_allocate_budget(const double *probabilities,
                                 size_t bins,
                                 size_t total,
                                 enum LdAllocationMode mode,
                                 size_t *out_quotas);

/**
 * MAE, MSE, GM, Pearson and R² of `n` predictions.
 */
enum LdStatus ld_region_metrics(const double *predictions,
                                const double *targets,
                                size_t n,
                                struct LdRegionMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LATENTDIFF_H */
