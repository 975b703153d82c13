#ifndef BETAWEIGHTER_H
#define BETAWEIGHTER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call. On anything but `Ok` a message is
 * available from `bw_last_error` on the same thread.
 */
typedef enum BwStatus {
  BW_STATUS_OK = 0,
  BW_STATUS_NULL_POINTER = 1,
  BW_STATUS_INVALID_UTF8 = 2,
  BW_STATUS_DOMAIN = 3,
  BW_STATUS_CONTRACT = 4,
  BW_STATUS_CONFIG = 5,
  BW_STATUS_FORMAT = 6,
  BW_STATUS_IO = 7,
  BW_STATUS_PANIC = 8,
} BwStatus;

/**
 * Experiment configuration; starts from the library defaults.
 */
typedef struct BwConfig BwConfig;

/**
 * Result of a finished experiment run.
 */
typedef struct BwReport BwReport;

/**
 * Seeded random stream.
 */
typedef struct BwRng BwRng;

/**
 * Per-example Beta weight distributions with an active mask.
 */
typedef struct BwWeightTable BwWeightTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Regularized incomplete beta function I_x(a, b).
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum BwStatus bw_beta_cdf(double x, double a, double b, double *out);

/**
 * Inverse of `bw_beta_cdf` in x.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum BwStatus bw_beta_quantile(double u, double a, double b, double *out);

/**
 * # Safety
 * `out` must be valid for writes; release the handle with `bw_rng_free`.
 */
enum BwStatus bw_rng_new(uint64_t seed, uint64_t stream, struct BwRng **out);

/**
 * # Safety
 * `rng` must come from `bw_rng_new` and not be used afterwards. Null is ignored.
 */
void bw_rng_free(struct BwRng *rng);

/**
 * Draws one sample from Beta(a, b).
 *
 * # Safety
 * `rng` must be a live handle and `out` valid for writes.
 */
enum BwStatus bw_rng_sample_beta(struct BwRng *rng, double a, double b, double *out);

/**
 * Table of `n` uniform Beta(1, 1) priors, all active.
 *
 * # Safety
 * `out` must be valid for writes; release with `bw_weight_table_free`.
 */
enum BwStatus bw_weight_table_new(size_t n, struct BwWeightTable **out);

/**
 * # Safety
 * `table` must come from `bw_weight_table_new`. Null is ignored.
 */
void bw_weight_table_free(struct BwWeightTable *table);

/**
 * # Safety
 * `table` must be a live handle; `a` and `b` valid for writes.
 */
enum BwStatus bw_weight_table_get(const struct BwWeightTable *table,
                                  size_t i,
                                  double *a,
                                  double *b,
                                  bool *active);

/**
 * Sets the distribution of an active entry.
 *
 * # Safety
 * `table` must be a live handle.
 */
enum BwStatus bw_weight_table_set(struct BwWeightTable *table, size_t i, double a, double b);

/**
 * # Safety
 * `table` must be a live handle and `out` valid for writes.
 */
enum BwStatus bw_weight_table_active_count(const struct BwWeightTable *table, size_t *out);

/**
 * Writes the expected weight of every entry into
 * `out[0..len]`; `len` must equal the table size. Pruned entries keep
 * the mean they had when pruned.
 *
 * # Safety
 * `out` must be valid for `len` writes.
 */
enum BwStatus bw_weight_table_expected(const struct BwWeightTable *table, double *out, size_t len);

/**
 * Deactivates entries whose CDF at `lambda` exceeds `rho`. With
 * `keep_mass_below` the comparison is reversed.
 *
 * # Safety
 * `table` must be a live handle; `pruned` may be null.
 */
enum BwStatus bw_weight_table_prune(struct BwWeightTable *table,
                                    double lambda,
                                    double rho,
                                    bool keep_mass_below,
                                    size_t *pruned);

/**
 * # Safety
 * `out` must be valid for writes; release with `bw_config_free`.
 */
enum BwStatus bw_config_new(struct BwConfig **out);

/**
 * # Safety
 * `config` must come from `bw_config_new`. Null is ignored.
 */
void bw_config_free(struct BwConfig *config);

/**
 * Sets one option by name, as in an INI file (`"eta"`, `"method"`, ...).
 *
 * # Safety
 * `config` must be a live handle; `key` and `value` NUL-terminated.
 */
enum BwStatus bw_config_set(struct BwConfig *config, const char *key, const char *value);

/**
 * Applies `key = value` lines on top of the current settings.
 *
 * # Safety
 * `config` must be a live handle; `ini` NUL-terminated.
 */
enum BwStatus bw_config_apply_ini(struct BwConfig *config, const char *ini);

/**
 * Trains and evaluates. Writes report files too when `out` is configured.
 *
 * # Safety
 * `config` must be a live handle and `out` valid for writes; release the
 * report with `bw_report_free`.
 */
enum BwStatus bw_run(const struct BwConfig *config, struct BwReport **out);

/**
 * # Safety
 * `report` must come from `bw_run`. Null is ignored.
 */
void bw_report_free(struct BwReport *report);

/**
 * # Safety
 * `report` must be a live handle and `out` valid for writes.
 */
enum BwStatus bw_report_epochs(const struct BwReport *report, size_t *out);

/**
 * Test loss after epoch `epoch` (zero-based).
 *
 * # Safety
 * `report` must be a live handle and `out` valid for writes.
 */
enum BwStatus bw_report_test_loss(const struct BwReport *report, size_t epoch, double *out);

/**
 * Writes metrics.jsonl, summary.csv and weights.csv into `dir`.
 *
 * # Safety
 * `report` must be a live handle; `dir` NUL-terminated.
 */
enum BwStatus bw_report_export(const struct BwReport *report, const char *dir);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *bw_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BETAWEIGHTER_H */
