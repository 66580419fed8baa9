#ifndef PDCOV_H
#define PDCOV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PdcStatus {
  PDC_STATUS_OK = 0,
  PDC_STATUS_NULL_POINTER = 1,
  PDC_STATUS_INVALID_ARGUMENT = 2,
  PDC_STATUS_NUMERICAL = 3,
  PDC_STATUS_FAILURE_BUDGET = 4,
  PDC_STATUS_IO = 5,
  PDC_STATUS_BUFFER_TOO_SMALL = 6,
  PDC_STATUS_PANIC = 7,
} PdcStatus;

typedef enum PdcMethod {
  PDC_METHOD_POP = 0,
  PDC_METHOD_MLE = 1,
  PDC_METHOD_LW = 2,
  PDC_METHOD_PDC = 3,
  PDC_METHOD_SPDC = 4,
  PDC_METHOD_LSPDC = 5,
  PDC_METHOD_MAXPDC = 6,
  PDC_METHOD_RPDC = 7,
} PdcMethod;

/*
 Normalizing constant of the PDC family.
 */
typedef enum PdcNorm {
  PDC_NORM_LISTING = 0,
  PDC_NORM_EQ1 = 1,
} PdcNorm;

/*
 Scaler scope; `Default` keeps the estimator's own default.
 */
typedef enum PdcScope {
  PDC_SCOPE_DEFAULT = 0,
  PDC_SCOPE_PER_DIMENSION = 1,
  PDC_SCOPE_GLOBAL_SCALAR = 2,
  PDC_SCOPE_PER_PAIR = 3,
} PdcScope;

typedef enum PdcMetric {
  PDC_METRIC_OVERDISPERSION = 0,
  PDC_METRIC_EXPLAINED_PCT = 1,
  PDC_METRIC_CSE = 2,
  PDC_METRIC_OVERDISPERSION_OF_MEAN = 3,
} PdcMetric;

/*
 A `p x p` symmetric covariance matrix.
 */
typedef struct PdcCovariance PdcCovariance;

/*
 An `n x p` data matrix, optionally backed by an expression table.
 */
typedef struct PdcData PdcData;

/*
 Averaged metrics of a Monte Carlo sweep.
 */
typedef struct PdcSweep PdcSweep;

typedef struct PdcPcMetrics {
  double explained_pct;
  double cse;
  double overdispersion;
} PdcPcMetrics;

typedef struct PdcLeveneResult {
  double statistic;
  double p_value;
  size_t df1;
  size_t df2;
  /*
   Set when the p-value underflowed and was reported as 0.
   */
  bool p_underflow;
} PdcLeveneResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *pdc_version(void);

/*
 Message of the last failed call on this thread, or NULL. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *pdc_last_error_message(void);

/*
 Copies a row-major `n x p` buffer into a new data handle.

 # Safety
 `values` must point to `n * p` readable doubles; `out` must be writable.
 */
enum PdcStatus pdc_data_from_rows(const double *values, size_t n, size_t p, struct PdcData **out);

/*
 Loads a gene-by-condition expression table (tab or comma separated).
 Rows are genes, columns are conditions.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PdcStatus pdc_data_load(const char *path, struct PdcData **out);

/*
 Draws `n` distinct rows of a loaded table uniformly without replacement.

 # Safety
 `data` must be a live handle from [`pdc_data_load`]; `out` must be writable.
 */
enum PdcStatus pdc_data_subsample(const struct PdcData *data,
                                  size_t n,
                                  uint64_t seed,
                                  struct PdcData **out);

/*
 Draws `n` rows from `N(0, sigma)`; the result depends only on `seed`.

 # Safety
 `sigma` must be a live handle; `out` must be writable.
 */
enum PdcStatus pdc_data_sample_mvn(const struct PdcCovariance *sigma,
                                   size_t n,
                                   uint64_t seed,
                                   struct PdcData **out);

/*
 # Safety
 `data` must be a live handle or NULL.
 */
size_t pdc_data_nrows(const struct PdcData *data);

/*
 # Safety
 `data` must be a live handle or NULL.
 */
size_t pdc_data_ncols(const struct PdcData *data);

/*
 Copies the data row-major into `out` (capacity `len`).

 # Safety
 `data` must be a live handle; `out` must hold `len` doubles.
 */
enum PdcStatus pdc_data_values(const struct PdcData *data, double *out, size_t len);

/*
 # Safety
 `data` must be a handle from this library or NULL, and not used afterwards.
 */
void pdc_data_free(struct PdcData *data);

/*
 Estimates the covariance of `data` with `method` (not `Pop`).

 # Safety
 `data` must be a live handle; `out` must be writable.
 */
enum PdcStatus pdc_estimate(const struct PdcData *data,
                            enum PdcMethod method_tag,
                            enum PdcNorm norm,
                            enum PdcScope scope,
                            struct PdcCovariance **out);

/*
 Wraps a row-major symmetric `p x p` buffer.

 # Safety
 `values` must point to `p * p` readable doubles; `out` must be writable.
 */
enum PdcStatus pdc_covariance_from_values(const double *values,
                                          size_t p,
                                          struct PdcCovariance **out);

/*
 Seeded random population covariance `t t^T`, `t` with standard normal entries.

 # Safety
 `out` must be writable.
 */
enum PdcStatus pdc_population_sigma(size_t p, uint64_t seed, struct PdcCovariance **out);

/*
 # Safety
 `cov` must be a live handle or NULL.
 */
size_t pdc_covariance_dim(const struct PdcCovariance *cov);

/*
 Copies the matrix row-major into `out` (capacity `len`).

 # Safety
 `cov` must be a live handle; `out` must hold `len` doubles.
 */
enum PdcStatus pdc_covariance_values(const struct PdcCovariance *cov, double *out, size_t len);

/*
 Eigenvalues in non-increasing order (capacity `len`).

 # Safety
 `cov` must be a live handle; `out` must hold `len` doubles.
 */
enum PdcStatus pdc_covariance_eigenvalues(const struct PdcCovariance *cov, double *out, size_t len);

/*
 `lambda_max / lambda_min`, or infinity for a numerically singular matrix.

 # Safety
 `cov` must be a live handle; `out` must be writable.
 */
enum PdcStatus pdc_covariance_condition_number(const struct PdcCovariance *cov, double *out);

/*
 Number of eigenvalues above `tol * lambda_max`.

 # Safety
 `cov` must be a live handle; `out` must be writable.
 */
enum PdcStatus pdc_covariance_rank(const struct PdcCovariance *cov, double tol, size_t *out);

/*
 Frobenius norm of `a - b`.

 # Safety
 `a` and `b` must be live handles; `out` must be writable.
 */
enum PdcStatus pdc_covariance_frobenius_distance(const struct PdcCovariance *a,
                                                 const struct PdcCovariance *b,
                                                 double *out);

/*
 Metrics of component `pc` (1-based) of `estimate` against `population`,
 with `n` the sample size behind the estimate.

 # Safety
 Both handles must be live; `out` must be writable.
 */
enum PdcStatus pdc_covariance_pc_metrics(const struct PdcCovariance *estimate,
                                         const struct PdcCovariance *population,
                                         size_t n,
                                         size_t pc,
                                         struct PdcPcMetrics *out);

/*
 # Safety
 `cov` must be a handle from this library or NULL, and not used afterwards.
 */
void pdc_covariance_free(struct PdcCovariance *cov);

/*
 Classic two-group Levene test.

 # Safety
 `a` and `b` must point to `na` and `nb` doubles; `out` must be writable.
 */
enum PdcStatus pdc_levene(const double *a,
                          size_t na,
                          const double *b,
                          size_t nb,
                          struct PdcLeveneResult *out);

/*
 Runs a sweep described by a TOML config (same keys as the CLI config
 file). Unset keys take the CLI defaults. `threads = 0` uses all cores;
 results do not depend on it.

 # Safety
 `config_toml` must be a NUL-terminated string; `out` must be writable.
 */
enum PdcStatus pdc_sweep_run(const char *config_toml, size_t threads, struct PdcSweep **out);

/*
 One averaged cell of a sweep.

 # Safety
 `sweep` must be a live handle; `out` must be writable.
 */
enum PdcStatus pdc_sweep_value(const struct PdcSweep *sweep,
                               size_t n,
                               enum PdcMethod method_tag,
                               size_t pc,
                               enum PdcMetric metric,
                               double *out);

/*
 SHA-256 of the resolved config; valid for the life of the handle.

 # Safety
 `sweep` must be a live handle or NULL.
 */
const char *pdc_sweep_config_hash(const struct PdcSweep *sweep);

/*
 Writes the long-format sweep CSV, headed by the config hash line.

 # Safety
 `sweep` must be a live handle; `path` must be a NUL-terminated string.
 */
enum PdcStatus pdc_sweep_write_csv(const struct PdcSweep *sweep, const char *path);

/*
 # Safety
 `sweep` must be a handle from this library or NULL, and not used afterwards.
 */
void pdc_sweep_free(struct PdcSweep *sweep);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PDCOV_H */
