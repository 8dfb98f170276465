#ifndef EPF_H
#define EPF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define EPF_SLICE_ALL 0

#define EPF_SLICE_BOTTOM5 1

#define EPF_SLICE_TOP5 2

typedef enum EpfStatus {
  EPF_STATUS_OK = 0,
  // A required pointer argument was NULL.
  EPF_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8 or not a valid date.
  EPF_STATUS_INVALID_ARGUMENT = 2,
  EPF_STATUS_CONFIG = 3,
  // Unreadable or inconsistent input data.
  EPF_STATUS_INPUT = 4,
  EPF_STATUS_SHAPE = 5,
  EPF_STATUS_INSUFFICIENT_HISTORY = 6,
  EPF_STATUS_NUMERICAL = 7,
  EPF_STATUS_UNDEFINED = 8,
  EPF_STATUS_IO = 9,
  // The output buffer is too small; the required length was written.
  EPF_STATUS_BUFFER_TOO_SMALL = 10,
  EPF_STATUS_PANIC = 11,
} EpfStatus;

// Loaded market data.
typedef struct EpfDataset EpfDataset;

// Hourly forecasts (or actual prices) over contiguous days.
typedef struct EpfForecast EpfForecast;

typedef struct EpfMetrics {
  size_t n_hours;
  double mae;
  double rmse;
  double rmae;
  double smape_percent;
  double r2;
} EpfMetrics;

typedef struct EpfGwResult {
  double statistic;
  double p_one_sided;
  double p_two_sided;
  size_t n;
  // Nonzero when the moment covariance was singular.
  uint8_t degenerate;
} EpfGwResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *epf_last_error_message(void);

// Library version as a static string.
const char *epf_version(void);

// Generates a synthetic market from a JSON generator config.
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` a valid pointer.
enum EpfStatus epf_dataset_synthetic(const char *config_json, struct EpfDataset **out);

// Loads the files listed in an ingest manifest.
//
// # Safety
// `manifest_path` must be a NUL-terminated string and `out` a valid pointer.
enum EpfStatus epf_dataset_load(const char *manifest_path, struct EpfDataset **out);

// Number of whole days the dataset spans, or 0 for NULL.
//
// # Safety
// `dataset` must be NULL or a live handle.
size_t epf_dataset_n_days(const struct EpfDataset *dataset);

// # Safety
// `dataset` must be NULL or a handle not yet freed.
void epf_dataset_free(struct EpfDataset *dataset);

// Runs one backtest described by a JSON backtest config.
//
// # Safety
// Pointers must be valid; `config_json` NUL-terminated.
enum EpfStatus epf_backtest_run(const struct EpfDataset *dataset,
                                const char *config_json,
                                struct EpfForecast **out);

// Actual prices of `zone` over `[start, end]`.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum EpfStatus epf_actuals(const struct EpfDataset *dataset,
                           const char *zone,
                           const char *start,
                           const char *end,
                           struct EpfForecast **out);

// Seasonal-persistence benchmark: the price seven days earlier.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum EpfStatus epf_naive_forecast(const struct EpfDataset *dataset,
                                  const char *zone,
                                  const char *start,
                                  const char *end,
                                  struct EpfForecast **out);

// Reads a `day,hour,value,label` forecast CSV.
//
// # Safety
// `path` must be NUL-terminated and `out` valid.
enum EpfStatus epf_forecast_read_csv(const char *path, struct EpfForecast **out);

// Writes a forecast CSV atomically.
//
// # Safety
// `forecast` must be a live handle and `path` NUL-terminated.
enum EpfStatus epf_forecast_write_csv(const struct EpfForecast *forecast, const char *path);

// Number of forecast days, or 0 for NULL. Values hold 24 per day.
//
// # Safety
// `forecast` must be NULL or a live handle.
size_t epf_forecast_n_days(const struct EpfForecast *forecast);

// Copies the values, day-major and hour-minor, into `buf`. `*len` holds the
// buffer capacity on entry and the number of values on return; if the buffer
// is too small nothing is copied and `EPF_STATUS_BUFFER_TOO_SMALL` is
// returned.
//
// # Safety
// `buf` must point to `*len` writable doubles, or be NULL with `*len` 0.
enum EpfStatus epf_forecast_values(const struct EpfForecast *forecast, double *buf, size_t *len);

// # Safety
// `forecast` must be NULL or a handle not yet freed.
void epf_forecast_free(struct EpfForecast *forecast);

// Hour-by-hour mean of `n` member forecasts. With `strict` nonzero exactly
// eight members are required.
//
// # Safety
// `members` must point to `n` live handles; `label` NUL-terminated.
enum EpfStatus epf_ensemble(const struct EpfForecast *const *members,
                            size_t n,
                            const char *label,
                            uint8_t strict,
                            struct EpfForecast **out);

// Accuracy of `forecast` on one slice of the actual prices.
//
// # Safety
// Handles must be live and `out` valid.
enum EpfStatus epf_evaluate(const struct EpfForecast *forecast,
                            const struct EpfForecast *actual,
                            const struct EpfForecast *naive,
                            uint32_t slice,
                            struct EpfMetrics *out);

// Giacomini-White test of A against B from hourly errors, 24 per day over
// `n_days` days. A small one-sided p-value means B is more accurate.
//
// # Safety
// `err_a` and `err_b` must each hold `24 * n_days` doubles.
enum EpfStatus epf_gw_test(const double *err_a,
                           const double *err_b,
                           size_t n_days,
                           struct EpfGwResult *out);

// Runs the full experiment of a run-config file, as `epf backtest` does.
// `out_dir` may be NULL to use the config's own output directory.
//
// # Safety
// `config_path` must be NUL-terminated; `out_dir` NULL or NUL-terminated.
enum EpfStatus epf_run_config(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EPF_H */
