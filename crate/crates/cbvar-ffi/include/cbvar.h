/* C interface for the coarsened BVAR library. */

#ifndef CBVAR_H
#define CBVAR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>
#include <stdint.h>
#include <stddef.h>

// Status code returned by every fallible call. `CONFIG`, `DATA` and
// `NUMERIC` carry the same numeric values as the CLI's process exit
// codes for the matching failure classes.
typedef enum CbvarStatus {
  // Success.
  CBVAR_STATUS_OK = 0,
  // A required pointer argument was null.
  CBVAR_STATUS_NULL_ARGUMENT = 1,
  // Invalid option or argument value.
  CBVAR_STATUS_CONFIG = 2,
  // Missing, malformed, or insufficient input data.
  CBVAR_STATUS_DATA = 3,
  // A numerical routine failed to produce a finite answer.
  CBVAR_STATUS_NUMERIC = 4,
  // A panic was caught at the library boundary.
  CBVAR_STATUS_PANIC = 5,
} CbvarStatus;

// Opaque handle for a loaded monthly panel.
typedef struct CbvarDataset CbvarDataset;

// Opaque handle for a fitted model: the exact coarsened posterior plus
// the sample it was fit on (kept as forecast history).
typedef struct CbvarModel CbvarModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string. Never null; do
// not free.
const char *cbvar_version(void);

// Message for the most recent failure on the calling thread, empty if
// none. The pointer stays valid until the next failing call on the
// same thread; do not free.
const char *cbvar_last_error_message(void);

// Free a string returned by this library. Null is a no-op.
//
// # Safety
// `s` must be a pointer previously returned by a string-returning
// function of this library, and not yet freed.
void cbvar_string_free(char *s);

// Load a monthly CSV panel: a header row of variable names and a first
// column of YYYY-MM dates. `size` picks the variable set ("small",
// "medium", "large", or "custom:FILE" with FILE resolved against the
// CSV's directory); null means "small". Per-variable stationarity
// transforms are applied and rows lost to differencing are trimmed. On
// success writes a new handle to `out`; release it with
// [`cbvar_dataset_free`].
//
// # Safety
// `path` (and `size` when non-null) must be NUL-terminated strings
// valid for the duration of the call, and `out` must be a valid
// pointer.
enum CbvarStatus cbvar_dataset_load_csv(const char *path,
                                        const char *size,
                                        struct CbvarDataset **out);

// Build a panel from a row-major `n_rows` x `n_vars` buffer taken as
// levels, named y1..yM, with monthly dates starting at
// `start_year`-`start_month`. On success writes a new handle to `out`;
// release it with [`cbvar_dataset_free`].
//
// # Safety
// `values` must point to at least `n_rows * n_vars` readable doubles
// and `out` must be a valid pointer.
enum CbvarStatus cbvar_dataset_from_values(const double *values,
                                           uintptr_t n_rows,
                                           uintptr_t n_vars,
                                           int32_t start_year,
                                           uint32_t start_month,
                                           struct CbvarDataset **out);

// Panel shape. Either out pointer may be null to skip that field.
//
// # Safety
// `dataset` must be a live handle from a dataset constructor; non-null
// out pointers must be valid.
enum CbvarStatus cbvar_dataset_shape(const struct CbvarDataset *dataset,
                                     uintptr_t *n_rows,
                                     uintptr_t *n_vars);

// Release a dataset handle. Null is a no-op.
//
// # Safety
// `dataset` must come from a dataset constructor of this library and
// must not be used (or freed) again afterwards.
void cbvar_dataset_free(struct CbvarDataset *dataset);

// Fit a VAR with `lags` lags under the conjugate Minnesota-style prior.
// `alpha` is the coarsening level: any value in (0, inf] fixes it (an
// IEEE infinity gives the ordinary posterior), while a non-positive or
// NaN value selects it automatically at the knee of the
// fit-versus-complexity curve over the default grid. `lambda` is the
// prior tightness: positive fixes it, non-positive or NaN picks the
// marginal-likelihood winner over the default grid. On success writes a
// new handle to `out`; release it with [`cbvar_model_free`].
//
// # Safety
// `dataset` must be a live handle from a dataset constructor and `out`
// must be a valid pointer.
enum CbvarStatus cbvar_fit(const struct CbvarDataset *dataset,
                           uintptr_t lags,
                           double alpha,
                           double lambda,
                           struct CbvarModel **out);

// Scalar summary of a fitted model: coarsening level `alpha`, implied
// learning rate `zeta`, prior tightness `lambda`, and posterior
// inverse-Wishart degrees of freedom `df`. Any out pointer may be null
// to skip that field.
//
// # Safety
// `model` must be a live handle from [`cbvar_fit`]; non-null out
// pointers must be valid.
enum CbvarStatus cbvar_model_info(const struct CbvarModel *model,
                                  double *alpha,
                                  double *zeta,
                                  double *lambda,
                                  double *df);

// Coefficient matrix shape: K regressors (M * lags + 1, intercept
// last) by M variables. Either out pointer may be null.
//
// # Safety
// `model` must be a live handle from [`cbvar_fit`]; non-null out
// pointers must be valid.
enum CbvarStatus cbvar_model_dims(const struct CbvarModel *model,
                                  uintptr_t *n_regressors,
                                  uintptr_t *n_vars);

// Copy the K x M posterior coefficient mean into `out`, row-major.
// `len` is the capacity of `out` in doubles and must be at least
// K * M (see [`cbvar_model_dims`]).
//
// # Safety
// `model` must be a live handle from [`cbvar_fit`] and `out` must
// point to at least `len` writable doubles.
enum CbvarStatus cbvar_model_coefficients(const struct CbvarModel *model,
                                          double *out,
                                          uintptr_t len);

// Simulate the posterior predictive from the end of the fitted sample
// and write the cross-draw median forecast into `out`, row-major with
// `h_max` rows (horizons 1..=h_max) and M columns. `len` must be at
// least `h_max * M`. The same seed reproduces the same buffer.
//
// # Safety
// `model` must be a live handle from [`cbvar_fit`] and `out` must
// point to at least `len` writable doubles.
enum CbvarStatus cbvar_model_forecast(const struct CbvarModel *model,
                                      uintptr_t h_max,
                                      uintptr_t n_draws,
                                      uint64_t seed,
                                      double *out,
                                      uintptr_t len);

// Simulate impulse responses to a one standard deviation shock in
// variable `shock` (zero-based; recursive identification in data
// order) and write one cross-draw quantile band into `out`, row-major
// with `h_max + 1` rows (horizons 0..=h_max) and M columns. `level`
// must be one of 0.05, 0.16, 0.50, 0.84, 0.95; `len` must be at least
// `(h_max + 1) * M`. The same seed reproduces the same buffer.
//
// # Safety
// `model` must be a live handle from [`cbvar_fit`] and `out` must
// point to at least `len` writable doubles.
enum CbvarStatus cbvar_model_irf(const struct CbvarModel *model,
                                 uintptr_t shock,
                                 uintptr_t h_max,
                                 uintptr_t n_draws,
                                 uint64_t seed,
                                 double level,
                                 double *out,
                                 uintptr_t len);

// Name of variable `index` (zero-based, data order) as a newly
// allocated string; free it with [`cbvar_string_free`]. Returns null
// when `model` is null or the index is out of range.
//
// # Safety
// `model` must be a live handle from [`cbvar_fit`].
char *cbvar_model_variable_name(const struct CbvarModel *model, uintptr_t index);

// Release a model handle. Null is a no-op.
//
// # Safety
// `model` must come from [`cbvar_fit`] and must not be used (or freed)
// again afterwards.
void cbvar_model_free(struct CbvarModel *model);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CBVAR_H */
