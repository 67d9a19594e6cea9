/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef SLDS_H
#define SLDS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum SldsStatus {
  SLDS_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  SLDS_STATUS_NULL_POINTER = 1,
  /*
   Arguments are inconsistent (sizes, ranges, configuration).
   */
  SLDS_STATUS_INVALID_ARGUMENT = 2,
  /*
   Input data or a model file could not be used.
   */
  SLDS_STATUS_DATA_ERROR = 3,
  /*
   A numerical failure during inference or learning.
   */
  SLDS_STATUS_NUMERICAL_ERROR = 4,
  /*
   Reading or writing a file failed.
   */
  SLDS_STATUS_IO_ERROR = 5,
  /*
   The library panicked; this is a bug.
   */
  SLDS_STATUS_PANIC = 6,
} SldsStatus;

/*
 Which parameter [`slds_model_copy`] reads.
 */
typedef enum SldsParam {
  /*
   `l x l` transition matrix.
   */
  SLDS_PARAM_A = 0,
  /*
   `d x l` emission matrix.
   */
  SLDS_PARAM_C = 1,
  /*
   `l x l` state noise covariance.
   */
  SLDS_PARAM_Q = 2,
  /*
   `d x d` observation noise covariance.
   */
  SLDS_PARAM_R = 3,
  /*
   Initial state mean, length `l`.
   */
  SLDS_PARAM_PI1 = 4,
  /*
   `l x l` initial state covariance.
   */
  SLDS_PARAM_V1 = 5,
} SldsParam;

/*
 Opaque model handle.
 */
typedef struct SldsModel SldsModel;

/*
 Learning options, mirroring the core fitting configuration.
 */
typedef struct SldsFitConfig {
  size_t states;
  double beta;
  size_t em_max_iter;
  double em_tol;
  size_t prox_max_iter;
  double prox_tol;
  double jitter;
  uint64_t seed;
} SldsFitConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null after a success.
 The pointer stays valid until the next call into the library on this thread.
 */
const char *slds_last_error_message(void);

/*
 Default learning options for `states` hidden dimensions and prior scale `beta`.
 */
struct SldsFitConfig slds_fit_config_default(size_t states, double beta);

/*
 Build a model from row-major parameter arrays. The arrays are copied.

 # Safety
 Each pointer must reference the documented number of doubles; `out` must be writable.
 */
enum SldsStatus slds_model_new(size_t l,
                               size_t d,
                               const double *a,
                               const double *c,
                               const double *q,
                               const double *r,
                               const double *pi1,
                               const double *v1,
                               struct SldsModel **out);

/*
 Load a model file written by `slds train` or [`slds_model_save`].

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SldsStatus slds_model_load(const char *path, struct SldsModel **out);

/*
 Save a model as JSON.

 # Safety
 `model` must come from this library; `path` must be a NUL-terminated string.
 */
enum SldsStatus slds_model_save(const struct SldsModel *model, const char *path);

/*
 Release a model. Null is ignored.

 # Safety
 `model` must come from this library and must not be used afterwards.
 */
void slds_model_free(struct SldsModel *model);

/*
 Hidden state dimension `l` and observation dimension `d`.

 # Safety
 `model` must come from this library; `l` and `d` must be writable.
 */
enum SldsStatus slds_model_dims(const struct SldsModel *model, size_t *l, size_t *d);

/*
 Copy one parameter into `out` (row-major). `len` must equal its element count.

 # Safety
 `model` must come from this library; `out` must hold `len` doubles.
 */
enum SldsStatus slds_model_copy(const struct SldsModel *model,
                                enum SldsParam which,
                                double *out,
                                size_t len);

/*
 Fit a model by MAP-EM. `iterations`, if not null, receives the EM iteration count.

 # Safety
 `data` must hold `sum(lengths) * obs_dim` doubles, `lengths` `n_series`
 entries; `config` and `out` must be valid.
 */
enum SldsStatus slds_fit(const double *data,
                         const size_t *lengths,
                         size_t n_series,
                         size_t obs_dim,
                         const struct SldsFitConfig *config,
                         struct SldsModel **out,
                         size_t *iterations);

/*
 Forecast the `horizon` observations after a prefix of `prefix_len` steps.
 `out` receives `horizon * d` predicted means, row-major.

 # Safety
 `prefix` must hold `prefix_len * d` doubles and `out` `out_len` doubles.
 */
enum SldsStatus slds_forecast(const struct SldsModel *model,
                              const double *prefix,
                              size_t prefix_len,
                              size_t horizon,
                              double *out,
                              size_t out_len);

/*
 Total log-likelihood of a data set under the model.

 # Safety
 See [`slds_fit`] for the data layout; `out` must be writable.
 */
enum SldsStatus slds_log_likelihood(const struct SldsModel *model,
                                    const double *data,
                                    const size_t *lengths,
                                    size_t n_series,
                                    double *out);

/*
 AMAE of the model on `tasks_per_series` random prediction tasks per series.

 # Safety
 See [`slds_fit`] for the data layout; `out` must be writable.
 */
enum SldsStatus slds_amae(const struct SldsModel *model,
                          const double *data,
                          const size_t *lengths,
                          size_t n_series,
                          size_t tasks_per_series,
                          uint64_t seed,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLDS_H */
