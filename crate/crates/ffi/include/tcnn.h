#ifndef TCNN_H
#define TCNN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TcnnStatus {
  TCNN_STATUS_OK = 0,
  TCNN_STATUS_NULL_POINTER = 1,
  TCNN_STATUS_INVALID_ARGUMENT = 2,
  TCNN_STATUS_SHAPE = 3,
  TCNN_STATUS_INPUT = 4,
  TCNN_STATUS_STATE = 5,
  TCNN_STATUS_ESTIMATION = 6,
  TCNN_STATUS_DIVERGENCE = 7,
  TCNN_STATUS_UNSUPPORTED = 8,
  TCNN_STATUS_IO = 9,
  TCNN_STATUS_FORMAT = 10,
  TCNN_STATUS_PANIC = 11,
} TcnnStatus;

/**
 * Opaque dataset handle.
 */
typedef struct TcnnDataset TcnnDataset;

/**
 * Opaque fitted-model handle.
 */
typedef struct TcnnModel TcnnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next `tcnn_*` call on the same thread.
 */
const char *tcnn_last_error(void);

/**
 * Simulates `n` rows of the benchmark process with `p` covariates (half
 * continuous), ground truth included.
 */
enum TcnnStatus tcnn_dataset_simulate(size_t n, size_t p, uint64_t seed, struct TcnnDataset **out);

/**
 * Builds a dataset from a row-major `n × p` covariate matrix, a 0/1
 * treatment vector and an outcome vector. Columns holding only 0 and 1 are
 * treated as binary.
 */
enum TcnnStatus tcnn_dataset_from_arrays(const double *x,
                                         size_t n,
                                         size_t p,
                                         const double *treatment,
                                         const double *outcome,
                                         struct TcnnDataset **out);

/**
 * Loads a CSV with columns `a` (treatment), `y` (outcome) and covariates.
 */
enum TcnnStatus tcnn_dataset_load_csv(const char *path, struct TcnnDataset **out);

enum TcnnStatus tcnn_dataset_dims(const struct TcnnDataset *data, size_t *n, size_t *p);

/**
 * Copies the row-major covariates into `x` (`n·p` doubles).
 */
enum TcnnStatus tcnn_dataset_covariates(const struct TcnnDataset *data, double *x);

/**
 * Copies the true CATE (`n` doubles); fails with `Input` for data without
 * ground truth.
 */
enum TcnnStatus tcnn_dataset_true_cate(const struct TcnnDataset *data, double *tau);

void tcnn_dataset_free(struct TcnnDataset *data);

/**
 * Fits a model. `kind` is one of `snn`, `tnn`, `rnn`, `rnam`, `tcnn`,
 * `icnn`; `epochs = 0` keeps the default budget.
 */
enum TcnnStatus tcnn_model_fit(const struct TcnnDataset *data,
                               const char *kind,
                               size_t epochs,
                               uint64_t seed,
                               struct TcnnModel **out);

enum TcnnStatus tcnn_model_load(const char *path, struct TcnnModel **out);

enum TcnnStatus tcnn_model_save(const struct TcnnModel *model, const char *path);

/**
 * Number of covariates the model expects.
 */
enum TcnnStatus tcnn_model_features(const struct TcnnModel *model, size_t *p);

/**
 * Point CATE estimates for `n` rows of `x` into `tau` (`n` doubles).
 */
enum TcnnStatus tcnn_model_predict_cate(const struct TcnnModel *model,
                                        const double *x,
                                        size_t n,
                                        size_t p,
                                        double *tau);

/**
 * MC-dropout credible band of the CATE: `draws` samples, central `level`
 * interval. Each output array holds `n` doubles.
 */
enum TcnnStatus tcnn_model_cate_band(const struct TcnnModel *model,
                                     const double *x,
                                     size_t n,
                                     size_t p,
                                     size_t draws,
                                     double level,
                                     uint64_t seed,
                                     double *mean,
                                     double *lower,
                                     double *upper);

void tcnn_model_free(struct TcnnModel *model);

/**
 * Root-PEHE of `n` estimates against the truth.
 */
enum TcnnStatus tcnn_pehe(const double *tau_hat, const double *tau_true, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TCNN_H */
