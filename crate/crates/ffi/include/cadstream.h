#ifndef CADSTREAM_H
#define CADSTREAM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  CADS_OK = 0,
  CADS_NULL_POINTER = 1,
  CADS_DIMENSION = 2,
  CADS_CONTRACT = 3,
  CADS_CONFIG = 4,
  CADS_NUMERIC = 5,
  CADS_FORMAT = 6,
  CADS_INPUT = 7,
  CADS_METRIC = 8,
  CADS_IO = 9,
  CADS_PANIC = 10,
} CadsStatus;

/**
 * Opaque 784-input MNIST autoencoder.
 */
typedef struct CadsAutoencoder CadsAutoencoder;

/**
 * Opaque admission filter.
 */
typedef struct CadsFilter CadsFilter;

/**
 * Opaque flow-prediction frame scorer.
 */
typedef struct CadsModel CadsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread (empty if none). The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *cads_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cads_version(void);

/**
 * Fresh filter. `mu` is seeded by the first observed loss.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
CadsStatus cads_filter_new(double alpha, double tau_floor, size_t warmup, CadsFilter **out);

/**
 * Filter with explicit statistics and no warm-up.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
CadsStatus cads_filter_with_stats(double mu,
                                  double tau,
                                  double alpha,
                                  double tau_floor,
                                  CadsFilter **out);

/**
 * Admission test without any state change.
 *
 * # Safety
 * `filter` must come from `cads_filter_new`; `admitted` must be valid.
 */
CadsStatus cads_filter_admit(const CadsFilter *filter, double loss, bool *admitted);

/**
 * Admission test followed, if admitted, by the mean/threshold update. The
 * caller is responsible for training its scorer on admitted samples.
 *
 * # Safety
 * `filter` must come from `cads_filter_new`; `admitted` must be valid.
 */
CadsStatus cads_filter_observe(CadsFilter *filter, double loss, bool *admitted);

/**
 * # Safety
 * `filter` must come from `cads_filter_new`; `mu` and `tau` must be valid.
 */
CadsStatus cads_filter_stats(const CadsFilter *filter, double *mu, double *tau);

/**
 * # Safety
 * `filter` must come from `cads_filter_new` or be null.
 */
void cads_filter_free(CadsFilter *filter);

/**
 * 784→256→64→256→784 autoencoder trained with Adam at `lr`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
CadsStatus cads_autoencoder_new(uint64_t seed, double lr, CadsAutoencoder **out);

/**
 * Reconstruction loss of one image with pixels scaled to [-1, 1].
 *
 * # Safety
 * `ae` must come from `cads_autoencoder_new`; `pixels` must hold `len`
 * floats; `loss` must be valid.
 */
CadsStatus cads_autoencoder_score(const CadsAutoencoder *ae,
                                  const float *pixels,
                                  size_t len,
                                  double *loss);

/**
 * One training step; `loss` receives the pre-update loss.
 *
 * # Safety
 * As for `cads_autoencoder_score`.
 */
CadsStatus cads_autoencoder_train(CadsAutoencoder *ae,
                                  const float *pixels,
                                  size_t len,
                                  double *loss);

/**
 * # Safety
 * `ae` must come from `cads_autoencoder_new` or be null.
 */
void cads_autoencoder_free(CadsAutoencoder *ae);

/**
 * Frame scorer. `config_toml` may be null for the defaults; otherwise it
 * holds model settings (`height`, `width`, `lambda`, `[generator]`, ...).
 *
 * # Safety
 * `config_toml` must be null or NUL-terminated; `out` must be valid.
 */
CadsStatus cads_model_new(const char *config_toml, CadsModel **out);

/**
 * Anomaly score (reconstruction loss) of the pair. Frames are
 * channel-major `C×H×W` arrays with values in [-1, 1].
 *
 * # Safety
 * `model` must come from `cads_model_new`; `prev` and `curr` must hold
 * `len` floats; `loss` must be valid.
 */
CadsStatus cads_model_score(const CadsModel *model,
                            const float *prev,
                            const float *curr,
                            size_t len,
                            double *loss);

/**
 * One coupled training step; `loss` receives the pre-update reconstruction
 * loss. Parameters are unchanged if the step fails.
 *
 * # Safety
 * As for `cads_model_score`.
 */
CadsStatus cads_model_train(CadsModel *model,
                            const float *prev,
                            const float *curr,
                            size_t len,
                            double *loss);

/**
 * Writes a CADM checkpoint.
 *
 * # Safety
 * `model` must come from `cads_model_new`; `path` must be NUL-terminated.
 */
CadsStatus cads_model_save(const CadsModel *model, const char *path);

/**
 * Loads a CADM checkpoint into a model of the same configuration.
 *
 * # Safety
 * As for `cads_model_save`.
 */
CadsStatus cads_model_load(CadsModel *model, const char *path);

/**
 * # Safety
 * `model` must come from `cads_model_new` or be null.
 */
void cads_model_free(CadsModel *model);

/**
 * Area under the ROC curve; higher scores mean more anomalous, labels are
 * 0 (normal) or 1 (anomalous).
 *
 * # Safety
 * `scores` and `labels` must hold `n` values; `out` must be valid.
 */
CadsStatus cads_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Equal error rate, with the same conventions as `cads_auc`.
 *
 * # Safety
 * As for `cads_auc`.
 */
CadsStatus cads_eer(const double *scores, const uint8_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CADSTREAM_H */
