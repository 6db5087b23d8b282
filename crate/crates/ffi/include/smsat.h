#ifndef SMSAT_H
#define SMSAT_H

/* Generated by cbindgen; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SmsatStatus {
  SMSAT_STATUS_OK = 0,
  SMSAT_STATUS_NULL_POINTER = 1,
  SMSAT_STATUS_INVALID_ARGUMENT = 2,
  SMSAT_STATUS_IO = 3,
  SMSAT_STATUS_FORMAT = 4,
  SMSAT_STATUS_NUMERIC = 5,
  SMSAT_STATUS_BUFFER_TOO_SMALL = 6,
  SMSAT_STATUS_PANIC = 7,
} SmsatStatus;

typedef struct SmsatCam SmsatCam;

typedef struct SmsatClip SmsatClip;

typedef struct SmsatEncoder SmsatEncoder;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *smsat_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call on the same thread.
 */
const char *smsat_last_error(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum SmsatStatus smsat_clip_load_wav(const char *path, struct SmsatClip **out);

/**
 * Copies `n` samples into a new clip.
 *
 * # Safety
 * `samples` must point at `n` doubles; `out` a valid pointer.
 */
enum SmsatStatus smsat_clip_from_samples(const double *samples,
                                         size_t n,
                                         uint32_t rate,
                                         struct SmsatClip **out);

/**
 * # Safety
 * `clip` must be NULL or a live handle.
 */
size_t smsat_clip_len(const struct SmsatClip *clip);

/**
 * # Safety
 * `clip` must be NULL or a live handle.
 */
uint32_t smsat_clip_rate(const struct SmsatClip *clip);

/**
 * # Safety
 * `clip` must be NULL or a handle not yet freed.
 */
void smsat_clip_free(struct SmsatClip *clip);

/**
 * Writes the 25-value descriptor (default extractor settings) to `out`.
 *
 * # Safety
 * `out` must have room for 25 doubles.
 */
enum SmsatStatus smsat_extract_features(const struct SmsatClip *clip, double *out);

/**
 * Magnitude of the analytic signal of `x` into `out` (both length `n`).
 *
 * # Safety
 * `x` and `out` must point at `n` doubles.
 */
enum SmsatStatus smsat_analytic_envelope(const double *x, size_t n, double *out);

/**
 * # Safety
 * `x` and `y` must point at `n` doubles; `out` a valid pointer.
 */
enum SmsatStatus smsat_rmse(const double *x, const double *y, size_t n, double *out);

/**
 * Welch's unequal-variance t-test. Any of the outputs may be NULL.
 *
 * # Safety
 * `a` and `b` must point at `na` and `nb` doubles.
 */
enum SmsatStatus smsat_welch_t(const double *a,
                               size_t na,
                               const double *b,
                               size_t nb,
                               double *t,
                               double *df,
                               double *p);

/**
 * Class with the lowest of three means given in SM, M, NS order. Writes the
 * class index (0 SM, 1 M, 2 NS) and whether a tie was broken.
 *
 * # Safety
 * `means` must point at 3 doubles; `label` a valid pointer; `tie` may be NULL.
 */
enum SmsatStatus smsat_calmest(const double *means, int32_t *label, bool *tie);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum SmsatStatus smsat_cam_load(const char *path, struct SmsatCam **out);

/**
 * Classifies `n_rows` row-major 25-value rows. `labels` receives class
 * indices; `proba` (may be NULL) receives `n_rows * 3` probabilities.
 *
 * # Safety
 * Buffers must match the sizes above.
 */
enum SmsatStatus smsat_cam_predict(const struct SmsatCam *cam,
                                   const double *rows,
                                   size_t n_rows,
                                   int32_t *labels,
                                   double *proba);

/**
 * # Safety
 * `cam` must be NULL or a handle not yet freed.
 */
void smsat_cam_free(struct SmsatCam *cam);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum SmsatStatus smsat_encoder_load(const char *path, struct SmsatEncoder **out);

/**
 * Embeds one clip. `len` receives the embedding length; if `cap` is smaller
 * nothing is written and `BufferTooSmall` is returned.
 *
 * # Safety
 * `out` must have room for `cap` doubles; `len` a valid pointer.
 */
enum SmsatStatus smsat_encoder_embed(const struct SmsatEncoder *enc,
                                     const struct SmsatClip *clip,
                                     double *out,
                                     size_t cap,
                                     size_t *len);

/**
 * # Safety
 * `enc` must be NULL or a handle not yet freed.
 */
void smsat_encoder_free(struct SmsatEncoder *enc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMSAT_H */
