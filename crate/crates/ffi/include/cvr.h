#ifndef CVR_H
#define CVR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum CvrStatus {
  CVR_STATUS_OK = 0,
  CVR_STATUS_NULL_POINTER = 1,
  CVR_STATUS_INVALID_ARGUMENT = 2,
  CVR_STATUS_IO = 3,
  CVR_STATUS_FORMAT = 4,
  CVR_STATUS_SHAPE = 5,
  CVR_STATUS_NON_FINITE = 6,
  CVR_STATUS_PANIC = 7,
} CvrStatus;

/**
 * A loaded single-modality classifier.
 */
typedef struct CvrModel CvrModel;

/**
 * A float32 tensor read from a CVRT file.
 */
typedef struct CvrTensor CvrTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *cvr_last_error_message(void);

/**
 * Loads a `.cvrm` checkpoint into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum CvrStatus cvr_model_load(const char *path, struct CvrModel **out);

/**
 * # Safety
 * `model` must come from [`cvr_model_load`] and not be used afterwards.
 */
void cvr_model_free(struct CvrModel *model);

/**
 * Expected raw volume shape `C, T, H, W`, and the modality: 0 appearance,
 * 1 flow, 2 depth.
 *
 * # Safety
 * `model` must be live; `dims` must hold 4 values; `modality` may be null.
 */
enum CvrStatus cvr_model_input_dims(const struct CvrModel *model, size_t *dims, uint32_t *modality);

/**
 * Logit of one raw (unnormalized) `C*T*H*W` volume, row major.
 *
 * # Safety
 * `model` must be live, `data` must hold `len` floats, `logit` writable.
 */
enum CvrStatus cvr_model_predict(const struct CvrModel *model,
                                 const float *data,
                                 size_t len,
                                 double *logit);

/**
 * Weighted sum of appearance, flow and depth logits. `present[i] == 0`
 * marks a missing modality, which must carry zero weight.
 *
 * # Safety
 * `logits`, `present` and `weights` must each hold 3 values.
 */
enum CvrStatus cvr_fuse_logits(const double *logits,
                               const uint8_t *present,
                               const double *weights,
                               double *out);

/**
 * Clip decisions on `n` fused logits, then the epsilon vote. Writes 1 for
 * fake and 0 for real into `is_fake`, and the fake-clip fraction.
 *
 * # Safety
 * `fused` must hold `n` values; `is_fake` writable; `fraction` may be null.
 */
enum CvrStatus cvr_decide_video(const double *fused,
                                size_t n,
                                double epsilon,
                                uint8_t *is_fake,
                                double *fraction);

/**
 * Reads a CVRT file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum CvrStatus cvr_cvrt_read(const char *path, struct CvrTensor **out);

/**
 * Number of dimensions; 0 for a null handle.
 *
 * # Safety
 * `t` must be live or null.
 */
size_t cvr_tensor_ndim(const struct CvrTensor *t);

/**
 * Size of dimension `axis`; 0 when out of range.
 *
 * # Safety
 * `t` must be live or null.
 */
size_t cvr_tensor_dim(const struct CvrTensor *t, size_t axis);

/**
 * Element count.
 *
 * # Safety
 * `t` must be live or null.
 */
size_t cvr_tensor_len(const struct CvrTensor *t);

/**
 * Row-major values, owned by the handle.
 *
 * # Safety
 * `t` must be live or null.
 */
const float *cvr_tensor_data(const struct CvrTensor *t);

/**
 * # Safety
 * `t` must come from [`cvr_cvrt_read`] and not be used afterwards.
 */
void cvr_tensor_free(struct CvrTensor *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CVR_H */
