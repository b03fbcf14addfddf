#ifndef NAFX_H
#define NAFX_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum NafxStatus {
  NAFX_STATUS_OK = 0,
  NAFX_STATUS_NULL_POINTER = 1,
  NAFX_STATUS_INVALID_ARGUMENT = 2,
  NAFX_STATUS_IO = 3,
  NAFX_STATUS_BAD_CHECKPOINT = 4,
  NAFX_STATUS_NON_FINITE = 5,
  NAFX_STATUS_PANIC = 6,
} NafxStatus;

/**
 * A loaded model. Opaque to C.
 */
typedef struct NafxModel NafxModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a checkpoint file. On success `*out` owns a model that must be
 * released with [`nafx_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum NafxStatus nafx_model_load(const char *path, struct NafxModel **out);

/**
 * Loads a checkpoint from memory.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` be writable.
 */
enum NafxStatus nafx_model_load_bytes(const uint8_t *data, size_t len, struct NafxModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from a load function and not be freed twice.
 */
void nafx_model_free(struct NafxModel *model);

/**
 * Samples per model frame, or 0 for a null model.
 *
 * # Safety
 * `model` must be null or a live model.
 */
size_t nafx_model_frame_size(const struct NafxModel *model);

/**
 * Sample rate the model was trained at, or 0 for a null model.
 *
 * # Safety
 * `model` must be null or a live model.
 */
uint32_t nafx_model_sample_rate(const struct NafxModel *model);

/**
 * Processes `len` samples with frame hop `hop`, writing `len` samples to
 * `output`. The buffers may not overlap.
 *
 * # Safety
 * `input` and `output` must each point to `len` valid floats.
 */
enum NafxStatus nafx_model_process(const struct NafxModel *model,
                                   const float *input,
                                   size_t len,
                                   size_t hop,
                                   float *output);

/**
 * Message for the last failure on this thread; empty when none. Valid
 * until the next call into this library from the same thread.
 */
const char *nafx_last_error_message(void);

/**
 * Short name of a status code. Static storage.
 */
const char *nafx_status_str(enum NafxStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NAFX_H */
