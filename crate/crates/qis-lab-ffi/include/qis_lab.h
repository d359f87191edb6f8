#ifndef QIS_LAB_H
#define QIS_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum QlStatus {
  QL_STATUS_OK = 0,
  QL_STATUS_NULL_ARGUMENT = 1,
  QL_STATUS_INVALID_ARGUMENT = 2,
  QL_STATUS_IO = 3,
  QL_STATUS_BAD_FILE = 4,
  QL_STATUS_INTERNAL = 5,
} QlStatus;

/**
 * A split vector-quantization codec model with its sub-codebook partitions.
 */
typedef struct QlCodec QlCodec;

/**
 * A detector: network parameters plus their architecture configuration.
 */
typedef struct QlDetector QlDetector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *ql_last_error(void);

/**
 * Build the default codec model (codebook sizes 128/32/32) from a seed.
 */
struct QlCodec *ql_codec_new_default(uint64_t seed);

/**
 * Release a codec handle. Null is ignored.
 */
void ql_codec_free(struct QlCodec *codec);

/**
 * Number of codebook entries per track, written to `sizes_out[3]`.
 *
 * # Safety
 * `sizes_out` must point to at least 3 writable u32 values.
 */
enum QlStatus ql_codec_sizes(const struct QlCodec *codec, uint32_t *sizes_out);

/**
 * Generate a QIS sample of `t` frames at the given embedding rate (0 for a
 * cover sample). Indices are written row-major to `indices_out[t * 3]`.
 *
 * # Safety
 * `indices_out` must point to at least `t * 3` writable u32 values.
 */
enum QlStatus ql_codec_gen_qis(const struct QlCodec *codec,
                               size_t t,
                               double rate,
                               uint64_t seed,
                               uint32_t *indices_out);

/**
 * Build a freshly initialized detector with the default architecture for
 * the default codec vocabulary.
 */
struct QlDetector *ql_detector_new_default(uint64_t seed);

/**
 * Load a detector from a parameter file. Returns null on failure; see
 * `ql_last_error`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct QlDetector *ql_detector_load(const char *path);

/**
 * Save a detector to a parameter file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
enum QlStatus ql_detector_save(const struct QlDetector *detector, const char *path);

/**
 * Release a detector handle. Null is ignored.
 */
void ql_detector_free(struct QlDetector *detector);

/**
 * Minimum number of frames the detector accepts per sample.
 */
size_t ql_detector_min_frames(const struct QlDetector *detector);

/**
 * Classify one sample of `t` frames given row-major `indices[t * 3]`.
 * Writes the stego probability and the label (0 cover, 1 stego).
 *
 * # Safety
 * `indices` must point to at least `t * 3` readable u32 values;
 * `prob_stego_out` and `label_out` must be writable.
 */
enum QlStatus ql_detector_predict(const struct QlDetector *detector,
                                  const uint32_t *indices,
                                  size_t t,
                                  double *prob_stego_out,
                                  int32_t *label_out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* QIS_LAB_H */
