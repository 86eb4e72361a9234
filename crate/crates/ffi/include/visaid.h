#ifndef VISAID_H
#define VISAID_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum VisaidStatus {
  VISAID_STATUS_OK = 0,
  VISAID_STATUS_NULL_POINTER = 1,
  VISAID_STATUS_INVALID_UTF8 = 2,
  VISAID_STATUS_PARSE_ERROR = 3,
  VISAID_STATUS_INVALID_ARGUMENT = 4,
  VISAID_STATUS_MISSING_DEPTH = 5,
  VISAID_STATUS_PANIC = 6,
} VisaidStatus;

/**
 * Parsed markup document. Opaque to C callers.
 */
typedef struct VisaidDoc VisaidDoc;

typedef struct VisaidTraceMetrics {
  double mae;
  double rmse;
} VisaidTraceMetrics;

/**
 * Point in the normalized 0..=999 frame.
 */
typedef struct VisaidNormPoint {
  uint16_t x;
  uint16_t y;
} VisaidNormPoint;

/**
 * Optimizer settings for [`visaid_lift`].
 */
typedef struct VisaidLiftConfig {
  double step_size;
  size_t max_iters;
  double tol;
} VisaidLiftConfig;

/**
 * Pinhole intrinsics; `depth_scale` is raw depth units per meter.
 */
typedef struct VisaidCamera {
  double fx;
  double fy;
  double cx;
  double cy;
  double depth_scale;
} VisaidCamera;

typedef struct VisaidPoint3 {
  double x;
  double y;
  double z;
} VisaidPoint3;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *visaid_last_error(void);

/**
 * Parses NUL-terminated UTF-8 markup. On a parse error `err_offset`
 * (optional) receives the byte offset of the failure.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string; `out` must be writable;
 * `err_offset` may be null.
 */
enum VisaidStatus visaid_parse(const char *text, struct VisaidDoc **out, size_t *err_offset);

/**
 * Serializes a document to JSON. Release the string with
 * [`visaid_string_free`].
 *
 * # Safety
 * `doc` must come from [`visaid_parse`]; `out_json` must be writable.
 */
enum VisaidStatus visaid_doc_to_json(const struct VisaidDoc *doc, char **out_json);

/**
 * Canonical markup text of a document. Release with [`visaid_string_free`].
 *
 * # Safety
 * `doc` must come from [`visaid_parse`]; `out_text` must be writable.
 */
enum VisaidStatus visaid_doc_to_markup(const struct VisaidDoc *doc, char **out_text);

/**
 * # Safety
 * `doc` must come from [`visaid_parse`] and not be freed twice. Null is a no-op.
 */
void visaid_doc_free(struct VisaidDoc *doc);

/**
 * # Safety
 * `s` must come from this library and not be freed twice. Null is a no-op.
 */
void visaid_string_free(char *s);

/**
 * MAE and RMSE between two traces given as interleaved `x, y` arrays in the
 * normalized frame. The prediction is resampled to the ground-truth length
 * when the lengths differ.
 *
 * # Safety
 * `pred` and `gt` must hold `2 * pred_len` and `2 * gt_len` doubles; `out`
 * must be writable.
 */
enum VisaidStatus visaid_trace_metrics(const double *pred,
                                       size_t pred_len,
                                       const double *gt,
                                       size_t gt_len,
                                       struct VisaidTraceMetrics *out);

/**
 * Fraction of points inside an inclusive normalized box `[x1, y1, x2, y2]`.
 *
 * # Safety
 * `points` must hold `len` elements; `bbox` four; `out` must be writable.
 */
enum VisaidStatus visaid_point_accuracy_box(const struct VisaidNormPoint *points,
                                            size_t len,
                                            const uint16_t *bbox,
                                            double *out);

/**
 * Fraction of points that land on a nonzero pixel of a row-major
 * `width × height` mask.
 *
 * # Safety
 * `points` must hold `len` elements; `mask` `width * height` bytes; `out`
 * must be writable.
 */
enum VisaidStatus visaid_point_accuracy_mask(const struct VisaidNormPoint *points,
                                             size_t len,
                                             const uint8_t *mask,
                                             uint32_t width,
                                             uint32_t height,
                                             double *out);

/**
 * Resamples a pixel track (interleaved `u, v`) to `n` points at equal arc
 * length along its chord-length cubic spline, normalized to the image.
 *
 * # Safety
 * `track` must hold `2 * len` doubles; `out` must be writable for `n` points.
 */
enum VisaidStatus visaid_resample_equidistant(const double *track,
                                              size_t len,
                                              uint32_t width,
                                              uint32_t height,
                                              size_t n,
                                              struct VisaidNormPoint *out);

/**
 * Default optimizer settings.
 */
struct VisaidLiftConfig visaid_lift_config_default(void);

/**
 * Back-projects a normalized trace with per-point raw depths, optionally
 * optimizing the interior depths first. `config` may be null for defaults.
 *
 * # Safety
 * `trace` and `depths` must hold `len` elements; `camera` must be valid;
 * `out` must be writable for `len` points.
 */
enum VisaidStatus visaid_lift(const struct VisaidNormPoint *trace,
                              const double *depths,
                              size_t len,
                              uint32_t width,
                              uint32_t height,
                              const struct VisaidCamera *camera,
                              bool optimize,
                              const struct VisaidLiftConfig *config,
                              struct VisaidPoint3 *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VISAID_H */
