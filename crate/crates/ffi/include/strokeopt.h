#ifndef STROKEOPT_H
#define STROKEOPT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum StrokeoptStatus {
  STROKEOPT_STATUS_OK = 0,
  // A required pointer argument was NULL.
  STROKEOPT_STATUS_NULL_POINTER = 1,
  // An argument is outside its domain.
  STROKEOPT_STATUS_INVALID_ARGUMENT = 2,
  // Buffer lengths or image shapes do not agree.
  STROKEOPT_STATUS_SHAPE_MISMATCH = 3,
  // A NaN or infinity appeared.
  STROKEOPT_STATUS_NUMERIC = 4,
  // Malformed text input, such as an SVG document.
  STROKEOPT_STATUS_PARSE = 5,
  // File or other I/O failure.
  STROKEOPT_STATUS_IO = 6,
  // The optimizer could not complete.
  STROKEOPT_STATUS_RUN_FAILED = 7,
  // An internal panic was caught.
  STROKEOPT_STATUS_PANIC = 8,
} StrokeoptStatus;

// How an optimization ended.
typedef enum StrokeoptStopReason {
  STROKEOPT_STOP_REASON_CONVERGED = 0,
  STROKEOPT_STOP_REASON_MAX_ITERS = 1,
  STROKEOPT_STOP_REASON_ABORTED = 2,
} StrokeoptStopReason;

// Opaque image handle with `f64` pixels, row-major, channels interleaved.
typedef struct StrokeoptImage StrokeoptImage;

// Opaque sketch handle.
typedef struct StrokeoptSketch StrokeoptSketch;

// Settings for [`strokeopt_optimize_l2`].
typedef struct StrokeoptL2Options {
  double learning_rate;
  uint32_t max_iters;
  uint32_t eval_every;
  // Stop when successive evaluations differ by less than this.
  double converge_delta;
  double softness;
} StrokeoptL2Options;

// Summary of an optimization run.
typedef struct StrokeoptL2Result {
  double initial_loss;
  double final_loss;
  // Iteration of the last evaluation.
  uint32_t iterations;
  enum StrokeoptStopReason stop_reason;
} StrokeoptL2Result;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failed call on this thread, or NULL.
//
// The string stays valid until the next failing call on the same thread.
const char *strokeopt_last_error(void);

// Library version as a static NUL-terminated string.
const char *strokeopt_version(void);

// Default settings: learning rate 1, 2000 iterations, evaluation every 10,
// convergence threshold 1e-5, softness 0.7.
struct StrokeoptL2Options strokeopt_l2_options_default(void);

// Creates a sketch of `stroke_count` strokes on a `canvas_width` by
// `canvas_height` canvas.
//
// Stroke `i` has `points_per_stroke[i]` control points (2 to 4) and width
// `widths[i]`; `coords` holds all points as `x, y` pairs in stroke order.
//
// # Safety
// Array arguments must point to at least as many readable elements as
// their lengths state. `out` must be writable.
enum StrokeoptStatus strokeopt_sketch_new(uint32_t canvas_width,
                                          uint32_t canvas_height,
                                          const uint32_t *points_per_stroke,
                                          const double *widths,
                                          size_t stroke_count,
                                          const double *coords,
                                          size_t coord_count,
                                          struct StrokeoptSketch **out);

// Parses an SVG document written by [`strokeopt_sketch_to_svg`].
//
// # Safety
// `svg` must be a NUL-terminated string; `out` must be writable.
enum StrokeoptStatus strokeopt_sketch_from_svg(const char *svg, struct StrokeoptSketch **out);

// Releases a sketch. NULL is ignored.
//
// # Safety
// `sketch` must come from this library and not have been freed.
void strokeopt_sketch_free(struct StrokeoptSketch *sketch);

// Number of strokes, or 0 for NULL.
//
// # Safety
// `sketch` must be NULL or a live handle.
size_t strokeopt_sketch_stroke_count(const struct StrokeoptSketch *sketch);

// Number of control-point parameters, or 0 for NULL.
//
// # Safety
// `sketch` must be NULL or a live handle.
size_t strokeopt_sketch_param_len(const struct StrokeoptSketch *sketch);

// Copies the control-point parameters into `out`, which must hold exactly
// [`strokeopt_sketch_param_len`] values.
//
// # Safety
// `sketch` must be a live handle and `out` must have `len` writable values.
enum StrokeoptStatus strokeopt_sketch_get_params(const struct StrokeoptSketch *sketch,
                                                 double *out,
                                                 size_t len);

// Replaces the control-point parameters; the sketch is unchanged on error.
//
// # Safety
// `sketch` must be a live handle and `params` must have `len` readable values.
enum StrokeoptStatus strokeopt_sketch_set_params(struct StrokeoptSketch *sketch,
                                                 const double *params,
                                                 size_t len);

// Writes the sketch as an SVG document into a new string owned by the
// caller; release it with [`strokeopt_string_free`].
//
// # Safety
// `sketch` must be a live handle and `out` writable.
enum StrokeoptStatus strokeopt_sketch_to_svg(const struct StrokeoptSketch *sketch, char **out);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void strokeopt_string_free(char *s);

// Creates an image from `width * height * channels` values in `[0, 1]`.
//
// # Safety
// `data` must have `len` readable values; `out` must be writable.
enum StrokeoptStatus strokeopt_image_new(uint32_t width,
                                         uint32_t height,
                                         uint32_t channels,
                                         const double *data,
                                         size_t len,
                                         struct StrokeoptImage **out);

// Releases an image. NULL is ignored.
//
// # Safety
// `image` must come from this library and not have been freed.
void strokeopt_image_free(struct StrokeoptImage *image);

// Reports the image shape; any output pointer may be NULL.
//
// # Safety
// `image` must be a live handle; non-NULL outputs must be writable.
enum StrokeoptStatus strokeopt_image_shape(const struct StrokeoptImage *image,
                                           uint32_t *width,
                                           uint32_t *height,
                                           uint32_t *channels);

// Borrows the pixel buffer. The pointer stays valid until the image is
// freed.
//
// # Safety
// `image` must be a live handle; `data` and `len` must be writable.
enum StrokeoptStatus strokeopt_image_data(const struct StrokeoptImage *image,
                                          const double **data,
                                          size_t *len);

// Renders a sketch to a new 1-channel image of its canvas size.
//
// # Safety
// `sketch` must be a live handle and `out` writable.
enum StrokeoptStatus strokeopt_render(const struct StrokeoptSketch *sketch,
                                      double softness,
                                      struct StrokeoptImage **out);

// Pulls a gradient with respect to the rendered 1-channel image back to
// the control points.
//
// `pixel_grad` holds `width * height` values; `grad_out` receives
// [`strokeopt_sketch_param_len`] values.
//
// # Safety
// `sketch` must be a live handle; the buffers must have the stated lengths.
enum StrokeoptStatus strokeopt_render_backward(const struct StrokeoptSketch *sketch,
                                               double softness,
                                               const double *pixel_grad,
                                               size_t pixel_grad_len,
                                               double *grad_out,
                                               size_t grad_out_len);

// Mean squared error between two images of equal shape. When `grad_out`
// is not NULL it receives the gradient with respect to `sketch`, one value
// per pixel value.
//
// # Safety
// Image handles must be live; `loss` writable; `grad_out` NULL or holding
// `grad_len` writable values.
enum StrokeoptStatus strokeopt_pixel_l2(const struct StrokeoptImage *sketch,
                                        const struct StrokeoptImage *target,
                                        double *loss,
                                        double *grad_out,
                                        size_t grad_len);

// Optimizes `init` toward `target` under mean squared pixel error and
// returns the result as a new sketch.
//
// `target` must match the canvas size and have 1 or 3 channels. `options`
// may be NULL for defaults. `result` may be NULL.
//
// # Safety
// Handles must be live; `out` writable; `result` NULL or writable.
enum StrokeoptStatus strokeopt_optimize_l2(const struct StrokeoptSketch *init,
                                           const struct StrokeoptImage *target,
                                           const struct StrokeoptL2Options *options,
                                           struct StrokeoptSketch **out,
                                           struct StrokeoptL2Result *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STROKEOPT_H */
