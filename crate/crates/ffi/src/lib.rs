//! C ABI for the strokeopt rasterizer and optimizer.
//!
//! Sketches and images are opaque heap handles created and freed through
//! this API. Every fallible function returns a [`StrokeoptStatus`]; on
//! failure, [`strokeopt_last_error`] describes what went wrong. No panic
//! crosses the boundary.
//!
//! Control-point parameters use the flat layout of the Rust API:
//! stroke by stroke, `x0, y0, x1, y1, ...`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use strokeopt::geometry::{CanvasSize, Point, Sketch, Stroke};
use strokeopt::loss::{pixel_l2, PixelL2Loss};
use strokeopt::optimize::{run_single, OptConfig, StopReason};
use strokeopt::raster::{composite_to_rgb, render, render_backward, PixelGrad, RasterConfig, RasterImage};
use strokeopt::svg::{parse_svg, to_svg};
use strokeopt::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrokeoptStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument is outside its domain.
    InvalidArgument = 2,
    /// Buffer lengths or image shapes do not agree.
    ShapeMismatch = 3,
    /// A NaN or infinity appeared.
    Numeric = 4,
    /// Malformed text input, such as an SVG document.
    Parse = 5,
    /// File or other I/O failure.
    Io = 6,
    /// The optimizer could not complete.
    RunFailed = 7,
    /// An internal panic was caught.
    Panic = 8,
}

/// Opaque sketch handle.
pub struct StrokeoptSketch {
    inner: Sketch,
}

/// Opaque image handle with `f64` pixels, row-major, channels interleaved.
pub struct StrokeoptImage {
    inner: RasterImage,
}

/// Settings for [`strokeopt_optimize_l2`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StrokeoptL2Options {
    pub learning_rate: f64,
    pub max_iters: u32,
    pub eval_every: u32,
    /// Stop when successive evaluations differ by less than this.
    pub converge_delta: f64,
    pub softness: f64,
}

/// How an optimization ended.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrokeoptStopReason {
    Converged = 0,
    MaxIters = 1,
    Aborted = 2,
}

/// Summary of an optimization run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StrokeoptL2Result {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Iteration of the last evaluation.
    pub iterations: u32,
    pub stop_reason: StrokeoptStopReason,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: StrokeoptStatus,
    message: String,
}

impl Failure {
    fn new(status: StrokeoptStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn null(name: &str) -> Self {
        Self::new(StrokeoptStatus::NullPointer, format!("{name} is NULL"))
    }

    fn shape(message: impl Into<String>) -> Self {
        Self::new(StrokeoptStatus::ShapeMismatch, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Domain(_) => StrokeoptStatus::InvalidArgument,
            Error::Shape(_) => StrokeoptStatus::ShapeMismatch,
            Error::Numeric(_) => StrokeoptStatus::Numeric,
            Error::Parse(_) => StrokeoptStatus::Parse,
            Error::Io(_) | Error::Image(_) | Error::Transport(_) => StrokeoptStatus::Io,
            Error::Protocol(_) | Error::Remote(_) | Error::RunFailed(_) => StrokeoptStatus::RunFailed,
        };
        Self::new(status, e.to_string())
    }
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> StrokeoptStatus {
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|payload| {
        let detail = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure::new(StrokeoptStatus::Panic, format!("internal panic: {detail}")))
    });
    match outcome {
        Ok(()) => StrokeoptStatus::Ok,
        Err(failure) => {
            set_last_error(failure.message);
            failure.status
        }
    }
}

unsafe fn borrow<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| Failure::null(name))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| Failure::null(name))
}

/// A NULL pointer is accepted for an empty slice.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::null(name));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

fn raster_config(softness: f64) -> Result<RasterConfig, Failure> {
    let config = RasterConfig { softness, ..RasterConfig::default() };
    config.validate()?;
    Ok(config)
}

fn copy_into(dst: &mut [f64], src: &[f64], what: &str) -> Result<(), Failure> {
    if dst.len() != src.len() {
        return Err(Failure::shape(format!("{what} buffer holds {} values, need {}", dst.len(), src.len())));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Message of the most recent failed call on this thread, or NULL.
///
/// The string stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn strokeopt_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn strokeopt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default settings: learning rate 1, 2000 iterations, evaluation every 10,
/// convergence threshold 1e-5, softness 0.7.
#[no_mangle]
pub extern "C" fn strokeopt_l2_options_default() -> StrokeoptL2Options {
    let opt = OptConfig::default();
    StrokeoptL2Options {
        learning_rate: opt.lr,
        max_iters: opt.max_iters as u32,
        eval_every: opt.eval_every as u32,
        converge_delta: opt.converge_delta,
        softness: RasterConfig::default().softness,
    }
}

/// Creates a sketch of `stroke_count` strokes on a `canvas_width` by
/// `canvas_height` canvas.
///
/// Stroke `i` has `points_per_stroke[i]` control points (2 to 4) and width
/// `widths[i]`; `coords` holds all points as `x, y` pairs in stroke order.
///
/// # Safety
/// Array arguments must point to at least as many readable elements as
/// their lengths state. `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_sketch_new(
    canvas_width: u32,
    canvas_height: u32,
    points_per_stroke: *const u32,
    widths: *const f64,
    stroke_count: usize,
    coords: *const f64,
    coord_count: usize,
    out: *mut *mut StrokeoptSketch,
) -> StrokeoptStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let counts = slice(points_per_stroke, stroke_count, "points_per_stroke")?;
        let widths = slice(widths, stroke_count, "widths")?;
        let coords = slice(coords, coord_count, "coords")?;
        let needed: usize = counts.iter().map(|&c| 2 * c as usize).sum();
        if needed != coord_count {
            return Err(Failure::shape(format!("strokes need {needed} coordinates, got {coord_count}")));
        }
        let mut rest = coords;
        let mut strokes = Vec::with_capacity(stroke_count);
        for (&count, &width) in counts.iter().zip(widths) {
            let (head, tail) = rest.split_at(2 * count as usize);
            rest = tail;
            let points = head.chunks_exact(2).map(|p| Point::new(p[0], p[1])).collect();
            strokes.push(Stroke::new(points, width)?);
        }
        let sketch = Sketch::new(strokes, CanvasSize::new(canvas_width, canvas_height))?;
        *out = Box::into_raw(Box::new(StrokeoptSketch { inner: sketch }));
        Ok(())
    })
}

/// Parses an SVG document written by [`strokeopt_sketch_to_svg`].
///
/// # Safety
/// `svg` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_sketch_from_svg(
    svg: *const c_char,
    out: *mut *mut StrokeoptSketch,
) -> StrokeoptStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if svg.is_null() {
            return Err(Failure::null("svg"));
        }
        let text = CStr::from_ptr(svg)
            .to_str()
            .map_err(|e| Failure::new(StrokeoptStatus::Parse, format!("svg is not UTF-8: {e}")))?;
        *out = Box::into_raw(Box::new(StrokeoptSketch { inner: parse_svg(text)? }));
        Ok(())
    })
}

/// Releases a sketch. NULL is ignored.
///
/// # Safety
/// `sketch` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_sketch_free(sketch: *mut StrokeoptSketch) {
    if !sketch.is_null() {
        drop(Box::from_raw(sketch));
    }
}

/// Number of strokes, or 0 for NULL.
///
/// # Safety
/// `sketch` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_sketch_stroke_count(sketch: *const StrokeoptSketch) -> usize {
    sketch.as_ref().map_or(0, |s| s.inner.len())
}

/// Number of control-point parameters, or 0 for NULL.
///
/// # Safety
/// `sketch` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_sketch_param_len(sketch: *const StrokeoptSketch) -> usize {
    sketch.as_ref().map_or(0, |s| s.inner.param_len())
}

/// Copies the control-point parameters into `out`, which must hold exactly
/// [`strokeopt_sketch_param_len`] values.
///
/// # Safety
/// `sketch` must be a live handle and `out` must have `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_sketch_get_params(
    sketch: *const StrokeoptSketch,
    out: *mut f64,
    len: usize,
) -> StrokeoptStatus {
    guard(|| {
        let sketch = borrow(sketch, "sketch")?;
        copy_into(slice_mut(out, len, "out")?, &sketch.inner.to_params(), "params")
    })
}

/// Replaces the control-point parameters; the sketch is unchanged on error.
///
/// # Safety
/// `sketch` must be a live handle and `params` must have `len` readable values.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_sketch_set_params(
    sketch: *mut StrokeoptSketch,
    params: *const f64,
    len: usize,
) -> StrokeoptStatus {
    guard(|| {
        let sketch = out_ref(sketch, "sketch")?;
        sketch.inner = sketch.inner.with_params(slice(params, len, "params")?)?;
        Ok(())
    })
}

/// Writes the sketch as an SVG document into a new string owned by the
/// caller; release it with [`strokeopt_string_free`].
///
/// # Safety
/// `sketch` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_sketch_to_svg(
    sketch: *const StrokeoptSketch,
    out: *mut *mut c_char,
) -> StrokeoptStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let sketch = borrow(sketch, "sketch")?;
        let text = CString::new(to_svg(&sketch.inner)).expect("svg text has no NUL bytes");
        *out = text.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates an image from `width * height * channels` values in `[0, 1]`.
///
/// # Safety
/// `data` must have `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_image_new(
    width: u32,
    height: u32,
    channels: u32,
    data: *const f64,
    len: usize,
    out: *mut *mut StrokeoptImage,
) -> StrokeoptStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let image = RasterImage::new(width, height, channels, slice(data, len, "data")?.to_vec())?;
        *out = Box::into_raw(Box::new(StrokeoptImage { inner: image }));
        Ok(())
    })
}

/// Releases an image. NULL is ignored.
///
/// # Safety
/// `image` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_image_free(image: *mut StrokeoptImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Reports the image shape; any output pointer may be NULL.
///
/// # Safety
/// `image` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_image_shape(
    image: *const StrokeoptImage,
    width: *mut u32,
    height: *mut u32,
    channels: *mut u32,
) -> StrokeoptStatus {
    guard(|| {
        let (w, h, c) = borrow(image, "image")?.inner.shape();
        for (dst, v) in [(width, w), (height, h), (channels, c)] {
            if let Some(dst) = dst.as_mut() {
                *dst = v;
            }
        }
        Ok(())
    })
}

/// Borrows the pixel buffer. The pointer stays valid until the image is
/// freed.
///
/// # Safety
/// `image` must be a live handle; `data` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_image_data(
    image: *const StrokeoptImage,
    data: *mut *const f64,
    len: *mut usize,
) -> StrokeoptStatus {
    guard(|| {
        let pixels = borrow(image, "image")?.inner.data();
        *out_ref(data, "data")? = pixels.as_ptr();
        *out_ref(len, "len")? = pixels.len();
        Ok(())
    })
}

/// Renders a sketch to a new 1-channel image of its canvas size.
///
/// # Safety
/// `sketch` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_render(
    sketch: *const StrokeoptSketch,
    softness: f64,
    out: *mut *mut StrokeoptImage,
) -> StrokeoptStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let image = render(&borrow(sketch, "sketch")?.inner, &raster_config(softness)?)?;
        *out = Box::into_raw(Box::new(StrokeoptImage { inner: image }));
        Ok(())
    })
}

/// Pulls a gradient with respect to the rendered 1-channel image back to
/// the control points.
///
/// `pixel_grad` holds `width * height` values; `grad_out` receives
/// [`strokeopt_sketch_param_len`] values.
///
/// # Safety
/// `sketch` must be a live handle; the buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_render_backward(
    sketch: *const StrokeoptSketch,
    softness: f64,
    pixel_grad: *const f64,
    pixel_grad_len: usize,
    grad_out: *mut f64,
    grad_out_len: usize,
) -> StrokeoptStatus {
    guard(|| {
        let sketch = &borrow(sketch, "sketch")?.inner;
        let canvas = sketch.canvas();
        let pixel_grad =
            PixelGrad::new(canvas.width, canvas.height, 1, slice(pixel_grad, pixel_grad_len, "pixel_grad")?.to_vec())?;
        let grad = render_backward(sketch, &raster_config(softness)?, &pixel_grad)?;
        copy_into(slice_mut(grad_out, grad_out_len, "grad_out")?, &grad, "gradient")
    })
}

/// Mean squared error between two images of equal shape. When `grad_out`
/// is not NULL it receives the gradient with respect to `sketch`, one value
/// per pixel value.
///
/// # Safety
/// Image handles must be live; `loss` writable; `grad_out` NULL or holding
/// `grad_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_pixel_l2(
    sketch: *const StrokeoptImage,
    target: *const StrokeoptImage,
    loss: *mut f64,
    grad_out: *mut f64,
    grad_len: usize,
) -> StrokeoptStatus {
    guard(|| {
        let loss = out_ref(loss, "loss")?;
        let report = pixel_l2(&borrow(sketch, "sketch")?.inner, &borrow(target, "target")?.inner)?;
        if !grad_out.is_null() {
            copy_into(slice_mut(grad_out, grad_len, "grad_out")?, report.pixel_grad.data(), "gradient")?;
        }
        *loss = report.total;
        Ok(())
    })
}

/// Optimizes `init` toward `target` under mean squared pixel error and
/// returns the result as a new sketch.
///
/// `target` must match the canvas size and have 1 or 3 channels. `options`
/// may be NULL for defaults. `result` may be NULL.
///
/// # Safety
/// Handles must be live; `out` writable; `result` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn strokeopt_optimize_l2(
    init: *const StrokeoptSketch,
    target: *const StrokeoptImage,
    options: *const StrokeoptL2Options,
    out: *mut *mut StrokeoptSketch,
    result: *mut StrokeoptL2Result,
) -> StrokeoptStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let init = &borrow(init, "init")?.inner;
        let target = &borrow(target, "target")?.inner;
        let options = options.as_ref().copied().unwrap_or_else(|| strokeopt_l2_options_default());
        let canvas = init.canvas();
        if (target.width(), target.height()) != (canvas.width, canvas.height) {
            return Err(Failure::shape(format!(
                "target is {}x{}, canvas is {}x{}",
                target.width(),
                target.height(),
                canvas.width,
                canvas.height
            )));
        }
        let target = match target.channels() {
            1 => composite_to_rgb(target)?,
            3 => target.clone(),
            c => return Err(Failure::shape(format!("target must have 1 or 3 channels, got {c}"))),
        };
        let config = OptConfig {
            lr: options.learning_rate,
            max_iters: options.max_iters as usize,
            eval_every: options.eval_every as usize,
            converge_delta: options.converge_delta,
            seeds: 1,
            ..OptConfig::default()
        };
        let run = run_single(init, &mut PixelL2Loss::new(target), &raster_config(options.softness)?, &config, 0)?;
        if let Some(result) = result.as_mut() {
            *result = StrokeoptL2Result {
                initial_loss: run.eval_losses.first().map_or(f64::NAN, |e| e.loss),
                final_loss: run.final_loss().unwrap_or(f64::NAN),
                iterations: run.eval_losses.last().map_or(0, |e| e.iter as u32),
                stop_reason: match run.stop_reason {
                    StopReason::Converged => StrokeoptStopReason::Converged,
                    StopReason::MaxIters => StrokeoptStopReason::MaxIters,
                    StopReason::Aborted => StrokeoptStopReason::Aborted,
                },
            };
        }
        *out = Box::into_raw(Box::new(StrokeoptSketch { inner: run.final_sketch }));
        Ok(())
    })
}
