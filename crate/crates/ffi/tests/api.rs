use std::ffi::{CStr, CString};
use std::ptr;

use strokeopt::geometry::{CanvasSize, Point, Sketch, Stroke};
use strokeopt::raster::{render, render_backward, PixelGrad, RasterConfig};
use strokeopt_ffi::*;

fn last_error() -> String {
    let p = strokeopt_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

/// A line and a cubic on a 16x16 canvas.
fn make_sketch() -> *mut StrokeoptSketch {
    let counts = [2u32, 4];
    let widths = [1.5, 2.0];
    let coords = [2.0, 3.0, 12.0, 9.0, 1.0, 14.0, 5.0, 2.0, 10.0, 15.0, 14.0, 4.0];
    let mut out = ptr::null_mut();
    let status = unsafe {
        strokeopt_sketch_new(16, 16, counts.as_ptr(), widths.as_ptr(), 2, coords.as_ptr(), coords.len(), &mut out)
    };
    assert_eq!(status, StrokeoptStatus::Ok);
    out
}

fn rust_sketch() -> Sketch {
    let p = |x, y| Point::new(x, y);
    Sketch::new(
        vec![
            Stroke::new(vec![p(2.0, 3.0), p(12.0, 9.0)], 1.5).unwrap(),
            Stroke::new(vec![p(1.0, 14.0), p(5.0, 2.0), p(10.0, 15.0), p(14.0, 4.0)], 2.0).unwrap(),
        ],
        CanvasSize::square(16),
    )
    .unwrap()
}

unsafe fn image_values(image: *const StrokeoptImage) -> Vec<f64> {
    let mut data = ptr::null();
    let mut len = 0;
    assert_eq!(strokeopt_image_data(image, &mut data, &mut len), StrokeoptStatus::Ok);
    std::slice::from_raw_parts(data, len).to_vec()
}

#[test]
fn sketch_parameters_round_trip() {
    let sketch = make_sketch();
    unsafe {
        assert_eq!(strokeopt_sketch_stroke_count(sketch), 2);
        assert_eq!(strokeopt_sketch_param_len(sketch), 12);
        let mut params = vec![0.0; 12];
        assert_eq!(strokeopt_sketch_get_params(sketch, params.as_mut_ptr(), 12), StrokeoptStatus::Ok);
        assert_eq!(params, rust_sketch().to_params().to_vec());

        params[0] = 4.5;
        assert_eq!(strokeopt_sketch_set_params(sketch, params.as_ptr(), 12), StrokeoptStatus::Ok);
        let mut back = vec![0.0; 12];
        strokeopt_sketch_get_params(sketch, back.as_mut_ptr(), 12);
        assert_eq!(back[0], 4.5);

        assert_eq!(strokeopt_sketch_get_params(sketch, back.as_mut_ptr(), 11), StrokeoptStatus::ShapeMismatch);
        params[3] = f64::NAN;
        assert_eq!(strokeopt_sketch_set_params(sketch, params.as_ptr(), 12), StrokeoptStatus::Numeric);
        strokeopt_sketch_get_params(sketch, back.as_mut_ptr(), 12);
        assert_eq!(back[3], 9.0, "failed update must leave the sketch unchanged");
        strokeopt_sketch_free(sketch);
    }
}

#[test]
fn render_and_backward_match_the_rust_api() {
    let sketch = make_sketch();
    unsafe {
        let mut image = ptr::null_mut();
        assert_eq!(strokeopt_render(sketch, 0.7, &mut image), StrokeoptStatus::Ok);
        let (mut w, mut h, mut c) = (0, 0, 0);
        assert_eq!(strokeopt_image_shape(image, &mut w, &mut h, &mut c), StrokeoptStatus::Ok);
        assert_eq!((w, h, c), (16, 16, 1));
        let expected = render(&rust_sketch(), &RasterConfig::default()).unwrap();
        assert_eq!(image_values(image), expected.data());

        let pixel_grad: Vec<f64> = (0..256).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5).collect();
        let mut grad = vec![0.0; 12];
        let status = strokeopt_render_backward(sketch, 0.7, pixel_grad.as_ptr(), 256, grad.as_mut_ptr(), 12);
        assert_eq!(status, StrokeoptStatus::Ok);
        let want = render_backward(
            &rust_sketch(),
            &RasterConfig::default(),
            &PixelGrad::new(16, 16, 1, pixel_grad.clone()).unwrap(),
        )
        .unwrap();
        assert_eq!(grad, want.to_vec());

        let status = strokeopt_render_backward(sketch, 0.7, pixel_grad.as_ptr(), 255, grad.as_mut_ptr(), 12);
        assert_eq!(status, StrokeoptStatus::ShapeMismatch);
        assert_eq!(strokeopt_render(sketch, -1.0, &mut image), StrokeoptStatus::InvalidArgument);
        strokeopt_image_free(image);
        strokeopt_sketch_free(sketch);
    }
}

#[test]
fn pixel_l2_reports_loss_and_gradient() {
    unsafe {
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(strokeopt_image_new(2, 1, 1, [0.0, 1.0].as_ptr(), 2, &mut a), StrokeoptStatus::Ok);
        assert_eq!(strokeopt_image_new(2, 1, 1, [0.5, 0.5].as_ptr(), 2, &mut b), StrokeoptStatus::Ok);
        let mut loss = 0.0;
        let mut grad = [0.0; 2];
        assert_eq!(strokeopt_pixel_l2(a, b, &mut loss, grad.as_mut_ptr(), 2), StrokeoptStatus::Ok);
        assert_eq!(loss, 0.25);
        assert_eq!(grad, [-0.5, 0.5]);
        assert_eq!(strokeopt_pixel_l2(a, b, &mut loss, ptr::null_mut(), 0), StrokeoptStatus::Ok);

        let mut c = ptr::null_mut();
        assert_eq!(strokeopt_image_new(1, 2, 1, [0.0, 1.0].as_ptr(), 2, &mut c), StrokeoptStatus::Ok);
        assert_eq!(strokeopt_pixel_l2(a, c, &mut loss, ptr::null_mut(), 0), StrokeoptStatus::ShapeMismatch);
        assert_eq!(strokeopt_image_new(2, 1, 1, [0.0, 1.5].as_ptr(), 2, &mut c), StrokeoptStatus::Numeric);
        for img in [a, b, c] {
            strokeopt_image_free(img);
        }
    }
}

#[test]
fn svg_round_trip_through_owned_strings() {
    let sketch = make_sketch();
    unsafe {
        let mut text = ptr::null_mut();
        assert_eq!(strokeopt_sketch_to_svg(sketch, &mut text), StrokeoptStatus::Ok);
        let svg = CStr::from_ptr(text).to_str().unwrap().to_owned();
        assert!(svg.contains("viewBox=\"0 0 16 16\""));
        let mut parsed = ptr::null_mut();
        assert_eq!(strokeopt_sketch_from_svg(text, &mut parsed), StrokeoptStatus::Ok);
        strokeopt_string_free(text);
        let mut a = vec![0.0; 12];
        let mut b = vec![0.0; 12];
        strokeopt_sketch_get_params(sketch, a.as_mut_ptr(), 12);
        strokeopt_sketch_get_params(parsed, b.as_mut_ptr(), 12);
        assert_eq!(a, b);

        let bad = CString::new("<svg width=\"3\">").unwrap();
        assert_eq!(strokeopt_sketch_from_svg(bad.as_ptr(), &mut parsed), StrokeoptStatus::Parse);
        assert!(last_error().contains("viewBox"));
        strokeopt_sketch_free(parsed);
        strokeopt_sketch_free(sketch);
    }
}

#[test]
fn optimize_recovers_its_own_rendering() {
    let sketch = make_sketch();
    unsafe {
        let mut image = ptr::null_mut();
        strokeopt_render(sketch, 0.7, &mut image);
        let mut out = ptr::null_mut();
        let mut result = StrokeoptL2Result {
            initial_loss: -1.0,
            final_loss: -1.0,
            iterations: 0,
            stop_reason: StrokeoptStopReason::Aborted,
        };
        let options = strokeopt_l2_options_default();
        assert_eq!(options.max_iters, 2000);
        assert_eq!(strokeopt_optimize_l2(sketch, image, &options, &mut out, &mut result), StrokeoptStatus::Ok);
        assert_eq!(result.initial_loss, 0.0);
        assert_eq!(result.final_loss, 0.0);
        assert_eq!(result.iterations, 10);
        assert_eq!(result.stop_reason, StrokeoptStopReason::Converged);
        strokeopt_sketch_free(out);

        let mut shifted = ptr::null_mut();
        let mut params = vec![0.0; 12];
        strokeopt_sketch_get_params(sketch, params.as_mut_ptr(), 12);
        params[0] += 1.0;
        params[2] += 1.0;
        let counts = [2u32, 4];
        let widths = [1.5, 2.0];
        strokeopt_sketch_new(16, 16, counts.as_ptr(), widths.as_ptr(), 2, params.as_ptr(), 12, &mut shifted);
        let options = StrokeoptL2Options { learning_rate: 0.05, max_iters: 150, converge_delta: 0.0, ..options };
        assert_eq!(strokeopt_optimize_l2(shifted, image, &options, &mut out, &mut result), StrokeoptStatus::Ok);
        assert_eq!(result.stop_reason, StrokeoptStopReason::MaxIters);
        assert!(result.final_loss < 0.2 * result.initial_loss, "{result:?}");
        assert_eq!(strokeopt_optimize_l2(shifted, image, ptr::null(), &mut out, ptr::null_mut()), StrokeoptStatus::Ok);
        strokeopt_sketch_free(out);

        let mut small = ptr::null_mut();
        strokeopt_image_new(2, 2, 1, [1.0; 4].as_ptr(), 4, &mut small);
        assert_eq!(
            strokeopt_optimize_l2(shifted, small, ptr::null(), &mut out, ptr::null_mut()),
            StrokeoptStatus::ShapeMismatch
        );
        strokeopt_image_free(small);
        strokeopt_image_free(image);
        strokeopt_sketch_free(shifted);
        strokeopt_sketch_free(sketch);
    }
}

#[test]
fn invalid_input_sets_status_and_message() {
    unsafe {
        let mut out = ptr::null_mut();
        let counts = [5u32];
        let widths = [1.0];
        let coords = [0.0; 10];
        let status = strokeopt_sketch_new(8, 8, counts.as_ptr(), widths.as_ptr(), 1, coords.as_ptr(), 10, &mut out);
        assert_eq!(status, StrokeoptStatus::InvalidArgument);
        assert!(out.is_null());
        assert!(!last_error().is_empty());

        let status = strokeopt_sketch_new(8, 8, counts.as_ptr(), widths.as_ptr(), 1, coords.as_ptr(), 9, &mut out);
        assert_eq!(status, StrokeoptStatus::ShapeMismatch);

        let status = strokeopt_sketch_new(8, 8, ptr::null(), widths.as_ptr(), 1, coords.as_ptr(), 10, &mut out);
        assert_eq!(status, StrokeoptStatus::NullPointer);
        assert_eq!(last_error(), "points_per_stroke is NULL");

        let status = strokeopt_sketch_new(8, 8, ptr::null(), ptr::null(), 0, ptr::null(), 0, &mut out);
        assert_eq!(status, StrokeoptStatus::InvalidArgument, "a sketch needs at least one stroke");

        assert_eq!(strokeopt_render(ptr::null(), 0.7, ptr::null_mut()), StrokeoptStatus::NullPointer);
        assert_eq!(strokeopt_sketch_stroke_count(ptr::null()), 0);
        strokeopt_sketch_free(ptr::null_mut());
        strokeopt_image_free(ptr::null_mut());
        strokeopt_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(strokeopt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
