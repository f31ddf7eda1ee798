//! Soft-coverage rasterizer with an exact reverse pass.
//!
//! A pixel's value is the product over strokes of `1 - coverage`, where
//! coverage is a logistic ramp of the distance from the pixel center to the
//! stroke's flattened centerline. The ramp is cut to exactly zero at
//! `width / 2 + 6 * softness`; it is renormalized and, over its outermost
//! `softness`, faded in with a smoothstep so that coverage and its slope are
//! both continuous at the cut.

use serde::{Deserialize, Serialize};

use crate::geometry::{bernstein, sample_ts, Point, Sketch, Stroke};
use crate::{Error, ParamVector, Result};

/// Logistic-ramp half extent, in units of softness.
const CUTOFF_SOFTNESS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterConfig {
    /// Width of the logistic coverage ramp, in pixels.
    pub softness: f64,
    /// Flattening samples per stroke; `None` picks the per-degree default.
    pub samples_per_curve: Option<usize>,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self { softness: 0.7, samples_per_curve: None }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.softness.is_finite() && self.softness > 0.0) {
            return Err(Error::domain(format!("softness must be positive, got {}", self.softness)));
        }
        if matches!(self.samples_per_curve, Some(n) if n < 2) {
            return Err(Error::domain("samples_per_curve must be at least 2"));
        }
        Ok(())
    }
}

/// Row-major float image, `1.0` is white.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u32,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u32, data: Vec<f64>) -> Result<Self> {
        check_shape(width, height, channels, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::numeric(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Builds an image, clamping every value into `[0, 1]`.
    pub fn from_clamped(width: u32, height: u32, channels: u32, mut data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite pixel value"));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self::new(width, height, channels, data)
    }

    pub fn filled(width: u32, height: u32, channels: u32, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value.clamp(0.0, 1.0); width as usize * height as usize * channels as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn shape(&self) -> (u32, u32, u32) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: u32, y: u32, c: u32) -> f64 {
        self.data[((y * self.width + x) * self.channels + c) as usize]
    }

    /// Mean over channels; a 1-channel image is returned unchanged.
    pub fn to_gray(&self) -> RasterImage {
        if self.channels == 1 {
            return self.clone();
        }
        let c = self.channels as usize;
        let data = self.data.chunks_exact(c).map(|px| px.iter().sum::<f64>() / c as f64).collect();
        RasterImage { width: self.width, height: self.height, channels: 1, data }
    }
}

/// `∂loss/∂pixel`, laid out like the image it differentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrad {
    width: u32,
    height: u32,
    channels: u32,
    data: Vec<f64>,
}

impl PixelGrad {
    pub fn new(width: u32, height: u32, channels: u32, data: Vec<f64>) -> Result<Self> {
        check_shape(width, height, channels, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite pixel gradient"));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn zeros_like(image: &RasterImage) -> Self {
        Self { width: image.width, height: image.height, channels: image.channels, data: vec![0.0; image.data.len()] }
    }

    pub fn shape(&self) -> (u32, u32, u32) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Adjoint of [`composite_to_rgb`]: sums channels into one.
    pub fn sum_channels(&self) -> PixelGrad {
        let c = self.channels as usize;
        let data = self.data.chunks_exact(c).map(|px| px.iter().sum()).collect();
        PixelGrad { width: self.width, height: self.height, channels: 1, data }
    }

    /// `Σ grad · image`, the linear functional whose gradient this is.
    pub fn dot(&self, image: &RasterImage) -> Result<f64> {
        if self.shape() != image.shape() {
            return Err(Error::shape(format!("gradient {:?} does not match image {:?}", self.shape(), image.shape())));
        }
        Ok(self.data.iter().zip(&image.data).map(|(g, v)| g * v).sum())
    }
}

fn check_shape(width: u32, height: u32, channels: u32, len: usize) -> Result<()> {
    if channels == 0 {
        return Err(Error::shape("image must have at least one channel"));
    }
    let want = width as usize * height as usize * channels as usize;
    if want != len {
        return Err(Error::shape(format!("{width}x{height}x{channels} image needs {want} values, got {len}")));
    }
    Ok(())
}

/// Replicates a 1-channel image into 3 channels.
pub fn composite_to_rgb(image: &RasterImage) -> Result<RasterImage> {
    if image.channels != 1 {
        return Err(Error::shape(format!("expected 1 channel, got {}", image.channels)));
    }
    let data = image.data.iter().flat_map(|&v| [v, v, v]).collect();
    Ok(RasterImage { width: image.width, height: image.height, channels: 3, data })
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// A stroke flattened and bounded, ready for per-pixel queries.
struct Prepared {
    samples: Vec<Point>,
    basis: Vec<[f64; 4]>,
    half_width: f64,
    cols: (u32, u32),
    rows: (u32, u32),
}

impl Prepared {
    fn new(stroke: &Stroke, config: &RasterConfig, width: u32, height: u32) -> Result<Option<Self>> {
        if stroke.points().iter().any(|p| !p.is_finite()) {
            return Err(Error::numeric("non-finite control point"));
        }
        let count = config.samples_per_curve.unwrap_or_else(|| stroke.default_samples());
        let degree = stroke.degree();
        let basis: Vec<_> = sample_ts(count).map(|t| bernstein(degree, t)).collect();
        let samples: Vec<_> = basis
            .iter()
            .map(|b| stroke.points().iter().zip(b).fold(Point::default(), |acc, (&p, &w)| acc + p * w))
            .collect();

        let reach = stroke.width() / 2.0 + CUTOFF_SOFTNESS * config.softness;
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &samples {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        // Pixel `i` has its center at `i + 0.5`.
        let range = |lo: f64, hi: f64, limit: u32| -> Option<(u32, u32)> {
            let first = (lo - reach - 0.5).ceil().max(0.0);
            let last = (hi + reach - 0.5).floor().min(limit as f64 - 1.0);
            (first <= last).then_some((first as u32, last as u32))
        };
        let (Some(cols), Some(rows)) = (range(x0, x1, width), range(y0, y1, height)) else {
            return Ok(None);
        };
        Ok(Some(Self { samples, basis, half_width: stroke.width() / 2.0, cols, rows }))
    }

    fn covers(&self, x: u32, y: u32) -> bool {
        (self.cols.0..=self.cols.1).contains(&x) && (self.rows.0..=self.rows.1).contains(&y)
    }

    /// Nearest centerline segment to `c`. Ties go to the lowest index.
    fn nearest(&self, c: Point) -> Nearest {
        let mut best = Nearest { dist: f64::INFINITY, segment: 0, u: 0.0, offset: Point::default() };
        for (i, pair) in self.samples.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            let ab = b - a;
            let len2 = ab.dot(ab);
            let u = if len2 > 0.0 { ((c - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let offset = c - (a + ab * u);
            let dist = offset.length();
            if dist < best.dist {
                best = Nearest { dist, segment: i, u, offset };
            }
        }
        best
    }
}

struct Nearest {
    dist: f64,
    segment: usize,
    u: f64,
    /// Pixel center minus nearest centerline point.
    offset: Point,
}

struct Coverage {
    value: f64,
    /// `∂coverage/∂distance`.
    slope: f64,
}

fn coverage(dist: f64, half_width: f64, softness: f64) -> Option<Coverage> {
    let floor = logistic(-CUTOFF_SOFTNESS);
    let z = (half_width - dist) / softness;
    if z <= -CUTOFF_SOFTNESS {
        return None;
    }
    let s = logistic(z);
    let scale = 1.0 / (1.0 - floor);
    let ramp = (s - floor) * scale;
    let ramp_slope = -s * (1.0 - s) / softness * scale;
    let t = z + CUTOFF_SOFTNESS;
    if t >= 1.0 {
        return Some(Coverage { value: ramp, slope: ramp_slope });
    }
    let fade = t * t * (3.0 - 2.0 * t);
    let fade_slope = -6.0 * t * (1.0 - t) / softness;
    Some(Coverage { value: ramp * fade, slope: ramp_slope * fade + ramp * fade_slope })
}

fn prepare(sketch: &Sketch, config: &RasterConfig) -> Result<Vec<(usize, Prepared)>> {
    config.validate()?;
    let canvas = sketch.canvas();
    let mut out = Vec::with_capacity(sketch.len());
    for (i, stroke) in sketch.strokes().iter().enumerate() {
        if let Some(p) = Prepared::new(stroke, config, canvas.width, canvas.height)? {
            out.push((i, p));
        }
    }
    Ok(out)
}

fn pixel_center(x: u32, y: u32) -> Point {
    Point::new(x as f64 + 0.5, y as f64 + 0.5)
}

/// Renders `sketch` to a 1-channel image of its canvas size.
pub fn render(sketch: &Sketch, config: &RasterConfig) -> Result<RasterImage> {
    let prepared = prepare(sketch, config)?;
    let canvas = sketch.canvas();
    let mut image = RasterImage::filled(canvas.width, canvas.height, 1, 1.0);
    for y in 0..canvas.height {
        for x in 0..canvas.width {
            let c = pixel_center(x, y);
            let mut value = 1.0;
            for (_, stroke) in prepared.iter().filter(|(_, s)| s.covers(x, y)) {
                if let Some(cov) = coverage(stroke.nearest(c).dist, stroke.half_width, config.softness) {
                    value *= 1.0 - cov.value;
                }
            }
            image.data[(y * canvas.width + x) as usize] = value;
        }
    }
    Ok(image)
}

/// Pulls a 1-channel pixel gradient back to control-point coordinates.
///
/// The result is laid out like [`Sketch::to_params`].
pub fn render_backward(sketch: &Sketch, config: &RasterConfig, pixel_grad: &PixelGrad) -> Result<ParamVector> {
    let canvas = sketch.canvas();
    if pixel_grad.shape() != (canvas.width, canvas.height, 1) {
        return Err(Error::shape(format!(
            "pixel gradient {:?} does not match 1-channel {}x{} render",
            pixel_grad.shape(),
            canvas.width,
            canvas.height
        )));
    }
    let prepared = prepare(sketch, config)?;
    let mut sample_grads: Vec<Vec<Point>> =
        prepared.iter().map(|(_, s)| vec![Point::default(); s.samples.len()]).collect();

    struct Hit {
        slot: usize,
        transmittance: f64,
        slope: f64,
        nearest: Nearest,
    }
    let mut hits: Vec<Hit> = Vec::new();
    let mut suffix: Vec<f64> = Vec::new();

    for y in 0..canvas.height {
        for x in 0..canvas.width {
            let g = pixel_grad.data[(y * canvas.width + x) as usize];
            if g == 0.0 {
                continue;
            }
            let c = pixel_center(x, y);
            hits.clear();
            for (slot, (_, stroke)) in prepared.iter().enumerate() {
                if !stroke.covers(x, y) {
                    continue;
                }
                let nearest = stroke.nearest(c);
                if let Some(cov) = coverage(nearest.dist, stroke.half_width, config.softness) {
                    hits.push(Hit { slot, transmittance: 1.0 - cov.value, slope: cov.slope, nearest });
                }
            }
            if hits.is_empty() {
                continue;
            }
            // Product of every other stroke's transmittance, without division.
            suffix.clear();
            suffix.resize(hits.len() + 1, 1.0);
            for i in (0..hits.len()).rev() {
                suffix[i] = suffix[i + 1] * hits[i].transmittance;
            }
            let mut prefix = 1.0;
            for (i, hit) in hits.iter().enumerate() {
                let others = prefix * suffix[i + 1];
                prefix *= hit.transmittance;
                let near = &hit.nearest;
                if near.dist == 0.0 {
                    continue;
                }
                // value = others * (1 - cov), cov = f(dist), dist = |c - q|.
                let d_dist = -g * others * hit.slope;
                let d_q = near.offset * (-d_dist / near.dist);
                let grads = &mut sample_grads[hit.slot];
                grads[near.segment] = grads[near.segment] + d_q * (1.0 - near.u);
                grads[near.segment + 1] = grads[near.segment + 1] + d_q * near.u;
            }
        }
    }

    let mut out = ParamVector::zeros(sketch.param_len());
    let offsets: Vec<usize> = sketch
        .strokes()
        .iter()
        .scan(0, |acc, s| {
            let start = *acc;
            *acc += 2 * s.points().len();
            Some(start)
        })
        .collect();
    for ((index, stroke), grads) in prepared.iter().zip(&sample_grads) {
        let base = offsets[*index];
        let n = sketch.strokes()[*index].points().len();
        for (basis, g) in stroke.basis.iter().zip(grads) {
            for (j, &b) in basis[..n].iter().enumerate() {
                out.0[base + 2 * j] += b * g.x;
                out.0[base + 2 * j + 1] += b * g.y;
            }
        }
    }
    Ok(out)
}
