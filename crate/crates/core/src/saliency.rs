//! Stroke initialization: relevancy times XDoG edges, softmax-normalized,
//! then sampled for first control points.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::filter::{gaussian_blur, resize_bilinear, Border};
use crate::geometry::{CanvasSize, Point, Sketch, Stroke};
use crate::protocol::RegisteredTarget;
use crate::raster::RasterImage;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XdogParams {
    pub sigma: f64,
    pub k: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub phi: f64,
}

impl Default for XdogParams {
    fn default() -> Self {
        Self { sigma: 0.8, k: 1.6, tau: 0.99, epsilon: 0.01, phi: 200.0 }
    }
}

/// Edge strength in `[0, 1]`, high on edges.
///
/// `D = G_σ x - G_kσ x + (1 - τ)` is the extended difference of Gaussians
/// referenced to a white background: it agrees with `G_σ x - τ G_kσ x`
/// wherever the image is white, and does not depend on a constant offset of
/// the input. The soft threshold is `1` for `D ≥ ε` and
/// `1 + tanh(φ (D - ε))` below; edge strength is one minus that.
pub fn xdog(image: &RasterImage, params: &XdogParams) -> Result<RasterImage> {
    if image.channels() != 1 {
        return Err(Error::shape(format!("xdog needs a grayscale image, got {} channels", image.channels())));
    }
    if !(params.sigma > 0.0 && params.k > 1.0) {
        return Err(Error::domain(format!("xdog needs sigma > 0 and k > 1, got {params:?}")));
    }
    let (w, h) = (image.width() as usize, image.height() as usize);
    let narrow = gaussian_blur(image.data(), w, h, params.sigma, Border::Replicate);
    let wide = gaussian_blur(image.data(), w, h, params.k * params.sigma, Border::Replicate);
    let edges = narrow
        .iter()
        .zip(&wide)
        .map(|(n, v)| {
            let d = n - v + (1.0 - params.tau);
            let soft = if d >= params.epsilon { 1.0 } else { 1.0 + (params.phi * (d - params.epsilon)).tanh() };
            (1.0 - soft).clamp(0.0, 1.0)
        })
        .collect();
    RasterImage::new(image.width(), image.height(), 1, edges)
}

/// Non-negative saliency field at any resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevancyMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl RelevancyMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width as usize * height as usize {
            return Err(Error::shape(format!("{width}x{height} relevancy map with {} values", values.len())));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("relevancy values must be finite and non-negative"));
        }
        Ok(Self { width, height, values })
    }

    pub fn uniform(width: u32, height: u32) -> Self {
        Self { width, height, values: vec![1.0; width as usize * height as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Reads a grayscale image file; values are luminance in `[0, 1]`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_luma16();
        let (w, h) = img.dimensions();
        let values = img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
        Self::new(w, h, values)
    }

    pub fn from_registered(target: &RegisteredTarget) -> Result<Self> {
        // Attention weights are probabilities; tiny negatives are float noise.
        let values = target.relevancy.iter().map(|&v| (v as f64).max(0.0)).collect();
        Self::new(target.width, target.height, values)
    }

    /// Bilinear resample to `width x height`.
    pub fn resized(&self, width: u32, height: u32) -> RelevancyMap {
        let values =
            resize_bilinear(&self.values, self.width as usize, self.height as usize, width as usize, height as usize);
        RelevancyMap { width, height, values }
    }
}

/// Probability mass over pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionMap {
    width: u32,
    height: u32,
    probs: Vec<f64>,
}

impl DistributionMap {
    pub fn uniform(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, probs: vec![1.0 / n as f64; n] }
    }

    /// Normalizes non-negative weights; an all-zero field becomes uniform.
    pub fn from_weights(width: u32, height: u32, weights: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || weights.len() != width as usize * height as usize {
            return Err(Error::shape(format!("{width}x{height} map with {} weights", weights.len())));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain("weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if sum == 0.0 {
            return Ok(Self::uniform(width, height));
        }
        Ok(Self { width, height, probs: weights.into_iter().map(|w| w / sum).collect() })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// `softmax(relevancy ⊙ edges / temperature)` over all pixels.
pub fn build_distribution(relevancy: &RelevancyMap, edges: &RasterImage, temperature: f64) -> Result<DistributionMap> {
    if edges.channels() != 1 {
        return Err(Error::shape("edge map must be single-channel"));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::domain(format!("temperature must be positive, got {temperature}")));
    }
    let (w, h) = (edges.width(), edges.height());
    let relevancy = relevancy.resized(w, h);
    let logits: Vec<f64> = relevancy.values.iter().zip(edges.data()).map(|(r, e)| r * e / temperature).collect();
    if logits.iter().all(|&l| l == 0.0) {
        return Ok(DistributionMap::uniform(w, h));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    DistributionMap::from_weights(w, h, logits.into_iter().map(|l| (l - max).exp()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitParams {
    pub strokes: usize,
    /// Control points per stroke, 2 to 4.
    pub control_points: usize,
    /// Neighbor radius as a fraction of the shorter canvas side.
    pub radius: f64,
    pub width: f64,
}

impl Default for InitParams {
    fn default() -> Self {
        Self { strokes: 16, control_points: 4, radius: 0.05, width: 1.5 }
    }
}

/// Draws an initial sketch on the distribution's canvas.
///
/// Each stroke's first control point is a pixel drawn from `dist`, jittered
/// uniformly inside it; the remaining points are uniform in the disk of
/// radius `radius * min(width, height)` around the first.
pub fn sample_initial_sketch(dist: &DistributionMap, params: &InitParams, seed: u64) -> Result<Sketch> {
    if params.strokes == 0 {
        return Err(Error::domain("need at least one stroke"));
    }
    if !(0.0 < params.radius && params.radius < 1.0) {
        return Err(Error::domain(format!("radius must be in (0, 1), got {}", params.radius)));
    }
    let index = WeightedIndex::new(&dist.probs).map_err(|e| Error::domain(format!("bad distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = params.radius * dist.width.min(dist.height) as f64;
    let strokes = (0..params.strokes)
        .map(|_| {
            let pixel = index.sample(&mut rng);
            let (px, py) = ((pixel % dist.width as usize) as f64, (pixel / dist.width as usize) as f64);
            let first = Point::new(px + rng.gen::<f64>(), py + rng.gen::<f64>());
            let mut points = vec![first];
            for _ in 1..params.control_points {
                let r = reach * rng.gen::<f64>().sqrt();
                let theta = std::f64::consts::TAU * rng.gen::<f64>();
                points.push(first + Point::new(r * theta.cos(), r * theta.sin()));
            }
            Stroke::new(points, params.width)
        })
        .collect::<Result<Vec<_>>>()?;
    Sketch::new_uniform(strokes, CanvasSize::new(dist.width, dist.height))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_image(w: u32, h: u32, edge: u32) -> RasterImage {
        let data = (0..w * h).map(|i| if i % w < edge { 0.0 } else { 1.0 }).collect();
        RasterImage::new(w, h, 1, data).unwrap()
    }

    #[test]
    fn xdog_of_constant_is_edge_free() {
        for v in [0.0, 0.3, 1.0] {
            let out = xdog(&RasterImage::filled(12, 9, 1, v), &XdogParams::default()).unwrap();
            assert!(out.data().iter().all(|&e| e.abs() < 1e-6), "level {v}");
        }
    }

    #[test]
    fn xdog_step_response_is_localized() {
        let params = XdogParams::default();
        let out = xdog(&step_image(40, 4, 20), &params).unwrap();
        let row: Vec<f64> = (0..40).map(|x| out.get(x, 1, 0)).collect();
        let (peak, &max) = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert!(max > 0.5);
        // The boundary lies between columns 19 and 20 (x = 20.0).
        let band = 3.0 * params.k * params.sigma;
        assert!(((peak as f64 + 0.5) - 20.0).abs() <= band);
        for (x, &e) in row.iter().enumerate() {
            if ((x as f64 + 0.5) - 20.0).abs() > band + 1.0 {
                assert!(e < 1e-3, "column {x} responds with {e}");
            }
        }
    }

    #[test]
    fn xdog_rejects_color_and_bad_params() {
        assert!(matches!(xdog(&RasterImage::filled(4, 4, 3, 1.0), &XdogParams::default()), Err(Error::Shape(_))));
        let bad = XdogParams { k: 1.0, ..Default::default() };
        assert!(xdog(&RasterImage::filled(4, 4, 1, 1.0), &bad).is_err());
    }

    #[test]
    fn uniform_inputs_give_uniform_distribution() {
        let d = build_distribution(&RelevancyMap::uniform(7, 7), &RasterImage::filled(20, 10, 1, 0.5), 1.0).unwrap();
        assert!(d.probs().iter().all(|&p| (p - 1.0 / 200.0).abs() < 1e-15));
    }

    #[test]
    fn sharp_peak_takes_all_mass() {
        let mut edges = vec![0.0; 25];
        edges[12] = 1.0;
        let edges = RasterImage::new(5, 5, 1, edges).unwrap();
        let d = build_distribution(&RelevancyMap::uniform(5, 5), &edges, 1e-3).unwrap();
        assert!(d.probs()[12] > 1.0 - 1e-12);
        let zero = build_distribution(&RelevancyMap::new(5, 5, vec![0.0; 25]).unwrap(), &edges, 1.0).unwrap();
        assert_eq!(zero, DistributionMap::uniform(5, 5));
    }

    #[test]
    fn concentrated_distribution_pins_first_points() {
        let mut w = vec![0.0; 100];
        w[37] = 1.0;
        let d = DistributionMap::from_weights(10, 10, w).unwrap();
        let sk = sample_initial_sketch(&d, &InitParams { strokes: 20, ..Default::default() }, 1).unwrap();
        for s in sk.strokes() {
            let p = s.points()[0];
            assert!((7.0..8.0).contains(&p.x) && (3.0..4.0).contains(&p.y), "{p:?}");
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let d = DistributionMap::uniform(32, 32);
        let params = InitParams { strokes: 8, control_points: 3, ..Default::default() };
        let a = sample_initial_sketch(&d, &params, 11).unwrap();
        assert_eq!(a, sample_initial_sketch(&d, &params, 11).unwrap());
        assert_ne!(a, sample_initial_sketch(&d, &params, 12).unwrap());
        assert!(a.strokes().iter().all(|s| s.points().len() == 3));
        assert!(sample_initial_sketch(&d, &InitParams { strokes: 0, ..params }, 1).is_err());
        assert!(sample_initial_sketch(&d, &InitParams { radius: 1.0, ..params }, 1).is_err());
    }

    proptest::proptest! {
        #[test]
        fn distribution_is_normalized(values in proptest::collection::vec(0.0..5.0f64, 49),
                                      edges in proptest::collection::vec(0.0..1.0f64, 16 * 12),
                                      temp in 0.05..10.0f64) {
            let rel = RelevancyMap::new(7, 7, values).unwrap();
            let edges = RasterImage::new(16, 12, 1, edges).unwrap();
            let d = build_distribution(&rel, &edges, temp).unwrap();
            proptest::prop_assert!(d.probs().iter().all(|&p| p >= 0.0));
            proptest::prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
