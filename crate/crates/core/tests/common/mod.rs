#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strokeopt::geometry::{CanvasSize, Point, Sketch, Stroke};
use strokeopt::raster::{render, PixelGrad, RasterConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_stroke(rng: &mut impl Rng, points: usize, lo: f64, hi: f64, width: f64) -> Stroke {
    let pts = (0..points).map(|_| Point::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi))).collect();
    Stroke::new(pts, width).unwrap()
}

/// `n` strokes of random degree with control points inside `[margin, side - margin]`.
pub fn random_sketch(rng: &mut impl Rng, n: usize, side: u32, margin: f64) -> Sketch {
    let strokes = (0..n)
        .map(|_| {
            let points = rng.gen_range(2..=4);
            random_stroke(rng, points, margin, side as f64 - margin, 1.5)
        })
        .collect();
    Sketch::new(strokes, CanvasSize::square(side)).unwrap()
}

pub fn random_pixel_grad(rng: &mut impl Rng, side: u32) -> PixelGrad {
    let data = (0..side * side).map(|_| rng.gen_range(-1.0..1.0)).collect();
    PixelGrad::new(side, side, 1, data).unwrap()
}

/// `pixel_grad · render(sketch)`.
pub fn functional(sketch: &Sketch, config: &RasterConfig, pixel_grad: &PixelGrad) -> f64 {
    pixel_grad.dot(&render(sketch, config).unwrap()).unwrap()
}

/// Nearest point on the flattened centerline to `c`, brute force.
fn nearest(samples: &[Point], c: Point) -> (f64, Point) {
    let mut best = (f64::INFINITY, Point::default());
    for pair in samples.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let ab = b - a;
        let len2 = ab.dot(ab);
        let u = if len2 > 0.0 { ((c - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let q = a + ab * u;
        let d = (c - q).length();
        if d < best.0 {
            best = (d, q);
        }
    }
    best
}

/// True when moving from `a` to `b` changes which branch of the
/// distance-to-centerline function some nearby pixel sits on: its nearest
/// point jumps, or the pixel center passes (nearly) through the centerline.
pub fn crosses_distance_tie(a: &Stroke, b: &Stroke, side: u32, reach: f64, jump: f64) -> bool {
    let sa = a.flatten(a.default_samples()).unwrap();
    let sb = b.flatten(b.default_samples()).unwrap();
    for y in 0..side {
        for x in 0..side {
            let c = Point::new(x as f64 + 0.5, y as f64 + 0.5);
            let (da, qa) = nearest(&sa, c);
            let (db, qb) = nearest(&sb, c);
            if da.min(db) > reach {
                continue;
            }
            if (qa - qb).length() > jump || da.min(db) < jump {
                return true;
            }
        }
    }
    false
}
