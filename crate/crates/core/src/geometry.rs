//! Strokes as Bézier curves of degree 1 to 3, and the flat parameter view
//! the optimizer works on.

use std::ops::{Add, Deref, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A control point in canvas units (pixels, continuous).
///
/// Points may leave the canvas during optimization; nothing clamps them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn length(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// Bernstein basis of `degree` at `t`; entries past `degree` are zero.
pub fn bernstein(degree: usize, t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    match degree {
        0 => [1.0, 0.0, 0.0, 0.0],
        1 => [s, t, 0.0, 0.0],
        2 => [s * s, 2.0 * s * t, t * t, 0.0],
        3 => [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t],
        _ => unreachable!("stroke degree is validated at construction"),
    }
}

/// One black stroke: a Bézier curve with 2, 3 or 4 control points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    points: Vec<Point>,
    width: f64,
}

impl Stroke {
    pub const MIN_POINTS: usize = 2;
    pub const MAX_POINTS: usize = 4;

    pub fn new(points: Vec<Point>, width: f64) -> Result<Self> {
        if !(Self::MIN_POINTS..=Self::MAX_POINTS).contains(&points.len()) {
            return Err(Error::domain(format!("a stroke needs 2 to 4 control points, got {}", points.len())));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::domain(format!("stroke width must be positive, got {width}")));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::numeric(format!("non-finite control point {p:?}")));
        }
        Ok(Self { points, width })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn degree(&self) -> usize {
        self.points.len() - 1
    }

    /// Default flattening resolution for this stroke's degree.
    pub fn default_samples(&self) -> usize {
        default_samples(self.degree())
    }

    /// Evaluates the curve at `t` in `[0, 1]`.
    pub fn eval(&self, t: f64) -> Result<Point> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("curve parameter {t} outside [0, 1]")));
        }
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> Point {
        let basis = bernstein(self.degree(), t);
        self.points.iter().zip(basis).fold(Point::default(), |acc, (&p, b)| acc + p * b)
    }

    /// Samples the curve at `samples` uniformly spaced parameter values.
    pub fn flatten(&self, samples: usize) -> Result<Vec<Point>> {
        if samples < 2 {
            return Err(Error::domain(format!("flattening needs at least 2 samples, got {samples}")));
        }
        Ok(sample_ts(samples).map(|t| self.eval_unchecked(t)).collect())
    }
}

/// Per-degree sample counts: 2 for lines, 16 for quadratics, 32 for cubics.
pub fn default_samples(degree: usize) -> usize {
    match degree {
        1 => 2,
        2 => 16,
        _ => 32,
    }
}

/// `t_k = k / (samples - 1)`, with both endpoints hit exactly.
pub(crate) fn sample_ts(samples: usize) -> impl Iterator<Item = f64> {
    let last = samples - 1;
    (0..samples).map(move |k| if k == last { 1.0 } else { k as f64 / last as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanvasSize {
    pub width: u32,
    pub height: u32,
}

impl CanvasSize {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub const fn square(side: u32) -> Self {
        Self::new(side, side)
    }

    pub fn pixel_count(self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// A set of strokes on a canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sketch {
    strokes: Vec<Stroke>,
    canvas: CanvasSize,
}

impl Sketch {
    pub fn new(strokes: Vec<Stroke>, canvas: CanvasSize) -> Result<Self> {
        if strokes.is_empty() {
            return Err(Error::domain("a sketch needs at least one stroke"));
        }
        if canvas.width == 0 || canvas.height == 0 {
            return Err(Error::domain(format!("empty canvas {}x{}", canvas.width, canvas.height)));
        }
        Ok(Self { strokes, canvas })
    }

    /// Like [`Sketch::new`], but also requires every stroke to share one width.
    pub fn new_uniform(strokes: Vec<Stroke>, canvas: CanvasSize) -> Result<Self> {
        let sketch = Self::new(strokes, canvas)?;
        let first = sketch.strokes[0].width;
        if sketch.strokes.iter().any(|s| s.width != first) {
            return Err(Error::domain("strokes do not share a uniform width"));
        }
        Ok(sketch)
    }

    pub fn strokes(&self) -> &[Stroke] {
        &self.strokes
    }

    pub fn canvas(&self) -> CanvasSize {
        self.canvas
    }

    pub fn len(&self) -> usize {
        self.strokes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strokes.is_empty()
    }

    pub fn param_len(&self) -> usize {
        self.strokes.iter().map(|s| 2 * s.points.len()).sum()
    }

    /// Flattens control points stroke-major, point-major, `x, y` interleaved.
    pub fn to_params(&self) -> ParamVector {
        let mut values = Vec::with_capacity(self.param_len());
        for p in self.strokes.iter().flat_map(|s| &s.points) {
            values.push(p.x);
            values.push(p.y);
        }
        ParamVector(values)
    }

    /// Rebuilds a sketch with the structure of `self` and new coordinates.
    ///
    /// Widths, degrees and the canvas are taken from `self`.
    pub fn with_params(&self, params: &[f64]) -> Result<Sketch> {
        if params.len() != self.param_len() {
            return Err(Error::shape(format!(
                "parameter vector has {} values, sketch needs {}",
                params.len(),
                self.param_len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite value in parameter vector"));
        }
        let mut coords = params.chunks_exact(2);
        let strokes = self
            .strokes
            .iter()
            .map(|s| Stroke {
                points: coords.by_ref().take(s.points.len()).map(|c| Point::new(c[0], c[1])).collect(),
                width: s.width,
            })
            .collect();
        Ok(Sketch { strokes, canvas: self.canvas })
    }

    /// Applies `f` to every control point.
    pub fn map_points(&self, mut f: impl FnMut(Point) -> Point) -> Sketch {
        let strokes = self
            .strokes
            .iter()
            .map(|s| Stroke { points: s.points.iter().map(|&p| f(p)).collect(), width: s.width })
            .collect();
        Sketch { strokes, canvas: self.canvas }
    }
}

/// Flat view of all control-point coordinates of a sketch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn to_params(sketch: &Sketch) -> ParamVector {
    sketch.to_params()
}

pub fn from_params(params: &ParamVector, template: &Sketch) -> Result<Sketch> {
    template.with_params(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn arch() -> Stroke {
        Stroke::new(vec![p(0.0, 0.0), p(0.0, 1.0), p(1.0, 1.0), p(1.0, 0.0)], 1.0).unwrap()
    }

    #[test]
    fn cubic_endpoints_and_midpoint() {
        let s = arch();
        assert_eq!(s.eval(0.0).unwrap(), p(0.0, 0.0));
        assert_eq!(s.eval(1.0).unwrap(), p(1.0, 0.0));
        assert_eq!(s.eval(0.5).unwrap(), p(0.5, 0.75));
    }

    #[test]
    fn eval_rejects_out_of_range_t() {
        assert!(matches!(arch().eval(1.5), Err(Error::Domain(_))));
        assert!(matches!(arch().eval(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn flatten_line_and_cubic() {
        let line = Stroke::new(vec![p(0.0, 0.0), p(4.0, 0.0)], 1.0).unwrap();
        let pts = line.flatten(5).unwrap();
        let want: Vec<_> = (0..5).map(|i| p(i as f64, 0.0)).collect();
        assert_eq!(pts, want);
        assert_eq!(arch().flatten(3).unwrap(), vec![p(0.0, 0.0), p(0.5, 0.75), p(1.0, 0.0)]);
        assert_eq!(arch().flatten(2).unwrap(), vec![p(0.0, 0.0), p(1.0, 0.0)]);
        assert!(matches!(arch().flatten(1), Err(Error::Domain(_))));
    }

    #[test]
    fn stroke_validation() {
        assert!(Stroke::new(vec![p(0.0, 0.0)], 1.0).is_err());
        assert!(Stroke::new(vec![p(0.0, 0.0); 5], 1.0).is_err());
        assert!(Stroke::new(vec![p(0.0, 0.0); 2], 0.0).is_err());
        assert!(Stroke::new(vec![p(0.0, 0.0); 2], f64::NAN).is_err());
        assert!(matches!(Stroke::new(vec![p(f64::NAN, 0.0); 2], 1.0), Err(Error::Numeric(_))));
        assert!(Sketch::new(vec![], CanvasSize::square(8)).is_err());
    }

    #[test]
    fn uniform_width_is_enforced() {
        let a = Stroke::new(vec![p(0.0, 0.0); 2], 1.0).unwrap();
        let b = Stroke::new(vec![p(0.0, 0.0); 2], 2.0).unwrap();
        assert!(Sketch::new_uniform(vec![a.clone(), b], CanvasSize::square(8)).is_err());
        assert!(Sketch::new_uniform(vec![a.clone(), a], CanvasSize::square(8)).is_ok());
    }

    #[test]
    fn param_lengths() {
        let one = Sketch::new(vec![arch()], CanvasSize::square(8)).unwrap();
        assert_eq!(one.to_params().len(), 8);
        let many = Sketch::new(vec![arch(); 16], CanvasSize::square(8)).unwrap();
        assert_eq!(many.to_params().len(), 128);
        assert!(matches!(many.with_params(&[0.0; 127]), Err(Error::Shape(_))));
    }

    fn arb_stroke() -> impl Strategy<Value = Stroke> {
        prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..=4)
            .prop_map(|pts| Stroke::new(pts.into_iter().map(|(x, y)| p(x, y)).collect(), 1.5).unwrap())
    }

    fn arb_sketch() -> impl Strategy<Value = Sketch> {
        prop::collection::vec(arb_stroke(), 1..6).prop_map(|s| Sketch::new(s, CanvasSize::new(64, 48)).unwrap())
    }

    /// Point-in-convex-hull via the LP-free test: a point lies in the hull of
    /// at most 4 points iff it lies in one of the triangles (or segments)
    /// they span.
    fn in_hull(q: Point, pts: &[Point], tol: f64) -> bool {
        let on_segment = |a: Point, b: Point| {
            let ab = b - a;
            let len2 = ab.dot(ab);
            let u = if len2 == 0.0 { 0.0 } else { ((q - a).dot(ab) / len2).clamp(0.0, 1.0) };
            (a + ab * u - q).length() <= tol
        };
        let in_triangle = |a: Point, b: Point, c: Point| {
            let cross = |o: Point, u: Point, v: Point| (u.x - o.x) * (v.y - o.y) - (u.y - o.y) * (v.x - o.x);
            let area = cross(a, b, c).abs();
            let scale = tol * ((b - a).length() + (c - b).length() + (a - c).length()).max(1.0);
            let sum = cross(q, a, b).abs() + cross(q, b, c).abs() + cross(q, c, a).abs();
            sum - area <= scale
        };
        let n = pts.len();
        for i in 0..n {
            for j in i..n {
                if on_segment(pts[i], pts[j]) {
                    return true;
                }
                for k in j + 1..n {
                    if in_triangle(pts[i], pts[j], pts[k]) {
                        return true;
                    }
                }
            }
        }
        false
    }

    proptest! {
        #[test]
        fn endpoints_interpolate(s in arb_stroke()) {
            prop_assert_eq!(s.eval(0.0).unwrap(), s.points()[0]);
            let last = *s.points().last().unwrap();
            let end = s.eval(1.0).unwrap();
            prop_assert!((end - last).length() < 1e-12);
        }

        #[test]
        fn stays_in_convex_hull(s in arb_stroke(), t in 0.0..=1.0f64) {
            let q = s.eval(t).unwrap();
            prop_assert!(in_hull(q, s.points(), 1e-9));
        }

        #[test]
        fn affine_equivariant(
            s in arb_stroke(),
            t in 0.0..=1.0f64,
            m in prop::array::uniform4(-3.0..3.0f64),
            off in (-20.0..20.0f64, -20.0..20.0f64),
        ) {
            let apply = |q: Point| p(m[0] * q.x + m[1] * q.y + off.0, m[2] * q.x + m[3] * q.y + off.1);
            let mapped = Stroke::new(s.points().iter().map(|&q| apply(q)).collect(), s.width()).unwrap();
            let a = mapped.eval(t).unwrap();
            let b = apply(s.eval(t).unwrap());
            prop_assert!((a - b).length() < 1e-9);
        }

        #[test]
        fn params_round_trip_exactly(sk in arb_sketch()) {
            let back = from_params(&to_params(&sk), &sk).unwrap();
            prop_assert_eq!(back, sk);
        }
    }
}
