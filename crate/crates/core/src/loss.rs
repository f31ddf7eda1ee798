//! Loss backends: image in, scalar loss and `∂loss/∂pixel` out.
//!
//! Native backends compare pixels directly. [`RemoteLoss`] delegates to a
//! sidecar that evaluates the semantic (final embedding cosine distance) and
//! geometric (intermediate activation L2) terms and returns their pixel
//! gradients; the two are combined here as `geometric + w_s * semantic`.

use serde::{Deserialize, Serialize};

use crate::filter::{gaussian_blur_interleaved, Border};
use crate::protocol::{Endpoint, EvalFlags, EvalRequest, RegisteredTarget, Session, WireImage};
use crate::raster::{PixelGrad, RasterImage};
use crate::{Error, Result};

pub const DEFAULT_SEMANTIC_WEIGHT: f64 = 0.1;
pub const DEFAULT_AUGMENT_VIEWS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Backend {
    PixelL2,
    /// Sum of L2 losses between Gaussian-blurred images, one per sigma.
    BlurredL2 {
        sigmas: Vec<f64>,
    },
    Remote {
        endpoint: Endpoint,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub backend: Backend,
    pub semantic_weight: f64,
    pub augment_views: u32,
}

impl LossSpec {
    pub fn new(backend: Backend) -> Self {
        Self { backend, semantic_weight: DEFAULT_SEMANTIC_WEIGHT, augment_views: DEFAULT_AUGMENT_VIEWS }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.semantic_weight.is_finite() && self.semantic_weight >= 0.0) {
            return Err(Error::domain(format!(
                "semantic weight must be finite and non-negative, got {}",
                self.semantic_weight
            )));
        }
        if let Backend::BlurredL2 { sigmas } = &self.backend {
            if sigmas.is_empty() || sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(Error::domain("blur sigmas must be a non-empty list of values >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub semantic: f64,
    pub geometric: f64,
    pub pixel_grad: PixelGrad,
}

impl LossReport {
    fn native(loss: f64, pixel_grad: PixelGrad) -> Self {
        Self { total: loss, semantic: 0.0, geometric: loss, pixel_grad }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.semantic.is_finite()
            && self.geometric.is_finite()
            && self.pixel_grad.data().iter().all(|g| g.is_finite())
    }
}

/// Whether a loss is requested for a training step or for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Training step; backends that augment draw their views from `seed`.
    Train { seed: u64 },
    /// Augmentation-free evaluation.
    Eval,
}

pub trait LossBackend {
    fn evaluate(&mut self, sketch: &RasterImage, mode: EvalMode) -> Result<LossReport>;
}

impl<B: LossBackend + ?Sized> LossBackend for Box<B> {
    fn evaluate(&mut self, sketch: &RasterImage, mode: EvalMode) -> Result<LossReport> {
        (**self).evaluate(sketch, mode)
    }
}

fn check_same_shape(a: &RasterImage, b: &RasterImage) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("image {:?} does not match target {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean squared error over every value, with its gradient `2 (s - t) / N`.
pub fn pixel_l2(sketch: &RasterImage, target: &RasterImage) -> Result<LossReport> {
    check_same_shape(sketch, target)?;
    let n = sketch.data().len() as f64;
    let (w, h, c) = sketch.shape();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(sketch.data().len());
    for (s, t) in sketch.data().iter().zip(target.data()) {
        let d = s - t;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    Ok(LossReport::native(loss / n, PixelGrad::new(w, h, c, grad)?))
}

/// `Σ_σ mean((G_σ s - G_σ t)²)`. Blurs use zero padding so the gradient is
/// the same blur applied to the residual. `σ = 0` is the identity.
pub fn blurred_l2(sketch: &RasterImage, target: &RasterImage, sigmas: &[f64]) -> Result<LossReport> {
    check_same_shape(sketch, target)?;
    if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::domain(format!("blur sigma must be >= 0, got {s}")));
    }
    let (w, h, c) = sketch.shape();
    let (wu, hu, cu) = (w as usize, h as usize, c as usize);
    let n = sketch.data().len() as f64;
    let diff: Vec<f64> = sketch.data().iter().zip(target.data()).map(|(s, t)| s - t).collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; diff.len()];
    for &sigma in sigmas {
        // Blurring is linear, so G s - G t = G (s - t).
        let blurred = gaussian_blur_interleaved(&diff, wu, hu, cu, sigma, Border::Zero);
        loss += blurred.iter().map(|d| d * d).sum::<f64>() / n;
        let residual: Vec<f64> = blurred.iter().map(|d| 2.0 * d / n).collect();
        let back = gaussian_blur_interleaved(&residual, wu, hu, cu, sigma, Border::Zero);
        grad.iter_mut().zip(back).for_each(|(g, b)| *g += b);
    }
    Ok(LossReport::native(loss, PixelGrad::new(w, h, c, grad)?))
}

/// `1 - u·v / (|u| |v|)`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(format!("vectors of length {} and {}", u.len(), v.len())));
    }
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::domain("cosine distance of a zero vector"));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((1.0 - dot / (nu * nv)).clamp(0.0, 2.0))
}

/// `geometric + semantic_weight * semantic`.
pub fn combine(geometric: f64, semantic: f64, semantic_weight: f64) -> f64 {
    geometric + semantic_weight * semantic
}

#[derive(Debug, Clone)]
pub struct PixelL2Loss {
    target: RasterImage,
}

impl PixelL2Loss {
    pub fn new(target: RasterImage) -> Self {
        Self { target }
    }
}

impl LossBackend for PixelL2Loss {
    fn evaluate(&mut self, sketch: &RasterImage, _mode: EvalMode) -> Result<LossReport> {
        pixel_l2(sketch, &self.target)
    }
}

#[derive(Debug, Clone)]
pub struct BlurredL2Loss {
    target: RasterImage,
    sigmas: Vec<f64>,
}

impl BlurredL2Loss {
    pub fn new(target: RasterImage, sigmas: Vec<f64>) -> Self {
        Self { target, sigmas }
    }
}

impl LossBackend for BlurredL2Loss {
    fn evaluate(&mut self, sketch: &RasterImage, _mode: EvalMode) -> Result<LossReport> {
        blurred_l2(sketch, &self.target, &self.sigmas)
    }
}

/// Builds the native backend named by `spec`.
pub fn native_backend(spec: &LossSpec, target: RasterImage) -> Result<Box<dyn LossBackend + Send>> {
    spec.validate()?;
    match &spec.backend {
        Backend::PixelL2 => Ok(Box::new(PixelL2Loss::new(target))),
        Backend::BlurredL2 { sigmas } => Ok(Box::new(BlurredL2Loss::new(target, sigmas.clone()))),
        Backend::Remote { .. } => Err(Error::domain("remote backend needs a sidecar session")),
    }
}

/// Sidecar-backed loss.
///
/// With a non-zero semantic weight the semantic and geometric terms are
/// requested separately under the same augmentation seed, so that both the
/// losses and the pixel gradients combine with the client's weight.
pub struct RemoteLoss {
    session: Session,
    target: RegisteredTarget,
    semantic_weight: f64,
    augment_views: u32,
    parity: bool,
}

impl RemoteLoss {
    /// Registers `target` on `session`.
    pub fn new(mut session: Session, target: &RasterImage, spec: &LossSpec) -> Result<Self> {
        spec.validate()?;
        let registered = session.register_target(target)?;
        Ok(Self {
            session,
            target: registered,
            semantic_weight: spec.semantic_weight,
            augment_views: spec.augment_views,
            parity: false,
        })
    }

    /// Switches to the sidecar's plain mean-squared-error mode.
    pub fn with_l2_parity(mut self, parity: bool) -> Self {
        self.parity = parity;
        self
    }

    pub fn target(&self) -> &RegisteredTarget {
        &self.target
    }

    pub fn session_mut(&mut self) -> &mut Session {
        &mut self.session
    }

    fn request(&mut self, image: &RasterImage, flags: EvalFlags, mode: EvalMode) -> Result<(f64, f64, f64, PixelGrad)> {
        let (augment_views, seed) = match mode {
            EvalMode::Train { seed } => (self.augment_views, seed),
            EvalMode::Eval => (0, 0),
        };
        let reply = self.session.eval_loss(EvalRequest {
            target_id: self.target.id,
            augment_views,
            seed,
            flags,
            image: WireImage::from_raster(image),
        })?;
        let (w, h, c) = image.shape();
        let grad = PixelGrad::new(w, h, c, reply.grad.iter().map(|&g| g as f64).collect())?;
        Ok((reply.total, reply.semantic, reply.geometric, grad))
    }
}

impl LossBackend for RemoteLoss {
    fn evaluate(&mut self, sketch: &RasterImage, mode: EvalMode) -> Result<LossReport> {
        if (sketch.width(), sketch.height()) != (self.target.width, self.target.height) {
            return Err(Error::shape(format!(
                "sketch is {}x{}, registered target is {}x{}",
                sketch.width(),
                sketch.height(),
                self.target.width,
                self.target.height
            )));
        }
        if self.parity {
            let (total, _, _, grad) = self.request(sketch, EvalFlags::L2_PARITY, mode)?;
            return Ok(LossReport::native(total, grad));
        }
        let (_, _, geometric, geo_grad) = self.request(sketch, EvalFlags::GEOMETRIC, mode)?;
        if self.semantic_weight == 0.0 {
            return Ok(LossReport { total: geometric, semantic: 0.0, geometric, pixel_grad: geo_grad });
        }
        let (_, semantic, _, sem_grad) = self.request(sketch, EvalFlags::SEMANTIC, mode)?;
        let (w, h, c) = geo_grad.shape();
        let grad =
            geo_grad.data().iter().zip(sem_grad.data()).map(|(&g, &s)| combine(g, s, self.semantic_weight)).collect();
        Ok(LossReport {
            total: combine(geometric, semantic, self.semantic_weight),
            semantic,
            geometric,
            pixel_grad: PixelGrad::new(w, h, c, grad)?,
        })
    }
}
