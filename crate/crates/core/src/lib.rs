//! Differentiable Bézier-stroke rasterization and gradient-based sketch
//! optimization.
//!
//! A [`Sketch`] is a set of black Bézier strokes on a white canvas. The
//! [`raster`] module renders it with soft, distance-based coverage and
//! propagates per-pixel loss gradients back to control points. The
//! [`optimize`] module drives Adam against any [`loss::LossBackend`]: the
//! native pixel losses, or a remote feature service spoken to over the
//! binary protocol in [`protocol`].

pub mod error;
pub mod filter;
pub mod geometry;
pub mod io;
pub mod loss;
pub mod optimize;
pub mod pipeline;
pub mod protocol;
pub mod raster;
pub mod saliency;
pub mod svg;

pub use error::{Error, Result};
pub use geometry::{CanvasSize, ParamVector, Point, Sketch, Stroke};
pub use raster::{PixelGrad, RasterConfig, RasterImage};
