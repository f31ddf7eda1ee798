//! Image loading and the files written next to every run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::geometry::CanvasSize;
use crate::loss::LossSpec;
use crate::optimize::{EvalPoint, OptConfig, StopReason};
use crate::raster::{RasterConfig, RasterImage};
use crate::saliency::XdogParams;
use crate::{Error, Result};

/// A target image at canvas resolution, with its luminance.
#[derive(Debug, Clone)]
pub struct Target {
    pub rgb: RasterImage,
    pub gray: RasterImage,
}

impl Target {
    pub fn from_rgb(rgb: RasterImage) -> Result<Self> {
        if rgb.channels() != 3 {
            return Err(Error::shape(format!("target must have 3 channels, got {}", rgb.channels())));
        }
        let gray = luminance(&rgb);
        Ok(Self { rgb, gray })
    }
}

/// Rec. 601 luma of a 3-channel image.
pub fn luminance(rgb: &RasterImage) -> RasterImage {
    let data =
        rgb.data().chunks_exact(3).map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0)).collect();
    RasterImage::new(rgb.width(), rgb.height(), 1, data).expect("shape follows input")
}

fn read_rgb(path: &Path, canvas: CanvasSize) -> Result<ImageBuffer<Rgb<f32>, Vec<f32>>> {
    let img = image::open(path)?.into_rgb32f();
    if img.dimensions() == (canvas.width, canvas.height) {
        return Ok(img);
    }
    Ok(imageops::resize(&img, canvas.width, canvas.height, FilterType::Triangle))
}

/// Decodes `path`, resizes it bilinearly to `canvas` and, given a mask
/// (white keeps), composites it over white: `I * m + (1 - m)`.
pub fn load_target(path: &Path, canvas: CanvasSize, mask: Option<&Path>) -> Result<Target> {
    let img = read_rgb(path, canvas)?;
    let mut data: Vec<f64> = img.into_raw().into_iter().map(|v| v as f64).collect();
    if let Some(mask_path) = mask {
        let mask = luminance(&RasterImage::from_clamped(
            canvas.width,
            canvas.height,
            3,
            read_rgb(mask_path, canvas)?.into_raw().into_iter().map(|v| v as f64).collect(),
        )?);
        for (px, m) in data.chunks_exact_mut(3).zip(mask.data()) {
            for v in px {
                *v = *v * m + (1.0 - m);
            }
        }
    }
    Target::from_rgb(RasterImage::from_clamped(canvas.width, canvas.height, 3, data)?)
}

/// Writes an image as 8-bit PNG (gray or RGB by channel count).
pub fn save_png(image: &RasterImage, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let (w, h) = (image.width(), image.height());
    match image.channels() {
        1 => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).expect("sized").save(path)?,
        3 => ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).expect("sized").save(path)?,
        c => return Err(Error::shape(format!("cannot save a {c}-channel image"))),
    }
    Ok(())
}

/// `iter,eval_loss,semantic,geometric` rows.
pub fn write_loss_csv(points: &[EvalPoint], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "iter,eval_loss,semantic,geometric")?;
    for p in points {
        writeln!(out, "{},{:e},{:e},{:e}", p.iter, p.loss, p.semantic, p.geometric)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_eval_loss: Option<f64>,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub abort_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub svg: PathBuf,
    pub png: PathBuf,
    pub csv: PathBuf,
    pub manifest: PathBuf,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub input: PathBuf,
    pub mask: Option<PathBuf>,
    pub mask_applied: bool,
    pub canvas: CanvasSize,
    pub strokes: usize,
    pub control_points: usize,
    pub stroke_width: f64,
    pub init_radius: f64,
    pub relevancy: String,
    pub temperature: f64,
    pub xdog: XdogParams,
    pub raster: RasterConfig,
    pub loss: LossSpec,
    pub optimizer: OptConfig,
    pub seeds: Vec<u64>,
    pub best_seed: u64,
    pub runs: Vec<SeedSummary>,
    pub outputs: OutputPaths,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_png_loads_as_ones_and_resizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.png");
        ImageBuffer::from_pixel(448, 448, Rgb([255u8, 255, 255])).save(&path).unwrap();
        let t = load_target(&path, CanvasSize::square(224), None).unwrap();
        assert_eq!(t.rgb.shape(), (224, 224, 3));
        assert!(t.rgb.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
        assert_eq!(t.gray.channels(), 1);
    }

    #[test]
    fn sixteen_bit_png_keeps_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let img = ImageBuffer::from_fn(2, 1, |x, _| Luma([if x == 0 { 65535u16 } else { 257 }]));
        img.save(&path).unwrap();
        let t = load_target(&path, CanvasSize::new(2, 1), None).unwrap();
        assert!((t.rgb.get(0, 0, 0) - 1.0).abs() < 1e-6);
        assert!((t.rgb.get(1, 0, 0) - 257.0 / 65535.0).abs() < 1e-6);
    }

    #[test]
    fn mask_whitens_background() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("black.png");
        let mask = dir.path().join("mask.png");
        ImageBuffer::from_pixel(2, 1, Rgb([0u8, 0, 0])).save(&img).unwrap();
        ImageBuffer::from_fn(2, 1, |x, _| Luma([if x == 0 { 255u8 } else { 0 }])).save(&mask).unwrap();
        let t = load_target(&img, CanvasSize::new(2, 1), Some(&mask)).unwrap();
        assert!(t.gray.get(0, 0, 0).abs() < 1e-9);
        assert!((t.gray.get(1, 0, 0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(load_target(Path::new("/nonexistent/x.png"), CanvasSize::square(8), None).is_err());
    }
}
