//! The full image-to-sketch pipeline: load, initialize, optimize, write.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geometry::CanvasSize;
use crate::io::{load_target, save_png, write_loss_csv, OutputPaths, RunManifest, SeedSummary, Target};
use crate::loss::{native_backend, Backend, LossBackend, LossSpec, RemoteLoss};
use crate::optimize::{run_multi_seed, MultiSeedSetup, OptConfig};
use crate::protocol::Session;
use crate::raster::{render, RasterConfig};
use crate::saliency::{build_distribution, xdog, InitParams, RelevancyMap, XdogParams};
use crate::svg::export_svg;
use crate::{Error, Result};

/// Where the initialization relevancy map comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelevancySource {
    /// The sidecar's map when a remote backend is used, otherwise none.
    Auto,
    /// Edges only.
    None,
    File(PathBuf),
}

impl std::str::FromStr for RelevancySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "none" => Ok(Self::None),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
                _ => Err(Error::Parse(format!("expected auto, none or file:PATH, got {s:?}"))),
            },
        }
    }
}

impl std::fmt::Display for RelevancySource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::None => f.write_str("none"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub mask: Option<PathBuf>,
    pub canvas: CanvasSize,
    pub init: InitParams,
    pub raster: RasterConfig,
    pub loss: LossSpec,
    /// Use the sidecar's mean-squared-error mode instead of its feature losses.
    pub l2_parity: bool,
    pub relevancy: RelevancySource,
    pub temperature: f64,
    pub xdog: XdogParams,
    pub optimizer: OptConfig,
    pub seed_base: u64,
    pub out_dir: PathBuf,
}

type Backends = Vec<Box<dyn LossBackend + Send>>;

fn backends(config: &PipelineConfig, target: &Target) -> Result<(Backends, Option<RelevancyMap>)> {
    let seeds = config.optimizer.seeds;
    match &config.loss.backend {
        Backend::Remote { endpoint } => {
            let mut out: Backends = Vec::with_capacity(seeds);
            let mut relevancy = None;
            for _ in 0..seeds {
                let remote = RemoteLoss::new(Session::open(endpoint)?, &target.rgb, &config.loss)?
                    .with_l2_parity(config.l2_parity);
                if relevancy.is_none() {
                    relevancy = Some(RelevancyMap::from_registered(remote.target())?);
                }
                out.push(Box::new(remote));
            }
            Ok((out, relevancy))
        }
        _ => {
            let out = (0..seeds).map(|_| native_backend(&config.loss, target.rgb.clone())).collect::<Result<_>>()?;
            Ok((out, None))
        }
    }
}

fn snapshot_path(dir: &Path, iter: usize) -> PathBuf {
    dir.join(format!("iter_{iter:06}.svg"))
}

/// Runs one abstraction level and writes `sketch.svg`, `sketch.png`,
/// `losses.csv` and `manifest.json` into `out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    config.optimizer.validate()?;
    config.loss.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let target = load_target(&config.input, config.canvas, config.mask.as_deref())?;
    let (backends, remote_relevancy) = backends(config, &target)?;

    let relevancy = match &config.relevancy {
        RelevancySource::File(path) => RelevancyMap::from_file(path)?,
        RelevancySource::Auto if remote_relevancy.is_some() => remote_relevancy.unwrap(),
        RelevancySource::Auto | RelevancySource::None => {
            log::info!("no relevancy map; initializing from edges only");
            RelevancyMap::uniform(config.canvas.width, config.canvas.height)
        }
    };
    let edges = xdog(&target.gray, &config.xdog)?;
    let distribution = build_distribution(&relevancy, &edges, config.temperature)?;

    let setup = MultiSeedSetup {
        distribution: &distribution,
        init: config.init,
        raster: config.raster,
        config: config.optimizer.clone(),
        seed_base: config.seed_base,
    };
    let result = run_multi_seed(&setup, backends)?;
    let best = result.best_run();
    log::info!(
        "best seed {} with eval loss {:.6e} ({:?})",
        best.seed,
        best.final_loss().unwrap_or(f64::NAN),
        best.stop_reason
    );

    let outputs = OutputPaths {
        svg: config.out_dir.join("sketch.svg"),
        png: config.out_dir.join("sketch.png"),
        csv: config.out_dir.join("losses.csv"),
        manifest: config.out_dir.join("manifest.json"),
    };
    export_svg(&best.final_sketch, &outputs.svg)?;
    save_png(&render(&best.final_sketch, &config.raster)?, &outputs.png)?;
    write_loss_csv(&best.eval_losses, &outputs.csv)?;
    if !best.snapshots.is_empty() {
        let dir = config.out_dir.join("snapshots");
        std::fs::create_dir_all(&dir)?;
        for (iter, sketch) in &best.snapshots {
            export_svg(sketch, &snapshot_path(&dir, *iter))?;
        }
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        input: config.input.clone(),
        mask: config.mask.clone(),
        mask_applied: config.mask.is_some(),
        canvas: config.canvas,
        strokes: config.init.strokes,
        control_points: config.init.control_points,
        stroke_width: config.init.width,
        init_radius: config.init.radius,
        relevancy: config.relevancy.to_string(),
        temperature: config.temperature,
        xdog: config.xdog,
        raster: config.raster,
        loss: config.loss.clone(),
        optimizer: config.optimizer.clone(),
        seeds: result.runs.iter().map(|r| r.seed).collect(),
        best_seed: best.seed,
        runs: result
            .runs
            .iter()
            .map(|r| SeedSummary {
                seed: r.seed,
                final_eval_loss: r.final_loss(),
                stop_reason: r.stop_reason,
                iterations: r.eval_losses.last().map_or(0, |e| e.iter),
                abort_reason: r.abort_reason.clone(),
            })
            .collect(),
        outputs,
    };
    manifest.write(&manifest.outputs.manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relevancy_source_parsing() {
        assert_eq!("auto".parse::<RelevancySource>().unwrap(), RelevancySource::Auto);
        assert_eq!("none".parse::<RelevancySource>().unwrap(), RelevancySource::None);
        assert_eq!("file:maps/r.png".parse::<RelevancySource>().unwrap(), RelevancySource::File("maps/r.png".into()));
        assert!("file:".parse::<RelevancySource>().is_err());
        assert!("sidecar".parse::<RelevancySource>().is_err());
    }
}
