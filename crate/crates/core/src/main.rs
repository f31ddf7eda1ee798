use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, ValueEnum};

use strokeopt::geometry::CanvasSize;
use strokeopt::loss::{Backend, LossSpec, DEFAULT_AUGMENT_VIEWS, DEFAULT_SEMANTIC_WEIGHT};
use strokeopt::optimize::OptConfig;
use strokeopt::pipeline::{run_pipeline, PipelineConfig, RelevancySource};
use strokeopt::protocol::Endpoint;
use strokeopt::raster::RasterConfig;
use strokeopt::saliency::{InitParams, XdogParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossKind {
    /// Mean squared pixel error.
    L2,
    /// Multi-scale blurred pixel error.
    Blur,
    /// Semantic and geometric feature losses from a sidecar.
    Clip,
}

/// Turn an image into an abstract sketch of Bézier strokes.
#[derive(Debug, Parser)]
#[command(name = "strokeopt", version)]
struct Cli {
    /// Target image (PNG or JPEG).
    #[arg(long)]
    input: PathBuf,
    /// Foreground mask, white keeps; the rest becomes white.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Stroke counts; several values run one abstraction level each.
    #[arg(long, value_delimiter = ',', default_value = "16",
          value_parser = clap::value_parser!(u32).range(1..))]
    strokes: Vec<u32>,
    /// Control points per stroke.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(2..=4))]
    control_points: u8,
    /// Stroke width in pixels.
    #[arg(long, default_value_t = 1.5)]
    width: f64,
    /// Canvas side length in pixels.
    #[arg(long, default_value_t = 224, value_parser = clap::value_parser!(u32).range(1..))]
    resolution: u32,
    /// Coverage ramp width in pixels.
    #[arg(long, default_value_t = 0.7)]
    softness: f64,
    #[arg(long, value_enum, default_value_t = LossKind::L2)]
    loss: LossKind,
    /// Gaussian sigmas for the blur loss.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,4")]
    blur_sigmas: Vec<f64>,
    /// Weight of the semantic term.
    #[arg(long, default_value_t = DEFAULT_SEMANTIC_WEIGHT)]
    ws: f64,
    /// Augmented views per training step (sidecar losses only).
    #[arg(long, default_value_t = DEFAULT_AUGMENT_VIEWS)]
    augment_views: u32,
    /// Sidecar endpoint: cmd:<command> or tcp:<host>:<port>.
    #[arg(long)]
    backend: Option<Endpoint>,
    /// Ask the sidecar for plain mean squared error.
    #[arg(long, hide = true)]
    l2_parity: bool,
    /// Initialization relevancy: auto, none or file:<path>.
    #[arg(long, default_value = "auto")]
    relevancy: RelevancySource,
    /// Softmax temperature of the initialization map.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Neighbor radius of initial control points, as a canvas fraction.
    #[arg(long, default_value_t = 0.05)]
    radius: f64,
    #[arg(long, default_value_t = XdogParams::default().sigma)]
    xdog_sigma: f64,
    #[arg(long, default_value_t = XdogParams::default().k)]
    xdog_k: f64,
    #[arg(long, default_value_t = XdogParams::default().tau)]
    xdog_tau: f64,
    #[arg(long, default_value_t = XdogParams::default().epsilon)]
    xdog_epsilon: f64,
    #[arg(long, default_value_t = XdogParams::default().phi)]
    xdog_phi: f64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    seeds: u32,
    /// Maximum optimization steps.
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u32).range(1..))]
    iters: u32,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    eval_every: u32,
    #[arg(long, default_value_t = 1e-5)]
    converge_delta: f64,
    /// Save the sketch as SVG every N iterations.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    snapshot_every: Option<u32>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed of the first run; run i uses seed-base + i.
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
}

impl Cli {
    fn usage_error(kind: ErrorKind, msg: &str) -> ! {
        Cli::command().error(kind, msg).exit()
    }

    fn loss_spec(&self) -> LossSpec {
        let backend = match self.loss {
            LossKind::L2 => Backend::PixelL2,
            LossKind::Blur => Backend::BlurredL2 { sigmas: self.blur_sigmas.clone() },
            LossKind::Clip => match &self.backend {
                Some(endpoint) => Backend::Remote { endpoint: endpoint.clone() },
                None => Self::usage_error(ErrorKind::MissingRequiredArgument, "--loss clip needs --backend"),
            },
        };
        LossSpec { backend, semantic_weight: self.ws, augment_views: self.augment_views }
    }

    fn pipeline(&self, strokes: u32, out_dir: PathBuf) -> PipelineConfig {
        PipelineConfig {
            input: self.input.clone(),
            mask: self.mask.clone(),
            canvas: CanvasSize::square(self.resolution),
            init: InitParams {
                strokes: strokes as usize,
                control_points: self.control_points as usize,
                radius: self.radius,
                width: self.width,
            },
            raster: RasterConfig { softness: self.softness, samples_per_curve: None },
            loss: self.loss_spec(),
            l2_parity: self.l2_parity,
            relevancy: self.relevancy.clone(),
            temperature: self.temperature,
            xdog: XdogParams {
                sigma: self.xdog_sigma,
                k: self.xdog_k,
                tau: self.xdog_tau,
                epsilon: self.xdog_epsilon,
                phi: self.xdog_phi,
            },
            optimizer: OptConfig {
                lr: self.lr,
                max_iters: self.iters as usize,
                eval_every: self.eval_every as usize,
                converge_delta: self.converge_delta,
                seeds: self.seeds as usize,
                snapshot_every: self.snapshot_every.map(|n| n as usize),
                ..OptConfig::default()
            },
            seed_base: self.seed_base,
            out_dir,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STROKEOPT_LOG", "info")).init();
    let cli = Cli::parse();
    if cli.loss != LossKind::Clip && cli.backend.is_some() {
        log::warn!("--backend is ignored unless --loss clip");
    }

    let sweep = cli.strokes.len() > 1;
    for &n in &cli.strokes {
        let out_dir = if sweep { cli.out.join(format!("strokes_{n}")) } else { cli.out.clone() };
        let config = cli.pipeline(n, out_dir);
        match run_pipeline(&config) {
            Ok(manifest) => log::info!("{n} strokes: wrote {}", manifest.outputs.svg.display()),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
    ExitCode::SUCCESS
}
