//! Adam over control-point coordinates, with periodic augmentation-free
//! evaluation, convergence detection and best-of-seeds selection.

use serde::{Deserialize, Serialize};

use crate::geometry::Sketch;
use crate::loss::{EvalMode, LossBackend, LossReport};
use crate::raster::{composite_to_rgb, render, render_backward, RasterConfig, RasterImage};
use crate::saliency::{sample_initial_sketch, DistributionMap, InitParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub max_iters: usize,
    pub eval_every: usize,
    pub converge_delta: f64,
    pub seeds: usize,
    pub snapshot_every: Option<usize>,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            lr: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            max_iters: 2000,
            eval_every: 10,
            converge_delta: 1e-5,
            seeds: 3,
            snapshot_every: None,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::domain(m.to_string()));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return err("learning rate must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return err("Adam betas must lie in [0, 1)");
        }
        if !(self.eps_adam.is_finite() && self.eps_adam > 0.0) {
            return err("Adam epsilon must be positive");
        }
        if self.max_iters == 0 {
            return err("max_iters must be at least 1");
        }
        if self.eval_every == 0 {
            return err("eval_every must be at least 1");
        }
        if self.converge_delta.is_nan() || self.converge_delta < 0.0 {
            return err("converge_delta must be non-negative");
        }
        if self.seeds == 0 {
            return err("need at least one seed");
        }
        if self.snapshot_every == Some(0) {
            return err("snapshot_every must be at least 1");
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, config: &OptConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape(format!(
            "adam: {} params, {} grads, state of {}/{}",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - config.beta1.powi(t);
    let bias2 = 1.0 - config.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params[i] -= config.lr * m_hat / (v_hat.sqrt() + config.eps_adam);
    }
    Ok(())
}

/// Stops once two successive evaluations differ by less than `delta`.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    delta: f64,
    previous: Option<f64>,
}

impl ConvergenceMonitor {
    pub fn new(delta: f64) -> Self {
        Self { delta, previous: None }
    }

    /// Records an evaluation loss and reports whether the run has converged.
    pub fn observe(&mut self, loss: f64) -> bool {
        let converged = self.previous.is_some_and(|prev| (loss - prev).abs() < self.delta);
        self.previous = Some(loss);
        converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iter: usize,
    pub loss: f64,
    pub semantic: f64,
    pub geometric: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Converged,
    MaxIters,
    Aborted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptRunResult {
    pub seed: u64,
    pub final_sketch: Sketch,
    pub eval_losses: Vec<EvalPoint>,
    pub stop_reason: StopReason,
    /// Why the run aborted, when it did.
    pub abort_reason: Option<String>,
    pub snapshots: Vec<(usize, Sketch)>,
}

impl OptRunResult {
    pub fn final_loss(&self) -> Option<f64> {
        self.eval_losses.last().map(|e| e.loss)
    }
}

/// Per-step augmentation seed, distinct across runs and iterations.
fn step_seed(seed: u64, iter: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ iter as u64
}

fn evaluate(
    sketch: &Sketch,
    raster: &RasterConfig,
    backend: &mut dyn LossBackend,
    mode: EvalMode,
) -> Result<(RasterImage, LossReport)> {
    let image = composite_to_rgb(&render(sketch, raster)?)?;
    let report = backend.evaluate(&image, mode)?;
    if !report.is_finite() {
        return Err(Error::numeric(format!("non-finite loss report (total {})", report.total)));
    }
    Ok((image, report))
}

/// Optimizes `init` against `backend`.
///
/// The schedule: evaluate at iteration 0 and every `eval_every` iterations
/// after it, stopping as soon as two successive evaluations differ by less
/// than `converge_delta`; otherwise take `max_iters` steps and evaluate once
/// more at the end. Failures after the first evaluation end the run as
/// [`StopReason::Aborted`] with the trace so far.
pub fn run_single(
    init: &Sketch,
    backend: &mut dyn LossBackend,
    raster: &RasterConfig,
    config: &OptConfig,
    seed: u64,
) -> Result<OptRunResult> {
    config.validate()?;
    let mut sketch = init.clone();
    let mut params = sketch.to_params().into_inner();
    let mut adam = AdamState::new(params.len());
    let mut monitor = ConvergenceMonitor::new(config.converge_delta);
    let mut result = OptRunResult {
        seed,
        final_sketch: sketch.clone(),
        eval_losses: Vec::new(),
        stop_reason: StopReason::MaxIters,
        abort_reason: None,
        snapshots: Vec::new(),
    };

    let mut iter = 0;
    let outcome = loop {
        if let Some(every) = config.snapshot_every {
            if iter % every == 0 {
                result.snapshots.push((iter, sketch.clone()));
            }
        }
        let scheduled = iter % config.eval_every == 0;
        if scheduled || iter == config.max_iters {
            let report = match evaluate(&sketch, raster, backend, EvalMode::Eval) {
                Ok((_, report)) => report,
                Err(e) => break Err(e),
            };
            result.eval_losses.push(EvalPoint {
                iter,
                loss: report.total,
                semantic: report.semantic,
                geometric: report.geometric,
            });
            log::debug!("seed {seed} iter {iter}: eval loss {:.6e}", report.total);
            if scheduled && monitor.observe(report.total) {
                result.stop_reason = StopReason::Converged;
                break Ok(());
            }
        }
        if iter == config.max_iters {
            result.stop_reason = StopReason::MaxIters;
            break Ok(());
        }
        let step = (|| -> Result<()> {
            let (_, report) = evaluate(&sketch, raster, backend, EvalMode::Train { seed: step_seed(seed, iter) })?;
            let grad = render_backward(&sketch, raster, &report.pixel_grad.sum_channels())?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::numeric(format!("non-finite control-point gradient at iteration {iter}")));
            }
            adam_step(&mut params, &grad, &mut adam, config)?;
            sketch = sketch.with_params(&params)?;
            Ok(())
        })();
        if let Err(e) = step {
            break Err(e);
        }
        iter += 1;
    };

    if let Err(e) = outcome {
        if result.eval_losses.is_empty() && !e.is_transport() {
            return Err(e);
        }
        log::warn!("seed {seed}: run aborted at iteration {iter}: {e}");
        result.stop_reason = StopReason::Aborted;
        result.abort_reason = Some(e.to_string());
    }
    result.final_sketch = sketch;
    Ok(result)
}

/// Everything one multi-seed optimization needs besides the backends.
#[derive(Debug, Clone)]
pub struct MultiSeedSetup<'a> {
    pub distribution: &'a DistributionMap,
    pub init: InitParams,
    pub raster: RasterConfig,
    pub config: OptConfig,
    pub seed_base: u64,
}

pub struct MultiSeedResult {
    pub best: usize,
    pub runs: Vec<OptRunResult>,
}

impl MultiSeedResult {
    pub fn best_run(&self) -> &OptRunResult {
        &self.runs[self.best]
    }
}

/// Runs one optimization per backend, seeds `seed_base + i`, in parallel.
///
/// The best run has the lowest final evaluation loss among runs that did
/// not abort; ties go to the lowest seed index.
pub fn run_multi_seed<B>(setup: &MultiSeedSetup<'_>, backends: Vec<B>) -> Result<MultiSeedResult>
where
    B: LossBackend + Send,
{
    setup.config.validate()?;
    if backends.len() != setup.config.seeds {
        return Err(Error::shape(format!("{} backends for {} seeds", backends.len(), setup.config.seeds)));
    }
    let outcomes: Vec<Result<OptRunResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = backends
            .into_iter()
            .enumerate()
            .map(|(i, mut backend)| {
                let seed = setup.seed_base.wrapping_add(i as u64);
                scope.spawn(move || {
                    let init = sample_initial_sketch(setup.distribution, &setup.init, seed)?;
                    run_single(&init, &mut backend, &setup.raster, &setup.config, seed)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("optimization thread panicked")).collect()
    });

    let mut runs = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        runs.push(outcome?);
    }
    let best = select_best(&runs).ok_or_else(|| Error::RunFailed("every seed aborted".into()))?;
    Ok(MultiSeedResult { best, runs })
}

fn select_best(runs: &[OptRunResult]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, run) in runs.iter().enumerate() {
        if run.stop_reason == StopReason::Aborted {
            continue;
        }
        let Some(loss) = run.final_loss() else { continue };
        if best.is_none_or(|(_, b)| loss < b) {
            best = Some((i, loss));
        }
    }
    best.map(|(i, _)| i)
}
