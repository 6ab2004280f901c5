//! Full-batch minimization of the Hölder-regularized empirical loss.

pub mod objective;
pub mod report;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::error::{Error, Result};
use crate::holder::{HolderMode, DEFAULT_PAIR_BUDGET, DEFAULT_TEMPERATURE};
use crate::loss::{lambda_hat, pinn_terms, regularized_loss, HolderOptions, LossWeights};
use crate::model::{Model, Points};
use crate::network::{Architecture, MlpParams};
use crate::operators::OperatorSpec;
use crate::sampling::{density_constants, TrainingSet};

pub use objective::{Evaluation, Objective};
pub use report::{HistoryRow, HolderTracePoint, TrainReport, TrainSummary, REPORT_SCHEMA};

const DIVERGENCE_FACTOR: f64 = 1e6;
const GRADIENT_CHECK_COORDS: usize = 10;
const GRADIENT_CHECK_STEP: f64 = 1e-5;
const GRADIENT_CHECK_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    GradientDescent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    /// Multiplier applied to the minimal regularization weights.
    pub kappa: f64,
    pub alpha: f64,
    pub temperature: f64,
    pub epsilon: f64,
    /// Omits wall-clock timings so reports are byte-reproducible.
    pub deterministic: bool,
    pub log_every: usize,
    /// `None` uses every pair.
    pub pair_budget: Option<usize>,
    pub gradient_check: bool,
    /// Nodes per axis of the grid on which the C0 error is measured.
    pub probe_resolution: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Adam,
            learning_rate: 1e-3,
            steps: 1000,
            seed: 0,
            kappa: 1.0,
            alpha: 1.0,
            temperature: DEFAULT_TEMPERATURE,
            epsilon: 1e-3,
            deterministic: false,
            log_every: 100,
            pair_budget: Some(DEFAULT_PAIR_BUDGET),
            gradient_check: true,
            probe_resolution: 257,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.learning_rate));
        }
        if self.steps == 0 {
            return bad("step count must be >= 1".into());
        }
        if !(self.epsilon >= 0.0) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.kappa >= 1.0) {
            return bad(format!("kappa must be >= 1, got {}", self.kappa));
        }
        if self.log_every == 0 {
            return bad("log_every must be >= 1".into());
        }
        if self.probe_resolution < 2 {
            return bad("probe_resolution must be >= 2".into());
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for ((th, g), (m, v)) in theta
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *th -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Compares the analytic gradient with central differences on a few
/// seeded coordinates.
pub fn gradient_check(objective: &Objective, params: &MlpParams, seed: u64) -> Result<()> {
    let analytic = objective
        .evaluate(params, true)?
        .grad
        .expect("gradient requested");
    let theta = params.to_flat();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(GRADIENT_CHECK_COORDS as u64);
    let mut probe = params.clone();
    for _ in 0..GRADIENT_CHECK_COORDS.min(theta.len()) {
        let i = rng.random_range(0..theta.len());
        let h = GRADIENT_CHECK_STEP * theta[i].abs().max(1.0);
        let mut t = theta.clone();
        t[i] = theta[i] + h;
        probe.set_flat(&t)?;
        let up = objective.value(&probe)?;
        t[i] = theta[i] - h;
        probe.set_flat(&t)?;
        let down = objective.value(&probe)?;
        let numeric = (up - down) / (2.0 * h);
        let scale = numeric.abs().max(analytic[i].abs()).max(1.0);
        if (numeric - analytic[i]).abs() > GRADIENT_CHECK_TOL * scale {
            return Err(Error::GradientCheck {
                index: i,
                analytic: analytic[i],
                numeric,
            });
        }
    }
    Ok(())
}

/// Minimizes the smooth-mode regularized loss from the seeded initial
/// network and returns the best parameters seen.
pub fn train(
    spec: &OperatorSpec,
    arch: &Architecture,
    set: &TrainingSet,
    weights: &LossWeights,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_from(spec, MlpParams::init(arch, cfg.seed), set, weights, cfg)
}

/// [`train`] from given initial parameters. A zero-step run is allowed here
/// and reports the initial state.
pub fn train_from(
    spec: &OperatorSpec,
    initial: MlpParams,
    set: &TrainingSet,
    weights: &LossWeights,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let steps = cfg.steps;
    TrainConfig { steps: steps.max(1), ..cfg.clone() }.validate()?;
    if initial.arch().input_dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: initial.arch().input_dim(),
        });
    }
    let started = Instant::now();
    let consts = density_constants(&set.domain)?;
    let sched = lambda_hat(weights, set.m_r(), set.m_b(), set.dim(), cfg.alpha, &consts)?
        .with_kappa(cfg.kappa)?;
    let mode = HolderMode::Smooth {
        temperature: cfg.temperature,
    };
    let objective = Objective::new(spec, set, *weights, sched, mode, cfg.pair_budget, cfg.seed)?;

    let mut params = initial;
    if cfg.gradient_check && steps > 0 {
        gradient_check(&objective, &params, cfg.seed)?;
    }
    let mut theta = params.to_flat();
    let mut adam = Adam::new(theta.len());
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut initial_loss = f64::NAN;
    let mut history = Vec::new();

    for step in 0..=steps {
        let ev = objective.evaluate(&params, step < steps)?;
        if !ev.total.is_finite() {
            return Err(Error::TrainingAborted {
                step,
                reason: format!("loss is {}", ev.total),
            });
        }
        if step == 0 {
            initial_loss = ev.total;
        } else if ev.total > DIVERGENCE_FACTOR * initial_loss {
            return Err(Error::TrainingAborted {
                step,
                reason: format!(
                    "loss {} exceeds {DIVERGENCE_FACTOR:e} times the initial loss {initial_loss}",
                    ev.total
                ),
            });
        }
        if ev.total < best.0 {
            best = (ev.total, params.clone(), step);
        }
        if step % cfg.log_every == 0 || step == steps {
            history.push(HistoryRow {
                step,
                loss_pinn: ev.pinn,
                loss_reg_r: ev.reg_r,
                loss_reg_b: ev.reg_b,
                lambda_hat_r: sched.lambda_hat_r,
                lambda_hat_b: sched.lambda_hat_b,
                c_m: sched.c_m,
                loss_total: ev.total,
                running_min: best.0,
                holder_residual: ev.holder_residual,
                holder_boundary: ev.holder_boundary,
                holder_interior: ev.holder_interior,
            });
        }
        let Some(grad) = ev.grad else { break };
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingAborted {
                step,
                reason: "non-finite gradient".into(),
            });
        }
        match cfg.optimizer {
            Optimizer::Adam => adam.step(&mut theta, &grad, cfg.learning_rate),
            Optimizer::GradientDescent => {
                for (t, g) in theta.iter_mut().zip(&grad) {
                    *t -= cfg.learning_rate * g;
                }
            }
        }
        params.set_flat(&theta)?;
    }

    let (best_loss, params, best_step) = best;
    let final_pinn_loss = pinn_terms(&params, spec, set)?.loss(weights);
    let hard = regularized_loss(&params, spec, set, weights, &sched, &HolderOptions::exhaustive())?;
    let c0_error = match spec.exact {
        Some(exact) => {
            let probe = set.domain.probe_grid(cfg.probe_resolution)?;
            Some(c0_error(&params, exact.value, &probe)?)
        }
        None => None,
    };
    let interior_values = params.values(&set.interior)?;
    let holder_interior = if set.m_r() >= 2 {
        crate::holder::holder_seminorm_sq(
            &interior_values,
            &set.interior,
            cfg.alpha,
            HolderMode::Hard,
            None,
            cfg.seed,
        )?
        .value
    } else {
        0.0
    };
    let summary = TrainSummary {
        schema: REPORT_SCHEMA.to_string(),
        version: csvio::VERSION.to_string(),
        operator: spec.name.to_string(),
        arch: params.arch().widths().to_vec(),
        seed: cfg.seed,
        training_set_seed: set.seed,
        m_r: set.m_r(),
        m_b: set.m_b(),
        config: TrainConfig {
            steps,
            ..cfg.clone()
        },
        weights: *weights,
        schedule: sched,
        density_constants: consts,
        steps_run: steps,
        best_step,
        initial_loss,
        final_regularized_loss: best_loss,
        final_pinn_loss,
        final_regularized_loss_hard: hard.total,
        holder_residual: hard.holder_residual.as_ref().map_or(0.0, |e| e.value),
        holder_boundary: hard.holder_boundary.as_ref().map(|e| e.value),
        holder_interior,
        c0_error,
        wall_clock_seconds: (!cfg.deterministic).then(|| started.elapsed().as_secs_f64()),
        holder_trace: history.iter().map(HolderTracePoint::from).collect(),
    };
    Ok(TrainReport {
        summary,
        params,
        history,
    })
}

/// `final_regularized_loss <= baseline + epsilon`.
pub fn epsilon_accept(report: &TrainReport, baseline: f64, epsilon: f64) -> bool {
    report.summary.final_regularized_loss <= baseline + epsilon
}

/// Largest `|h(x) - reference(x)|` over the probe points.
pub fn c0_error<M, F>(h: &M, reference: F, probe: &Points) -> Result<f64>
where
    M: Model + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let values = h.values(probe)?;
    let mut worst: f64 = 0.0;
    for (v, x) in values.iter().zip(probe.outer_iter()) {
        let e = (v - reference(x.as_slice().expect("row-major points"))).abs();
        if !e.is_finite() {
            return Err(Error::DegenerateEvaluation(format!(
                "non-finite error at x = {:?}",
                x.to_vec()
            )));
        }
        worst = worst.max(e);
    }
    Ok(worst)
}
