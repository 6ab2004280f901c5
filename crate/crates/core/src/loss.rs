//! PINN losses, the data-dependent regularization schedule and the
//! generalization bound
//! `Loss_PINN(h) <= C_m Loss_m(h; lambda, lambda_hat) + C' m_b^(-alpha/(d-1))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holder::{HolderEstimate, HolderMode, PairGeometry};
use crate::model::{Model, Points};
use crate::operators::OperatorSpec;
use crate::sampling::{DensityConstants, Domain, TrainingSet};
use crate::stats;

/// Dense boundary sample used to estimate `[g]` for `C'`.
pub const BOUNDARY_DATA_POINTS: usize = 10_000;

// keeps Monte Carlo draws apart from training-set draws with the same seed
const MC_STREAM: u64 = 0x6d63;

/// `(lambda_r, lambda_b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_r: f64,
    pub lambda_b: f64,
}

impl LossWeights {
    pub fn new(lambda_r: f64, lambda_b: f64) -> Result<Self> {
        if !(lambda_r >= 0.0 && lambda_b >= 0.0) || !lambda_r.is_finite() || !lambda_b.is_finite() {
            return Err(Error::InvalidInput(format!(
                "loss weights must be finite and nonnegative, got ({lambda_r}, {lambda_b})"
            )));
        }
        Ok(Self { lambda_r, lambda_b })
    }

    pub fn unit() -> Self {
        Self {
            lambda_r: 1.0,
            lambda_b: 1.0,
        }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::unit()
    }
}

/// `lambda_hat^R`, `C_m` and the multiplier `kappa` forming
/// `lambda^R = kappa * lambda_hat^R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegSchedule {
    pub alpha: f64,
    pub lambda_hat_r: f64,
    pub lambda_hat_b: f64,
    #[serde(rename = "C_m")]
    pub c_m: f64,
    pub kappa: f64,
}

impl RegSchedule {
    pub fn reg_r(&self) -> f64 {
        self.kappa * self.lambda_hat_r
    }

    pub fn reg_b(&self) -> f64 {
        self.kappa * self.lambda_hat_b
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        if !(kappa >= 1.0 && kappa.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "regularization multiplier must be >= 1, got {kappa}"
            )));
        }
        self.kappa = kappa;
        Ok(self)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// The minimal regularization weights for `m = (m_r, m_b)` samples.
///
/// `d >= 2`: `C_m = 3 max(kappa_r sqrt(d)^d m_r^(1/2), kappa_b sqrt(d)^(d-1) m_b^(1/2))`,
/// `lambda_hat_r = 3 lambda_r d^alpha c_r^(-2 alpha/d) m_r^(-alpha/d) / C_m` and
/// `lambda_hat_b = 3 lambda_b d^alpha c_b^(-2 alpha/(d-1)) m_b^(-alpha/(d-1)) / C_m`.
///
/// `d = 1`: `C_m = 3 kappa_r m_r^(1/2)`,
/// `lambda_hat_r = lambda_r c_r^(-2 alpha) m_r^(-alpha - 1/2) / kappa_r`, `lambda_hat_b = 0`.
pub fn lambda_hat(
    weights: &LossWeights,
    m_r: usize,
    m_b: usize,
    d: usize,
    alpha: f64,
    k: &DensityConstants,
) -> Result<RegSchedule> {
    check_alpha(alpha)?;
    if m_r == 0 || m_b == 0 || d == 0 {
        return Err(Error::InvalidInput(format!(
            "need m_r, m_b, d >= 1, got ({m_r}, {m_b}, {d})"
        )));
    }
    let (mr, mb, df) = (m_r as f64, m_b as f64, d as f64);
    let (c_m, hat_r, hat_b) = if d == 1 {
        let c_m = 3.0 * k.kappa_r() * mr.sqrt();
        let hat_r = weights.lambda_r * k.c_r.powf(-2.0 * alpha) / k.kappa_r() * mr.powf(-alpha - 0.5);
        (c_m, hat_r, 0.0)
    } else {
        let root = df.sqrt();
        let c_m = 3.0
            * f64::max(
                k.kappa_r() * root.powi(d as i32) * mr.sqrt(),
                k.kappa_b() * root.powi(d as i32 - 1) * mb.sqrt(),
            );
        let scale = 3.0 * root.powf(2.0 * alpha) / c_m;
        let hat_r = scale * weights.lambda_r * k.c_r.powf(-2.0 * alpha / df) * mr.powf(-alpha / df);
        let hat_b = scale
            * weights.lambda_b
            * k.c_b.powf(-2.0 * alpha / (df - 1.0))
            * mb.powf(-alpha / (df - 1.0));
        (c_m, hat_r, hat_b)
    };
    Ok(RegSchedule {
        alpha,
        lambda_hat_r: hat_r,
        lambda_hat_b: hat_b,
        c_m,
        kappa: 1.0,
    })
}

/// `C' = 3 lambda_b d^alpha c_b^(-2 alpha/(d-1)) [g]^2` for `d >= 2`, zero for `d = 1`.
pub fn boundary_constant(
    weights: &LossWeights,
    d: usize,
    alpha: f64,
    k: &DensityConstants,
    g_holder_sq: f64,
) -> f64 {
    if d < 2 {
        return 0.0;
    }
    let df = d as f64;
    3.0 * weights.lambda_b * df.powf(alpha) * k.c_b.powf(-2.0 * alpha / (df - 1.0)) * g_holder_sq
}

/// Residuals `F[h]` at the interior samples and mismatches `h - g` at the
/// boundary samples.
#[derive(Clone, Debug, PartialEq)]
pub struct PinnTerms {
    pub residuals: Vec<f64>,
    pub boundary: Vec<f64>,
}

fn row(points: &Points, i: usize) -> Vec<f64> {
    points.row(i).to_vec()
}

pub fn residuals_at<M: Model + ?Sized>(h: &M, spec: &OperatorSpec, points: &Points) -> Result<Vec<f64>> {
    let jets = h.jets(points)?;
    jets.iter()
        .enumerate()
        .map(|(i, j)| {
            let x = row(points, i);
            spec.eval_residual(&x, j).map_err(|e| match e {
                Error::DegenerateEvaluation(_) => Error::DegenerateEvaluation(format!(
                    "non-finite residual at interior point {i} x = {x:?}"
                )),
                other => other,
            })
        })
        .collect()
}

pub fn boundary_mismatch_at<M: Model + ?Sized>(
    h: &M,
    spec: &OperatorSpec,
    points: &Points,
) -> Result<Vec<f64>> {
    let values = h.values(points)?;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = row(points, i);
            let r = v - spec.boundary_value(&x);
            if r.is_finite() {
                Ok(r)
            } else {
                Err(Error::DegenerateEvaluation(format!(
                    "non-finite boundary mismatch at boundary point {i} x = {x:?}"
                )))
            }
        })
        .collect()
}

pub fn pinn_terms<M: Model + ?Sized>(h: &M, spec: &OperatorSpec, set: &TrainingSet) -> Result<PinnTerms> {
    if h.dim() != spec.dim() || set.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: if h.dim() != spec.dim() { h.dim() } else { set.dim() },
        });
    }
    Ok(PinnTerms {
        residuals: residuals_at(h, spec, &set.interior)?,
        boundary: boundary_mismatch_at(h, spec, &set.boundary)?,
    })
}

fn mean_sq(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

impl PinnTerms {
    /// `(lambda_r / m_r) sum F^2 + (lambda_b / m_b) sum (h - g)^2`.
    pub fn loss(&self, w: &LossWeights) -> f64 {
        w.lambda_r * mean_sq(&self.residuals) + w.lambda_b * mean_sq(&self.boundary)
    }
}

pub fn empirical_pinn_loss<M: Model + ?Sized>(
    h: &M,
    spec: &OperatorSpec,
    set: &TrainingSet,
    weights: &LossWeights,
) -> Result<f64> {
    if set.m_r() == 0 || set.m_b() == 0 {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    Ok(pinn_terms(h, spec, set)?.loss(weights))
}

/// How seminorms are estimated: mode, pair budget (`None` = all pairs) and
/// the seed of the pair subsample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderOptions {
    pub mode: HolderMode,
    pub pair_budget: Option<usize>,
    pub seed: u64,
}

impl HolderOptions {
    /// Hard maximum over every pair.
    pub fn exhaustive() -> Self {
        Self {
            mode: HolderMode::Hard,
            pair_budget: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizedLoss {
    pub pinn: f64,
    /// `[F[h]]^2` over the interior samples.
    pub holder_residual: Option<HolderEstimate>,
    /// `[h]^2` over the boundary samples (`d >= 2`).
    pub holder_boundary: Option<HolderEstimate>,
    pub reg_r_term: f64,
    pub reg_b_term: f64,
    pub total: f64,
}

fn seminorm(values: &[f64], points: &Points, alpha: f64, opts: &HolderOptions) -> Result<Option<HolderEstimate>> {
    if points.nrows() < 2 {
        return Ok(None);
    }
    PairGeometry::sampled(points, alpha, opts.pair_budget, opts.seed)?
        .estimate(values, opts.mode)
        .map(Some)
}

/// `Loss_m^PINN + lambda^R_r [F[h]]^2 (+ lambda^R_b [h]^2 on the boundary if d >= 2)`.
pub fn regularized_loss<M: Model + ?Sized>(
    h: &M,
    spec: &OperatorSpec,
    set: &TrainingSet,
    weights: &LossWeights,
    sched: &RegSchedule,
    opts: &HolderOptions,
) -> Result<RegularizedLoss> {
    let terms = pinn_terms(h, spec, set)?;
    let pinn = terms.loss(weights);
    let holder_residual = seminorm(&terms.residuals, &set.interior, sched.alpha, opts)?;
    let holder_boundary = if set.dim() >= 2 {
        let values = h.values(&set.boundary)?;
        seminorm(&values, &set.boundary, sched.alpha, opts)?
    } else {
        None
    };
    let reg_r_term = sched.reg_r() * holder_residual.as_ref().map_or(0.0, |e| e.value);
    let reg_b_term = if set.dim() >= 2 {
        sched.reg_b() * holder_boundary.as_ref().map_or(0.0, |e| e.value)
    } else {
        0.0
    };
    Ok(RegularizedLoss {
        pinn,
        holder_residual,
        holder_boundary,
        reg_r_term,
        reg_b_term,
        total: pinn + reg_r_term + reg_b_term,
    })
}

/// Monte Carlo estimate of `lambda_r ||F[h]||^2 + lambda_b ||h - g||^2` in
/// `L^2` of the sampling measures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub residual_term: f64,
    pub residual_stderr: f64,
    pub boundary_term: f64,
    pub boundary_stderr: f64,
    pub samples: usize,
}

impl McEstimate {
    /// `value + 3 stderr`.
    pub fn upper(&self) -> f64 {
        self.value + 3.0 * self.stderr
    }
}

/// Uniform samples for the Monte Carlo estimate, drawn from a stream that is
/// independent of the training set with the same seed.
pub fn mc_points(domain: &Domain, n: usize, seed: u64) -> (Points, Points) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(MC_STREAM);
    let d = domain.dim;
    let interior: Vec<f64> = (0..n).flat_map(|_| domain.sample_interior(&mut rng)).collect();
    let boundary: Vec<f64> = match domain.endpoints() {
        Some(ends) => ends.to_vec(),
        None => (0..n).flat_map(|_| domain.sample_boundary(&mut rng)).collect(),
    };
    let nb = boundary.len() / d;
    (
        Points::from_shape_vec((n, d), interior).expect("shape"),
        Points::from_shape_vec((nb, d), boundary).expect("shape"),
    )
}

/// For `d = 1` the boundary measure sits on the two endpoints and its term
/// is computed exactly.
pub fn expected_loss_mc<M: Model + ?Sized>(
    h: &M,
    spec: &OperatorSpec,
    weights: &LossWeights,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n < 100 {
        return Err(Error::InvalidInput(format!(
            "Monte Carlo estimate needs at least 100 samples, got {n}"
        )));
    }
    let (interior, boundary) = mc_points(&spec.domain, n, seed);
    let sq = |v: Vec<f64>| v.into_iter().map(|x| x * x).collect::<Vec<_>>();
    let (r_mean, r_se) = stats::mean_stderr(&sq(residuals_at(h, spec, &interior)?));
    let (b_mean, b_se) = stats::mean_stderr(&sq(boundary_mismatch_at(h, spec, &boundary)?));
    let b_se = if spec.dim() == 1 { 0.0 } else { b_se };
    let residual_term = weights.lambda_r * r_mean;
    let boundary_term = weights.lambda_b * b_mean;
    let residual_stderr = weights.lambda_r * r_se;
    let boundary_stderr = weights.lambda_b * b_se;
    Ok(McEstimate {
        value: residual_term + boundary_term,
        stderr: residual_stderr.hypot(boundary_stderr),
        residual_term,
        residual_stderr,
        boundary_term,
        boundary_stderr,
        samples: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Upper edge of the Monte Carlo estimate, `value + 3 stderr`.
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
    pub expected: McEstimate,
    pub regularized: RegularizedLoss,
    #[serde(rename = "C_m")]
    pub c_m: f64,
    #[serde(rename = "C_prime")]
    pub c_prime: f64,
    pub boundary_term: f64,
}

/// Evaluates the generalization bound for one operator, caching the
/// boundary-data seminorm `[g]^2` that enters `C'`.
pub struct BoundChecker<'a> {
    spec: &'a OperatorSpec,
    alpha: f64,
    g_holder_sq: f64,
}

impl<'a> BoundChecker<'a> {
    pub fn new(spec: &'a OperatorSpec, alpha: f64, seed: u64) -> Result<Self> {
        check_alpha(alpha)?;
        let g_holder_sq = if spec.dim() >= 2 {
            let (_, boundary) = mc_points(&spec.domain, BOUNDARY_DATA_POINTS, seed);
            let g: Vec<f64> = boundary
                .outer_iter()
                .map(|x| spec.boundary_value(x.as_slice().expect("row-major points")))
                .collect();
            PairGeometry::sampled(&boundary, alpha, None, seed)?
                .estimate(&g, HolderMode::Hard)?
                .value
        } else {
            0.0
        };
        Ok(Self {
            spec,
            alpha,
            g_holder_sq,
        })
    }

    pub fn g_holder_sq(&self) -> f64 {
        self.g_holder_sq
    }

    pub fn check<M: Model + ?Sized>(
        &self,
        h: &M,
        set: &TrainingSet,
        weights: &LossWeights,
        sched: &RegSchedule,
        n_mc: usize,
        seed: u64,
    ) -> Result<BoundReport> {
        if sched.alpha != self.alpha {
            return Err(Error::InvalidInput(format!(
                "schedule alpha {} differs from checker alpha {}",
                sched.alpha, self.alpha
            )));
        }
        let expected = expected_loss_mc(h, self.spec, weights, n_mc, seed)?;
        let regularized = regularized_loss(h, self.spec, set, weights, sched, &HolderOptions::exhaustive())?;
        let d = set.dim();
        let k = crate::sampling::density_constants(&set.domain)?;
        let c_prime = boundary_constant(weights, d, self.alpha, &k, self.g_holder_sq);
        let boundary_term = if d >= 2 {
            c_prime * (set.m_b() as f64).powf(-self.alpha / (d as f64 - 1.0))
        } else {
            0.0
        };
        let lhs = expected.upper();
        let rhs = sched.c_m * regularized.total + boundary_term;
        Ok(BoundReport {
            lhs,
            rhs,
            slack: rhs - lhs,
            holds: lhs <= rhs,
            expected,
            regularized,
            c_m: sched.c_m,
            c_prime,
            boundary_term,
        })
    }
}

/// One-shot form of [`BoundChecker::check`].
pub fn check_generalization_bound<M: Model + ?Sized>(
    h: &M,
    spec: &OperatorSpec,
    set: &TrainingSet,
    weights: &LossWeights,
    sched: &RegSchedule,
    n_mc: usize,
    seed: u64,
) -> Result<BoundReport> {
    BoundChecker::new(spec, sched.alpha, seed)?.check(h, set, weights, sched, n_mc, seed)
}
