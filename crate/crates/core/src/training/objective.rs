//! The smooth-mode regularized loss and its exact parameter gradient.

use std::sync::Mutex;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::holder::{HolderMode, PairGeometry};
use crate::jet::packed_len;
use crate::loss::{LossWeights, RegSchedule};
use crate::network::batch::{flatten_layers, BackwardScratch};
use crate::network::{JetBatch, Layer, MlpParams, Order};
use crate::operators::OperatorSpec;
use crate::sampling::TrainingSet;

/// Loss components at one parameter vector. Seminorm traces are hard-mode
/// estimates on the training pairs.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub pinn: f64,
    pub reg_r: f64,
    pub reg_b: f64,
    pub total: f64,
    pub holder_residual: f64,
    pub holder_boundary: f64,
    pub holder_interior: f64,
    pub grad: Option<Vec<f64>>,
}

pub struct Objective<'a> {
    spec: &'a OperatorSpec,
    set: &'a TrainingSet,
    weights: LossWeights,
    sched: RegSchedule,
    mode: HolderMode,
    interior_pairs: Option<PairGeometry>,
    boundary_pairs: Option<PairGeometry>,
    interior_forcing: Vec<f64>,
    boundary_targets: Vec<f64>,
    // buffers reused across evaluations
    workspace: Mutex<Option<Workspace>>,
}

struct Workspace {
    inner: JetBatch,
    outer: JetBatch,
    scratch: BackwardScratch,
}

impl<'a> Objective<'a> {
    pub fn new(
        spec: &'a OperatorSpec,
        set: &'a TrainingSet,
        weights: LossWeights,
        sched: RegSchedule,
        mode: HolderMode,
        pair_budget: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        if set.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                got: set.dim(),
            });
        }
        let geometry = |pts: &crate::model::Points| -> Result<Option<PairGeometry>> {
            if pts.nrows() < 2 {
                Ok(None)
            } else {
                PairGeometry::sampled(pts, sched.alpha, pair_budget, seed).map(Some)
            }
        };
        Ok(Self {
            spec,
            set,
            weights,
            sched,
            mode,
            interior_pairs: geometry(&set.interior)?,
            boundary_pairs: geometry(&set.boundary)?,
            interior_forcing: set
                .interior
                .outer_iter()
                .map(|r| (spec.forcing)(r.as_slice().expect("row-major points")))
                .collect(),
            boundary_targets: set
                .boundary
                .outer_iter()
                .map(|r| spec.boundary_value(r.as_slice().expect("row-major points")))
                .collect(),
            workspace: Mutex::new(None),
        })
    }

    pub fn schedule(&self) -> &RegSchedule {
        &self.sched
    }

    pub fn evaluate(&self, params: &MlpParams, with_grad: bool) -> Result<Evaluation> {
        let d = self.set.dim();
        let m_r = self.set.m_r();
        let m_b = self.set.m_b();
        let mut guard = self.workspace.lock().unwrap_or_else(|e| e.into_inner());
        let refreshed = match guard.as_mut() {
            Some(ws) => ws.inner.refresh(params).and_then(|_| ws.outer.refresh(params)).is_ok(),
            None => false,
        };
        if !refreshed {
            *guard = Some(Workspace {
                inner: JetBatch::forward(params, &self.set.interior, Order::Second)?,
                outer: JetBatch::forward(params, &self.set.boundary, Order::Value)?,
                scratch: BackwardScratch::default(),
            });
        }
        let Workspace { inner, outer, scratch } = guard.as_mut().expect("filled above");

        let nq = packed_len(d);
        let mut residuals = Vec::with_capacity(m_r);
        let mut partials = Vec::with_capacity(if with_grad { m_r } else { 0 });
        let mut p = vec![0.0; d];
        let mut hess = vec![0.0; nq];
        for (i, &f) in self.interior_forcing.iter().enumerate() {
            for (k, pk) in p.iter_mut().enumerate() {
                *pk = inner.grad(i, k);
            }
            for (q, hq) in hess.iter_mut().enumerate() {
                *hq = inner.hess(i, q);
            }
            let r = inner.value(i);
            if with_grad {
                let part = self.spec.residual_partials_with_forcing(f, r, &p, &hess);
                residuals.push(part.value);
                partials.push(part);
            } else {
                residuals.push(self.spec.residual_with_forcing(f, r, &p, &hess));
            }
        }
        let h_boundary: Vec<f64> = (0..m_b).map(|j| outer.value(j)).collect();
        let mismatch: Vec<f64> = h_boundary
            .iter()
            .zip(&self.boundary_targets)
            .map(|(h, g)| h - g)
            .collect();
        let h_interior: Vec<f64> = (0..m_r).map(|i| inner.value(i)).collect();

        let w = &self.weights;
        let pinn = w.lambda_r * residuals.iter().map(|v| v * v).sum::<f64>() / m_r as f64
            + w.lambda_b * mismatch.iter().map(|v| v * v).sum::<f64>() / m_b as f64;

        let mut res_bar: Vec<f64> = residuals
            .iter()
            .map(|v| 2.0 * w.lambda_r * v / m_r as f64)
            .collect();
        let mut bnd_bar: Vec<f64> = mismatch
            .iter()
            .map(|v| 2.0 * w.lambda_b * v / m_b as f64)
            .collect();

        let (mut reg_r, mut holder_residual, mut holder_interior) = (0.0, 0.0, 0.0);
        if let Some(geo) = &self.interior_pairs {
            let (est, g) = geo.estimate_with_gradient(&residuals, self.mode)?;
            reg_r = self.sched.reg_r() * est.value;
            for (b, gi) in res_bar.iter_mut().zip(g) {
                *b += self.sched.reg_r() * gi;
            }
            holder_residual = geo.estimate(&residuals, HolderMode::Hard)?.value;
            holder_interior = geo.estimate(&h_interior, HolderMode::Hard)?.value;
        }
        let (mut reg_b, mut holder_boundary) = (0.0, 0.0);
        if let Some(geo) = &self.boundary_pairs {
            holder_boundary = geo.estimate(&h_boundary, HolderMode::Hard)?.value;
            if d >= 2 {
                let (est, g) = geo.estimate_with_gradient(&h_boundary, self.mode)?;
                reg_b = self.sched.reg_b() * est.value;
                for (b, gi) in bnd_bar.iter_mut().zip(g) {
                    *b += self.sched.reg_b() * gi;
                }
            }
        }
        let total = pinn + reg_r + reg_b;

        let grad = if with_grad {
            let mut adj_in = Array1::zeros(inner.output().len());
            for (i, (part, rb)) in partials.iter().zip(&res_bar).enumerate() {
                adj_in[i] = rb * part.d_r;
                for k in 0..d {
                    adj_in[(1 + k) * m_r + i] = rb * part.d_p[k];
                }
                for q in 0..nq {
                    adj_in[(1 + d + q) * m_r + i] = rb * part.d_x[q];
                }
            }
            let adj_out = Array1::from_vec(bnd_bar);
            let gi = inner.backward_with(params, &adj_in, scratch)?;
            let go = outer.backward_with(params, &adj_out, scratch)?;
            let summed: Vec<Layer> = gi
                .into_iter()
                .zip(go)
                .map(|(a, b)| Layer {
                    w: a.w + b.w,
                    b: a.b + b.b,
                })
                .collect();
            Some(flatten_layers(&summed))
        } else {
            None
        };

        Ok(Evaluation {
            pinn,
            reg_r,
            reg_b,
            total,
            holder_residual,
            holder_boundary,
            holder_interior,
            grad,
        })
    }

    /// Smooth-mode total only.
    pub fn value(&self, params: &MlpParams) -> Result<f64> {
        Ok(self.evaluate(params, false)?.total)
    }
}
