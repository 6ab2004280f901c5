//! Finite-difference audits of the jet and parameter-gradient engines.
//!
//! Random smooth composites and random networks are differentiated exactly
//! and compared against central differences. Errors are measured relative
//! to `max(|reference|, 1)`.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::jet::{packed_index, Jet2};
use crate::network::batch::flatten_layers;
use crate::network::{Architecture, JetBatch, MlpParams, Order};
use crate::tape::{param_gradient, Var};

/// Central-difference step for input derivatives.
pub const FD_STEP: f64 = 1e-4;
/// Central-difference step for parameter derivatives.
pub const PARAM_FD_STEP: f64 = 1e-5;
pub const JET_TOL: f64 = 1e-6;
pub const PARAM_TOL: f64 = 1e-5;
/// Inputs are drawn from `[-INPUT_BOX, INPUT_BOX]^d`.
pub const INPUT_BOX: f64 = 2.0;

/// A random expression over the coordinates, built from smooth primitives.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Var(usize),
    Const(f64),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Scale(f64, Box<Expr>),
    Square(Box<Expr>),
    Tanh(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    /// Expression tree of at most `depth` levels. Arguments of `exp` pass
    /// through `tanh` so values stay moderate on the input box.
    pub fn random(dim: usize, depth: usize, rng: &mut impl Rng) -> Expr {
        if depth == 0 || rng.random_bool(0.2) {
            return if rng.random_bool(0.8) {
                Expr::Var(rng.random_range(0..dim))
            } else {
                Expr::Const(rng.random_range(-1.0..1.0))
            };
        }
        let sub = |rng: &mut _| Box::new(Expr::random(dim, depth - 1, rng));
        match rng.random_range(0..8) {
            0 => Expr::Add(sub(rng), sub(rng)),
            1 => Expr::Mul(sub(rng), sub(rng)),
            2 => Expr::Scale(rng.random_range(-1.5..1.5), sub(rng)),
            3 => Expr::Square(sub(rng)),
            4 => Expr::Tanh(sub(rng)),
            5 => Expr::Sin(sub(rng)),
            6 => Expr::Cos(sub(rng)),
            _ => Expr::Exp(Box::new(Expr::Tanh(sub(rng)))),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Var(i) => x[*i],
            Expr::Const(c) => *c,
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Scale(c, a) => c * a.eval(x),
            Expr::Square(a) => a.eval(x).powi(2),
            Expr::Tanh(a) => a.eval(x).tanh(),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
            Expr::Exp(a) => a.eval(x).exp(),
        }
    }

    pub fn jet(&self, x: &[f64]) -> Result<Jet2> {
        Ok(match self {
            Expr::Var(i) => Jet2::var(x, *i)?,
            Expr::Const(c) => Jet2::constant(x.len(), *c),
            Expr::Add(a, b) => a.jet(x)?.add(&b.jet(x)?)?,
            Expr::Mul(a, b) => a.jet(x)?.mul(&b.jet(x)?)?,
            Expr::Scale(c, a) => a.jet(x)?.scale(*c),
            Expr::Square(a) => a.jet(x)?.square(),
            Expr::Tanh(a) => a.jet(x)?.tanh(),
            Expr::Sin(a) => a.jet(x)?.sin(),
            Expr::Cos(a) => a.jet(x)?.cos(),
            Expr::Exp(a) => a.jet(x)?.exp(),
        })
    }
}

/// Gradient and packed Hessian of `f` at `x` by central differences.
pub fn central_differences(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let d = x.len();
    let at = |steps: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(k, s) in steps {
            y[k] += s;
        }
        f(&y)
    };
    let f0 = f(x);
    let grad = (0..d)
        .map(|k| (at(&[(k, h)]) - at(&[(k, -h)])) / (2.0 * h))
        .collect();
    let mut hess = vec![0.0; d * (d + 1) / 2];
    for k in 0..d {
        for l in k..d {
            hess[packed_index(d, k, l)] = if k == l {
                (at(&[(k, h)]) - 2.0 * f0 + at(&[(k, -h)])) / (h * h)
            } else {
                (at(&[(k, h), (l, h)]) - at(&[(k, h), (l, -h)]) - at(&[(k, -h), (l, h)])
                    + at(&[(k, -h), (l, -h)]))
                    / (4.0 * h * h)
            };
        }
    }
    (grad, hess)
}

fn rel_err(exact: f64, reference: f64) -> f64 {
    (exact - reference).abs() / reference.abs().max(1.0)
}

/// Largest relative gradient and Hessian errors of a jet against central
/// differences of its value function.
pub fn jet_errors(jet: &Jet2, f: impl Fn(&[f64]) -> f64, x: &[f64]) -> (f64, f64) {
    let (g, h) = central_differences(f, x, FD_STEP);
    let eg = jet
        .grad
        .iter()
        .zip(&g)
        .map(|(a, b)| rel_err(*a, *b))
        .fold(0.0, f64::max);
    let eh = jet
        .hess
        .packed()
        .iter()
        .zip(&h)
        .map(|(a, b)| rel_err(*a, *b))
        .fold(0.0, f64::max);
    (eg, eh)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityReport {
    pub cases: usize,
    pub max_grad_error: f64,
    pub max_hess_error: f64,
    pub max_param_error: f64,
}

impl FidelityReport {
    pub fn passed(&self) -> bool {
        self.max_grad_error <= JET_TOL
            && self.max_hess_error <= JET_TOL
            && self.max_param_error <= PARAM_TOL
    }
}

fn random_point(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-INPUT_BOX..INPUT_BOX)).collect()
}

/// Composite `seed`: dimension 1 to 3, depth 4, one random point per case.
pub fn random_composite(seed: u64) -> (Expr, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=3);
    (Expr::random(dim, 4, &mut rng), random_point(dim, &mut rng))
}

pub fn composite_fidelity(cases: usize, seed: u64) -> Result<FidelityReport> {
    let mut report = FidelityReport {
        cases,
        max_grad_error: 0.0,
        max_hess_error: 0.0,
        max_param_error: 0.0,
    };
    for c in 0..cases as u64 {
        let (expr, x) = random_composite(seed.wrapping_add(c));
        let (eg, eh) = jet_errors(&expr.jet(&x)?, |y| expr.eval(y), &x);
        report.max_grad_error = report.max_grad_error.max(eg);
        report.max_hess_error = report.max_hess_error.max(eh);
    }
    Ok(report)
}

/// Network `seed`: input dimension 1 or 2, two hidden layers of random
/// width, Glorot weights and random biases.
pub fn random_network(seed: u64) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=2);
    let widths = vec![dim, rng.random_range(3..=12), rng.random_range(3..=12), 1];
    let arch = Architecture::new(widths).expect("valid widths");
    let mut params = MlpParams::init(&arch, seed);
    for layer in params.layers_mut() {
        layer.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    params
}

const NETWORK_POINTS: usize = 4;

/// Input jets of networks against central differences (pointwise and
/// batched engines), and parameter gradients of
/// `0.5 * sum (h + |Dh|^2 + tr D^2h)^2` over the points (batched reverse
/// pass and scalar tape) against central differences in the parameters.
pub fn network_fidelity(cases: usize, seed: u64) -> Result<FidelityReport> {
    let mut report = FidelityReport {
        cases,
        max_grad_error: 0.0,
        max_hess_error: 0.0,
        max_param_error: 0.0,
    };
    for c in 0..cases as u64 {
        let params = random_network(seed.wrapping_add(c));
        let dim = params.arch().input_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c));
        rng.set_stream(1);
        let pts: Vec<Vec<f64>> = (0..NETWORK_POINTS).map(|_| random_point(dim, &mut rng)).collect();
        let points = Array2::from_shape_fn((NETWORK_POINTS, dim), |(i, k)| pts[i][k]);
        let batch = JetBatch::forward(&params, &points, Order::Second)?;
        let value = |y: &[f64]| params.forward(y).expect("dimension checked");
        for (i, x) in pts.iter().enumerate() {
            for jet in [params.forward_jet(x)?, batch.jet(i)] {
                let (eg, eh) = jet_errors(&jet, value, x);
                report.max_grad_error = report.max_grad_error.max(eg);
                report.max_hess_error = report.max_hess_error.max(eh);
            }
        }

        let batched = jet_loss_gradient(&params, &points)?;
        let tape = value_loss_tape_gradient(&params, &pts)?;
        let theta = params.to_flat();
        let mut probe = params.clone();
        let mut numeric = |i: usize, f: &dyn Fn(&MlpParams) -> f64| -> Result<f64> {
            let h = PARAM_FD_STEP * theta[i].abs().max(1.0);
            let mut t = theta.clone();
            t[i] += h;
            probe.set_flat(&t)?;
            let up = f(&probe);
            t[i] -= 2.0 * h;
            probe.set_flat(&t)?;
            Ok((up - f(&probe)) / (2.0 * h))
        };
        for i in 0..theta.len() {
            let fd = numeric(i, &|q| jet_loss(q, &points).expect("same shape"))?;
            report.max_param_error = report.max_param_error.max(rel_err(batched[i], fd));
            let fd = numeric(i, &|q| value_loss(q, &pts))?;
            report.max_param_error = report.max_param_error.max(rel_err(tape[i], fd));
        }
    }
    Ok(report)
}

fn jet_loss_terms(batch: &JetBatch) -> Vec<f64> {
    let d = batch.dim();
    (0..batch.points())
        .map(|i| {
            batch.value(i)
                + (0..d).map(|k| batch.grad(i, k).powi(2)).sum::<f64>()
                + (0..d).map(|k| batch.hess(i, packed_index(d, k, k))).sum::<f64>()
        })
        .collect()
}

fn jet_loss(params: &MlpParams, points: &Array2<f64>) -> Result<f64> {
    let batch = JetBatch::forward(params, points, Order::Second)?;
    Ok(0.5 * jet_loss_terms(&batch).iter().map(|t| t * t).sum::<f64>())
}

fn jet_loss_gradient(params: &MlpParams, points: &Array2<f64>) -> Result<Vec<f64>> {
    let batch = JetBatch::forward(params, points, Order::Second)?;
    let (d, p) = (batch.dim(), batch.points());
    let terms = jet_loss_terms(&batch);
    let mut adj = Array1::zeros(batch.output().len());
    for (i, t) in terms.iter().enumerate() {
        adj[i] = *t;
        for k in 0..d {
            adj[(1 + k) * p + i] = t * 2.0 * batch.grad(i, k);
            adj[(1 + d + packed_index(d, k, k)) * p + i] = *t;
        }
    }
    Ok(flatten_layers(&batch.backward(params, &adj)?))
}

// targets of the value loss, fixed per point index
fn value_target(i: usize) -> f64 {
    0.3 * i as f64 - 0.4
}

fn value_loss(params: &MlpParams, pts: &[Vec<f64>]) -> f64 {
    pts.iter()
        .enumerate()
        .map(|(i, x)| (params.forward(x).expect("dimension checked") - value_target(i)).powi(2))
        .sum()
}

fn value_loss_tape_gradient(params: &MlpParams, pts: &[Vec<f64>]) -> Result<Vec<f64>> {
    let g = param_gradient(params, |tape, net| {
        let mut terms: Vec<Var> = Vec::with_capacity(pts.len());
        for (i, x) in pts.iter().enumerate() {
            let h = net.forward(tape, x)?;
            let r = tape.add_const(h, -value_target(i));
            terms.push(tape.square(r));
        }
        Ok(tape.sum(&terms))
    })?;
    Ok(g.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_differences_of_a_quadratic_are_exact() {
        let f = |y: &[f64]| y[0] * y[0] + 3.0 * y[0] * y[1];
        let (g, h) = central_differences(f, &[1.0, 2.0], 1e-3);
        assert!((g[0] - 8.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
        assert!((h[0] - 2.0).abs() < 1e-5 && (h[1] - 3.0).abs() < 1e-5 && h[2].abs() < 1e-5);
    }

    #[test]
    fn expression_jets_agree_with_values() {
        let (e, x) = random_composite(3);
        assert!((e.jet(&x).unwrap().value - e.eval(&x)).abs() < 1e-12);
    }

    #[test]
    fn a_few_composites_and_networks_pass() {
        assert!(composite_fidelity(10, 0).unwrap().passed());
        let r = network_fidelity(3, 0).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
