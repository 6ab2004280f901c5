//! Fully nonlinear operators `F(x, r, p, X)` and the bundled benchmarks.
//!
//! Every operator here has the shape
//! `F(x, r, p, X) = G(p, X) + c r - f(x)` with `c >= 0`, where `G` is one of
//! a few principal parts. Degenerate ellipticity asks `F` to be
//! nondecreasing in `r` and nonincreasing in `X` for the PSD order.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{packed_index, packed_len, Jet2, SymMatrix};
use crate::model::FnModel;
use crate::sampling::Domain;

pub const ELLIPTICITY_TOL: f64 = 1e-10;
pub const PUCCI_GRID: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub enum PrincipalPart {
    /// `-tr X`
    NegLaplacian,
    /// `|p|`
    GradientNorm,
    /// `-det X` on PSD Hessians, continued outside the cone by
    /// `-prod max(l_k, 0) + sum max(-l_k, 0)` over the eigenvalues `l_k`.
    /// The continuation is nonincreasing in `X` and positive whenever `X`
    /// has a negative eigenvalue, so concave candidates cannot zero it.
    NegDeterminant,
    /// `max_a (-a X_00)` over a finite coefficient set.
    PucciMax { coeffs: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admissibility {
    Any,
    /// Hessians restricted to the PSD cone (convex candidates).
    PsdHessian,
}

/// Closed-form solution with its analytic jet.
#[derive(Clone, Copy)]
pub struct ExactSolution {
    pub value: fn(&[f64]) -> f64,
    pub jet: fn(&[f64]) -> Jet2,
    /// `false` when the solution has kinks; the jet then holds one-sided data.
    pub smooth: bool,
}

#[derive(Clone)]
pub struct OperatorSpec {
    pub name: &'static str,
    pub domain: Domain,
    pub principal: PrincipalPart,
    /// Coefficient `c >= 0` of the zeroth-order term `c r`.
    pub zeroth_order: f64,
    pub forcing: fn(&[f64]) -> f64,
    pub boundary: fn(&[f64]) -> f64,
    pub exact: Option<ExactSolution>,
    pub admissibility: Admissibility,
    pub note: &'static str,
}

impl std::fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("principal", &self.principal)
            .field("zeroth_order", &self.zeroth_order)
            .finish_non_exhaustive()
    }
}

/// `F` and its partial derivatives with respect to `r`, `p` and the packed
/// upper triangle of `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualPartials {
    pub value: f64,
    pub d_r: f64,
    pub d_p: Vec<f64>,
    pub d_x: Vec<f64>,
}

impl OperatorSpec {
    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    /// Adds `c r` to the operator.
    pub fn with_zeroth_order(mut self, c: f64) -> Self {
        self.zeroth_order += c;
        self
    }

    /// `F(x, r, p, X)`; `hess` is the packed upper triangle of `X`.
    pub fn residual(&self, x: &[f64], r: f64, p: &[f64], hess: &[f64]) -> f64 {
        self.residual_with_forcing((self.forcing)(x), r, p, hess)
    }

    /// [`OperatorSpec::residual`] with the forcing value `f(x)` supplied.
    pub fn residual_with_forcing(&self, f: f64, r: f64, p: &[f64], hess: &[f64]) -> f64 {
        self.principal_value(p, hess) + self.zeroth_order * r - f
    }

    fn principal_value(&self, p: &[f64], hess: &[f64]) -> f64 {
        match &self.principal {
            PrincipalPart::NegLaplacian => {
                -(0..p.len()).map(|i| hess[packed_index(p.len(), i, i)]).sum::<f64>()
            }
            PrincipalPart::GradientNorm => p.iter().map(|v| v * v).sum::<f64>().sqrt(),
            PrincipalPart::NegDeterminant => continued_neg_det(&sym_eigen(p.len(), hess).0),
            PrincipalPart::PucciMax { coeffs } => coeffs
                .iter()
                .map(|a| -a * hess[0])
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `F[h](x)` from the jet of `h` at `x`.
    pub fn eval_residual(&self, x: &[f64], jet: &Jet2) -> Result<f64> {
        if x.len() != self.dim() || jet.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: if x.len() != self.dim() { x.len() } else { jet.dim() },
            });
        }
        let v = self.residual(x, jet.value, &jet.grad, jet.hess.packed());
        if !v.is_finite() {
            return Err(Error::DegenerateEvaluation(format!(
                "{} residual is {v} at x = {x:?}",
                self.name
            )));
        }
        Ok(v)
    }

    /// Residual together with its partials. Nonsmooth parts use the argmax
    /// branch (lowest index on ties) and the zero subgradient of `|p|` at 0.
    pub fn residual_partials(&self, x: &[f64], r: f64, p: &[f64], hess: &[f64]) -> ResidualPartials {
        self.residual_partials_with_forcing((self.forcing)(x), r, p, hess)
    }

    pub fn residual_partials_with_forcing(
        &self,
        f: f64,
        r: f64,
        p: &[f64],
        hess: &[f64],
    ) -> ResidualPartials {
        let d = p.len();
        let mut d_p = vec![0.0; d];
        let mut d_x = vec![0.0; packed_len(d)];
        let mut principal = None;
        match &self.principal {
            PrincipalPart::NegLaplacian => {
                for i in 0..d {
                    d_x[packed_index(d, i, i)] = -1.0;
                }
            }
            PrincipalPart::GradientNorm => {
                let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 {
                    for (g, v) in d_p.iter_mut().zip(p) {
                        *g = v / n;
                    }
                }
            }
            PrincipalPart::NegDeterminant => {
                // sum_k g_k v_k v_k^T with g_k the derivative in eigenvalue k
                let (lambda, vectors) = sym_eigen(d, hess);
                principal = Some(continued_neg_det(&lambda));
                for k in 0..d {
                    let g = if lambda[k] > 0.0 {
                        -(0..d)
                            .filter(|&j| j != k)
                            .map(|j| lambda[j].max(0.0))
                            .product::<f64>()
                    } else if lambda[k] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    for i in 0..d {
                        for j in i..d {
                            let w = g * vectors[i * d + k] * vectors[j * d + k];
                            d_x[packed_index(d, i, j)] += if i == j { w } else { 2.0 * w };
                        }
                    }
                }
            }
            PrincipalPart::PucciMax { coeffs } => {
                let mut best = 0;
                for (k, a) in coeffs.iter().enumerate().skip(1) {
                    if -a * hess[0] > -coeffs[best] * hess[0] {
                        best = k;
                    }
                }
                d_x[0] = -coeffs[best];
            }
        }
        ResidualPartials {
            value: principal.unwrap_or_else(|| self.principal_value(p, hess))
                + self.zeroth_order * r
                - f,
            d_r: self.zeroth_order,
            d_p,
            d_x,
        }
    }

    pub fn boundary_value(&self, x: &[f64]) -> f64 {
        (self.boundary)(x)
    }

    /// The exact solution as a [`crate::model::Model`].
    pub fn exact_model(&self) -> Option<FnModel> {
        self.exact.map(|e| FnModel {
            dim: self.dim(),
            value: e.value,
            jet: e.jet,
        })
    }
}

/// Eigenvalues and row-major eigenvector matrix (eigenvectors in columns)
/// of the symmetric matrix with packed upper triangle `hess`.
fn sym_eigen(d: usize, hess: &[f64]) -> (Vec<f64>, Vec<f64>) {
    match d {
        1 => return (vec![hess[0]], vec![1.0]),
        2 => {
            let (a, b, c) = (hess[0], hess[1], hess[2]);
            let mean = 0.5 * (a + c);
            let radius = (0.5 * (a - c)).hypot(b);
            let theta = 0.5 * (2.0 * b).atan2(a - c);
            let (sin, cos) = theta.sin_cos();
            // columns: (-sin, cos) for the smaller, (cos, sin) for the larger
            return (vec![mean - radius, mean + radius], vec![-sin, cos, cos, sin]);
        }
        _ => {}
    }
    let m = nalgebra::DMatrix::from_fn(d, d, |i, j| hess[packed_index(d, i.min(j), i.max(j))]);
    let eig = m.symmetric_eigen();
    let vectors = (0..d * d).map(|k| eig.eigenvectors[(k / d, k % d)]).collect();
    (eig.eigenvalues.iter().copied().collect(), vectors)
}

/// `-prod max(l, 0) + sum max(-l, 0)` over the eigenvalues.
fn continued_neg_det(lambda: &[f64]) -> f64 {
    -lambda.iter().map(|l| l.max(0.0)).product::<f64>()
        + lambda.iter().map(|l| (-l).max(0.0)).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityWitness {
    pub x: Vec<f64>,
    pub r: f64,
    pub p: Vec<f64>,
    /// packed upper triangle of `X`
    pub hess: Vec<f64>,
    pub delta: f64,
    /// packed upper triangle of the PSD decrement `P`
    pub decrement: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub operator: String,
    pub trials: usize,
    pub violations: usize,
    /// Largest `F(x,r,p,X) - F(x,r+delta,p,X-P)`; negative when no trial came
    /// close to a violation.
    pub worst_violation: f64,
    pub witness: Option<EllipticityWitness>,
}

impl EllipticityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Hunts for violations of `F(x,r,p,X) <= F(x,r+delta,p,X-P) + tol` with
/// random `delta >= 0` and `P = A^T A`.
pub fn check_ellipticity(spec: &OperatorSpec, trials: usize, seed: u64) -> EllipticityReport {
    check_ellipticity_with(
        spec.name,
        &spec.domain,
        spec.admissibility,
        |x, r, p, h| spec.residual(x, r, p, h),
        trials,
        seed,
    )
}

/// [`check_ellipticity`] for an arbitrary residual function.
pub fn check_ellipticity_with<F>(
    name: &str,
    domain: &Domain,
    admissibility: Admissibility,
    residual: F,
    trials: usize,
    seed: u64,
) -> EllipticityReport
where
    F: Fn(&[f64], f64, &[f64], &[f64]) -> f64,
{
    let d = domain.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EllipticityReport {
        operator: name.to_string(),
        trials,
        violations: 0,
        worst_violation: f64::NEG_INFINITY,
        witness: None,
    };
    for _ in 0..trials {
        let x = domain.sample_interior(&mut rng);
        let r = rng.random_range(-2.0..2.0);
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let decrement = random_gram(&mut rng, d);
        let hess = match admissibility {
            Admissibility::Any => SymMatrix::from_packed(
                d,
                (0..packed_len(d)).map(|_| rng.random_range(-2.0..2.0)).collect(),
            )
            .expect("packed length"),
            // X = Y + P keeps X - P = Y inside the cone
            Admissibility::PsdHessian => random_gram(&mut rng, d).add(&decrement).expect("dims"),
        };
        let delta = rng.random_range(0.0..1.0);
        let lower = hess.sub(&decrement).expect("dims");
        let gap = residual(&x, r, &p, hess.packed()) - residual(&x, r + delta, &p, lower.packed());
        if gap > report.worst_violation {
            report.worst_violation = gap;
        }
        if gap > ELLIPTICITY_TOL {
            report.violations += 1;
            if report.witness.is_none() {
                report.witness = Some(EllipticityWitness {
                    x,
                    r,
                    p,
                    hess: hess.packed().to_vec(),
                    delta,
                    decrement: decrement.packed().to_vec(),
                });
            }
        }
    }
    report
}

fn random_gram<R: Rng>(rng: &mut R, d: usize) -> SymMatrix {
    let a: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    SymMatrix::gram(d, &a).expect("square factor")
}

fn sin_pi(x: f64) -> Jet2 {
    Jet2::vars(&[x]).remove(0).scale(PI).sin()
}

fn p1_value(x: &[f64]) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin()
}

fn p1_jet(x: &[f64]) -> Jet2 {
    let [a, b] = Jet2::vars(x).try_into().expect("two coordinates");
    a.scale(PI).sin().mul(&b.scale(PI).sin()).expect("same dimension")
}

fn p1_forcing(x: &[f64]) -> f64 {
    2.0 * PI * PI * p1_value(x)
}

fn sine_value(x: &[f64]) -> f64 {
    (PI * x[0]).sin()
}

fn sine_jet(x: &[f64]) -> Jet2 {
    sin_pi(x[0])
}

fn p2_forcing(x: &[f64]) -> f64 {
    PI * PI * sine_value(x)
}

fn zero(_x: &[f64]) -> f64 {
    0.0
}

fn one(_x: &[f64]) -> f64 {
    1.0
}

fn tent_value(x: &[f64]) -> f64 {
    x[0].min(1.0 - x[0])
}

fn tent_jet(x: &[f64]) -> Jet2 {
    let slope = if x[0] < 0.5 { 1.0 } else { -1.0 };
    Jet2 {
        value: tent_value(x),
        grad: vec![slope],
        hess: SymMatrix::zeros(1),
    }
}

fn ma_value(x: &[f64]) -> f64 {
    (0.5 * (x[0] * x[0] + x[1] * x[1])).exp()
}

fn ma_jet(x: &[f64]) -> Jet2 {
    let [a, b] = Jet2::vars(x).try_into().expect("two coordinates");
    a.square()
        .add(&b.square())
        .expect("same dimension")
        .scale(0.5)
        .exp()
}

// F = f - det X is written as -det X - (-f) to fit the common shape
fn ma_forcing(x: &[f64]) -> f64 {
    let s = x[0] * x[0] + x[1] * x[1];
    -(1.0 + s) * s.exp()
}

pub fn pucci_coefficients() -> Vec<f64> {
    (0..PUCCI_GRID)
        .map(|k| 1.0 + k as f64 / (PUCCI_GRID - 1) as f64)
        .collect()
}

fn pucci_forcing(x: &[f64]) -> f64 {
    let s = PI * PI * sine_value(x);
    pucci_coefficients()
        .into_iter()
        .map(|a| a * s)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub const OPERATOR_NAMES: [&str; 5] = [
    "poisson2d",
    "poisson1d",
    "eikonal1d",
    "monge_ampere2d",
    "pucci1d",
];

/// The bundled benchmarks.
pub fn catalog() -> Vec<OperatorSpec> {
    vec![
        OperatorSpec {
            name: "poisson2d",
            domain: Domain::hypercube(2),
            principal: PrincipalPart::NegLaplacian,
            zeroth_order: 0.0,
            forcing: p1_forcing,
            boundary: zero,
            exact: Some(ExactSolution {
                value: p1_value,
                jet: p1_jet,
                smooth: true,
            }),
            admissibility: Admissibility::Any,
            note: "-tr X = 2 pi^2 sin(pi x) sin(pi y), u = sin(pi x) sin(pi y), g = 0",
        },
        OperatorSpec {
            name: "poisson1d",
            domain: Domain::hypercube(1),
            principal: PrincipalPart::NegLaplacian,
            zeroth_order: 0.0,
            forcing: p2_forcing,
            boundary: zero,
            exact: Some(ExactSolution {
                value: sine_value,
                jet: sine_jet,
                smooth: true,
            }),
            admissibility: Admissibility::Any,
            note: "-u'' = pi^2 sin(pi x), u = sin(pi x), g = 0",
        },
        OperatorSpec {
            name: "eikonal1d",
            domain: Domain::hypercube(1),
            principal: PrincipalPart::GradientNorm,
            zeroth_order: 0.0,
            forcing: one,
            boundary: zero,
            exact: Some(ExactSolution {
                value: tent_value,
                jet: tent_jet,
                smooth: false,
            }),
            admissibility: Admissibility::Any,
            note: "|u'| = 1, g = 0; viscosity solution min(x, 1-x), kink at 1/2",
        },
        OperatorSpec {
            name: "monge_ampere2d",
            domain: Domain::hypercube(2),
            principal: PrincipalPart::NegDeterminant,
            zeroth_order: 0.0,
            forcing: ma_forcing,
            boundary: ma_value,
            exact: Some(ExactSolution {
                value: ma_value,
                jet: ma_jet,
                smooth: true,
            }),
            admissibility: Admissibility::PsdHessian,
            note: "f - det X, elliptic only on convex candidates (PSD Hessians); u = exp((x^2+y^2)/2)",
        },
        OperatorSpec {
            name: "pucci1d",
            domain: Domain::hypercube(1),
            principal: PrincipalPart::PucciMax {
                coeffs: pucci_coefficients(),
            },
            zeroth_order: 0.0,
            forcing: pucci_forcing,
            boundary: zero,
            exact: Some(ExactSolution {
                value: sine_value,
                jet: sine_jet,
                smooth: true,
            }),
            admissibility: Admissibility::Any,
            note: "max over 32 coefficients a in [1,2] of -a u'', u = sin(pi x), g = 0",
        },
    ]
}

pub fn by_name(name: &str) -> Result<OperatorSpec> {
    catalog()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::UnknownOperator(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet_with_hess(d: usize, packed: Vec<f64>) -> Jet2 {
        Jet2 {
            value: 0.0,
            grad: vec![0.0; d],
            hess: SymMatrix::from_packed(d, packed).unwrap(),
        }
    }

    #[test]
    fn residual_examples() {
        let p1 = by_name("poisson2d").unwrap();
        let j = Jet2 {
            hess: SymMatrix::identity(2),
            ..Jet2::constant(2, 0.0)
        };
        // f vanishes on the boundary
        assert!((p1.eval_residual(&[0.0, 0.3], &j).unwrap() + 2.0).abs() < 1e-12);

        let mut ma = by_name("monge_ampere2d").unwrap();
        ma.forcing = zero;
        let x = jet_with_hess(2, vec![1.0, 0.0, 2.0]);
        assert_eq!(ma.eval_residual(&[0.5, 0.5], &x).unwrap(), -2.0);

        let e = by_name("eikonal1d").unwrap();
        let j = Jet2 {
            grad: vec![1.0],
            ..Jet2::constant(1, 0.0)
        };
        assert_eq!(e.eval_residual(&[0.3], &j).unwrap(), 0.0);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(by_name("heat"), Err(Error::UnknownOperator(_))));
        assert_eq!(catalog().len(), OPERATOR_NAMES.len());
    }

    #[test]
    fn nonfinite_residual_flagged() {
        let p2 = by_name("poisson1d").unwrap();
        let j = jet_with_hess(1, vec![f64::NAN]);
        assert!(matches!(
            p2.eval_residual(&[0.5], &j),
            Err(Error::DegenerateEvaluation(_))
        ));
    }

    #[test]
    fn monge_ampere_exact_residual_at_point() {
        let ma = by_name("monge_ampere2d").unwrap();
        let x = [0.3, 0.4];
        let r = ma.eval_residual(&x, &ma_jet(&x)).unwrap();
        assert!(r.abs() < 1e-12, "{r}");
    }

    #[test]
    fn tent_residual_vanishes_off_the_kink() {
        let e = by_name("eikonal1d").unwrap();
        for x in [0.1, 0.49, 0.51, 0.9] {
            assert_eq!(e.eval_residual(&[x], &tent_jet(&[x])).unwrap(), 0.0);
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in catalog() {
            let d = spec.dim();
            for _ in 0..20 {
                let x = spec.domain.sample_interior(&mut rng);
                let r: f64 = rng.random_range(-1.0..1.0);
                let p: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let h: Vec<f64> = (0..packed_len(d)).map(|_| rng.random_range(-1.0..1.0)).collect();
                let part = spec.residual_partials(&x, r, &p, &h);
                let step = 1e-6;
                let fr = (spec.residual(&x, r + step, &p, &h) - spec.residual(&x, r - step, &p, &h))
                    / (2.0 * step);
                assert!((fr - part.d_r).abs() < 1e-6);
                for k in 0..d {
                    let (mut pp, mut pm) = (p.clone(), p.clone());
                    pp[k] += step;
                    pm[k] -= step;
                    let fd = (spec.residual(&x, r, &pp, &h) - spec.residual(&x, r, &pm, &h)) / (2.0 * step);
                    assert!((fd - part.d_p[k]).abs() < 1e-6, "{} p{k}", spec.name);
                }
                for q in 0..h.len() {
                    let (mut hp, mut hm) = (h.clone(), h.clone());
                    hp[q] += step;
                    hm[q] -= step;
                    let fd = (spec.residual(&x, r, &p, &hp) - spec.residual(&x, r, &p, &hm)) / (2.0 * step);
                    assert!((fd - part.d_x[q]).abs() < 1e-6, "{} X{q}", spec.name);
                }
            }
        }
    }

    #[test]
    fn checker_catches_a_wrong_sign() {
        let dom = Domain::hypercube(2);
        let bad = check_ellipticity_with(
            "plus-laplacian",
            &dom,
            Admissibility::Any,
            |_, _, _, h| h[0] + h[2],
            200,
            3,
        );
        assert!(bad.violations > 0 && bad.witness.is_some());
        let decreasing_in_r = check_ellipticity_with(
            "minus-r",
            &dom,
            Admissibility::Any,
            |_, r, _, _| -r,
            200,
            3,
        );
        assert!(!decreasing_in_r.passed());
    }

/// Cofactor matrix (row-major) of the symmetric matrix with packed upper
    /// triangle `hess`.
    fn cofactors(d: usize, hess: &[f64]) -> Vec<f64> {
        let m = SymMatrix::from_packed(d, hess.to_vec()).expect("packed Hessian length");
        if d == 1 {
            return vec![1.0];
        }
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let minor: Vec<f64> = (0..d)
                    .filter(|&a| a != i)
                    .flat_map(|a| (0..d).filter(move |&b| b != j).map(move |b| (a, b)))
                    .map(|(a, b)| m.get(a, b))
                    .collect();
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                out[i * d + j] = sign * dense_det(d - 1, minor);
            }
        }
        out
    }
    
    /// Determinant by partial-pivot elimination.
    fn dense_det(n: usize, mut a: Vec<f64>) -> f64 {
        let mut det = 1.0;
        for c in 0..n {
            let piv = (c..n)
                .max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs()))
                .expect("nonempty");
            if a[piv * n + c] == 0.0 {
                return 0.0;
            }
            if piv != c {
                for k in 0..n {
                    a.swap(c * n + k, piv * n + k);
                }
                det = -det;
            }
            let pv = a[c * n + c];
            det *= pv;
            for i in c + 1..n {
                let f = a[i * n + c] / pv;
                for k in c..n {
                    a[i * n + k] -= f * a[c * n + k];
                }
            }
        }
        det
    }

    #[test]
    fn cofactors_of_three_by_three() {
        let h = vec![2.0, 1.0, 0.5, 3.0, -1.0, 4.0];
        let cof = cofactors(3, &h);
        let m = SymMatrix::from_packed(3, h).unwrap();
        // A adj(A) = det(A) I
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| m.get(i, k) * cof[j * 3 + k]).sum();
                let want = if i == j { m.determinant() } else { 0.0 };
                assert!((s - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn determinant_partials_are_negated_cofactors_on_the_cone() {
        let ma = by_name("monge_ampere2d").unwrap();
        let h = [2.0, 0.5, 1.5];
        let part = ma.residual_partials(&[0.3, 0.3], 0.0, &[0.0, 0.0], &h);
        let cof = cofactors(2, &h);
        assert!((part.d_x[0] + cof[0]).abs() < 1e-12);
        assert!((part.d_x[1] + 2.0 * cof[1]).abs() < 1e-12);
        assert!((part.d_x[2] + cof[3]).abs() < 1e-12);
    }

    #[test]
    fn concave_candidates_leave_a_positive_monge_ampere_residual() {
        let ma = by_name("monge_ampere2d").unwrap();
        let x = [0.4, 0.2];
        let f = (ma.forcing)(&x);
        // det of a negative definite Hessian equals det of its negation
        let r = ma.residual(&x, 0.0, &[0.0, 0.0], &[-2.0, 0.0, -3.0]);
        assert!((r - (-f + 5.0)).abs() < 1e-12);
        assert!(r > 0.0);
        let everywhere = check_ellipticity_with(
            "monge_ampere2d",
            &ma.domain,
            Admissibility::Any,
            |x, r, p, h| ma.residual(x, r, p, h),
            1000,
            11,
        );
        assert!(everywhere.passed(), "{everywhere:?}");
    }

    #[test]
    fn closed_form_eigen_reconstructs_two_by_two_matrices() {
        for &(a, b, c) in &[
            (2.0, 0.5, 1.5),
            (1.0, 0.0, 1.0),
            (-3.0, 2.0, 0.5),
            (0.0, -1.0, 0.0),
            (1e-9, 4.0, -7.0),
        ] {
            let (l, v) = sym_eigen(2, &[a, b, c]);
            let entry = |i: usize, j: usize| (0..2).map(|k| l[k] * v[i * 2 + k] * v[j * 2 + k]).sum::<f64>();
            assert!((entry(0, 0) - a).abs() < 1e-12);
            assert!((entry(0, 1) - b).abs() < 1e-12);
            assert!((entry(1, 1) - c).abs() < 1e-12);
            assert!(l[0] <= l[1]);
        }
    }
}
