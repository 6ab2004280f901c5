//! Sampled Hölder seminorm estimates `[v]_alpha^2 = sup |v(x)-v(y)|^2 / |x-y|^(2 alpha)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Points;

pub const DEFAULT_PAIR_BUDGET: usize = 4096;
pub const DEFAULT_TEMPERATURE: f64 = 0.01;
const COINCIDENT: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderMode {
    /// Maximum over the pair set.
    Hard,
    /// `tau * log(sum exp(q / tau))` over the squared ratios `q`.
    Smooth { temperature: f64 },
}

impl HolderMode {
    pub fn smooth() -> Self {
        HolderMode::Smooth {
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    /// Estimate of the squared seminorm.
    pub value: f64,
    pub pairs: usize,
    /// Pair attaining the largest ratio, lowest position on ties.
    pub argmax: (usize, usize),
}

/// Index pairs with their weights `|x_i - x_j|^(-2 alpha)`. Coincident
/// pairs are dropped.
#[derive(Clone, Debug)]
pub struct PairGeometry {
    pairs: Vec<(usize, usize)>,
    weights: Vec<f64>,
    points: usize,
}

/// All `i < j` pairs when there are at most `budget` of them (`None` means
/// no limit). Otherwise `budget` seeded uniform pairs together with every
/// point's two nearest neighbours, sorted and deduplicated.
pub fn pair_set(points: &Points, budget: Option<usize>, seed: u64) -> Vec<(usize, usize)> {
    let n = points.nrows();
    let total = n * n.saturating_sub(1) / 2;
    if budget.is_none_or(|b| total <= b) {
        return (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
    }
    let budget = budget.expect("checked above");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(budget + 2 * n);
    while pairs.len() < budget {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j {
            pairs.push((i.min(j), i.max(j)));
        }
    }
    for i in 0..n {
        let xi = points.row(i);
        let mut near = [(f64::INFINITY, usize::MAX); 2];
        for j in (0..n).filter(|&j| j != i) {
            let d2: f64 = xi
                .iter()
                .zip(points.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 < near[0].0 {
                near = [(d2, j), near[0]];
            } else if d2 < near[1].0 {
                near[1] = (d2, j);
            }
        }
        for &(_, j) in near.iter().filter(|(d, _)| d.is_finite()) {
            pairs.push((i.min(j), i.max(j)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

impl PairGeometry {
    pub fn new(points: &Points, alpha: f64, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        let n = points.nrows();
        if n < 2 {
            return Err(Error::InvalidInput(
                "Hölder estimate needs at least two points".into(),
            ));
        }
        let (mut kept, mut weights) = (Vec::with_capacity(pairs.len()), Vec::with_capacity(pairs.len()));
        for (i, j) in pairs {
            let dist = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist >= COINCIDENT {
                kept.push((i, j));
                weights.push(dist.powf(-2.0 * alpha));
            }
        }
        if kept.is_empty() {
            return Err(Error::DegenerateEvaluation(
                "every sampled pair of points coincides".into(),
            ));
        }
        Ok(Self {
            pairs: kept,
            weights,
            points: n,
        })
    }

    pub fn sampled(points: &Points, alpha: f64, budget: Option<usize>, seed: u64) -> Result<Self> {
        Self::new(points, alpha, pair_set(points, budget, seed))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn ratios(&self, values: &[f64]) -> Vec<f64> {
        self.pairs
            .iter()
            .zip(&self.weights)
            .map(|(&(i, j), w)| {
                let dv = values[i] - values[j];
                dv * dv * w
            })
            .collect()
    }

    pub fn estimate(&self, values: &[f64], mode: HolderMode) -> Result<HolderEstimate> {
        Ok(self.estimate_with_gradient(values, mode)?.0)
    }

    /// Estimate and its gradient with respect to `values`. The hard maximum
    /// uses the argmax pair.
    pub fn estimate_with_gradient(
        &self,
        values: &[f64],
        mode: HolderMode,
    ) -> Result<(HolderEstimate, Vec<f64>)> {
        if values.len() != self.points {
            return Err(Error::DimensionMismatch {
                expected: self.points,
                got: values.len(),
            });
        }
        let q = self.ratios(values);
        let mut best = 0;
        for (k, v) in q.iter().enumerate().skip(1) {
            if *v > q[best] {
                best = k;
            }
        }
        let qmax = q[best];
        if !qmax.is_finite() {
            return Err(Error::DegenerateEvaluation(format!(
                "Hölder ratio is {qmax} at pair {:?}",
                self.pairs[best]
            )));
        }
        let mut grad = vec![0.0; self.points];
        let mut push = |k: usize, weight: f64| {
            let (i, j) = self.pairs[k];
            let g = weight * 2.0 * (values[i] - values[j]) * self.weights[k];
            grad[i] += g;
            grad[j] -= g;
        };
        let value = match mode {
            HolderMode::Hard => {
                push(best, 1.0);
                qmax
            }
            HolderMode::Smooth { temperature: tau } => {
                let e: Vec<f64> = q.iter().map(|v| ((v - qmax) / tau).exp()).collect();
                let z: f64 = e.iter().sum();
                for (k, ek) in e.iter().enumerate() {
                    push(k, ek / z);
                }
                qmax + tau * z.ln()
            }
        };
        Ok((
            HolderEstimate {
                value,
                pairs: self.pairs.len(),
                argmax: self.pairs[best],
            },
            grad,
        ))
    }
}

/// Squared Hölder seminorm estimate of `values` sampled at `points`.
pub fn holder_seminorm_sq(
    values: &[f64],
    points: &Points,
    alpha: f64,
    mode: HolderMode,
    pair_budget: Option<usize>,
    seed: u64,
) -> Result<HolderEstimate> {
    PairGeometry::sampled(points, alpha, pair_budget, seed)?.estimate(values, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn grid(n: usize) -> Points {
        Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / (n - 1) as f64)
    }

    #[test]
    fn linear_function_has_its_slope() {
        let pts = array![[0.0], [0.5], [1.0]];
        let e = holder_seminorm_sq(&[0.0, 1.0, 2.0], &pts, 1.0, HolderMode::Hard, None, 0).unwrap();
        assert!((e.value - 4.0).abs() < 1e-12);
        assert_eq!(e.pairs, 3);
        assert_eq!(e.argmax, (0, 1));
    }

    #[test]
    fn constant_is_zero() {
        let pts = grid(10);
        let e = holder_seminorm_sq(&[3.0; 10], &pts, 0.5, HolderMode::Hard, None, 0).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn coincident_points() {
        let pts = array![[0.2], [0.2], [0.7]];
        let e = holder_seminorm_sq(&[0.0, 5.0, 1.0], &pts, 1.0, HolderMode::Hard, None, 0).unwrap();
        assert_eq!(e.pairs, 2);
        let all_same = array![[0.2], [0.2]];
        assert!(holder_seminorm_sq(&[0.0, 1.0], &all_same, 1.0, HolderMode::Hard, None, 0).is_err());
    }

    #[test]
    fn smooth_mode_dominates_and_tightens() {
        let pts = grid(50);
        let v: Vec<f64> = pts.column(0).iter().map(|x| (3.0 * x).sin()).collect();
        let geo = PairGeometry::sampled(&pts, 1.0, None, 0).unwrap();
        let hard = geo.estimate(&v, HolderMode::Hard).unwrap().value;
        let mut prev = f64::INFINITY;
        for tau in [0.1, 0.01, 0.001] {
            let s = geo.estimate(&v, HolderMode::Smooth { temperature: tau }).unwrap().value;
            assert!(s >= hard && s <= prev);
            prev = s;
        }
        assert!(prev - hard < 0.05 * hard);
    }

    #[test]
    fn budgeted_pairs_include_neighbours() {
        let pts = grid(200);
        let pairs = pair_set(&pts, Some(100), 4);
        for i in 0..199 {
            assert!(pairs.binary_search(&(i, i + 1)).is_ok());
        }
        assert!(pairs.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(pairs, pair_set(&pts, Some(100), 4));
    }

    #[test]
    fn smooth_gradient_matches_finite_differences() {
        let pts = array![[0.0, 0.1], [0.4, 0.3], [0.9, 0.2], [0.5, 0.8]];
        let v = vec![0.3, -0.2, 0.5, 0.1];
        let geo = PairGeometry::sampled(&pts, 0.5, None, 0).unwrap();
        let mode = HolderMode::Smooth { temperature: 0.05 };
        let (_, g) = geo.estimate_with_gradient(&v, mode).unwrap();
        for k in 0..4 {
            let h = 1e-6;
            let (mut vp, mut vm) = (v.clone(), v.clone());
            vp[k] += h;
            vm[k] -= h;
            let fd = (geo.estimate(&vp, mode).unwrap().value - geo.estimate(&vm, mode).unwrap().value)
                / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6, "{k}: {fd} vs {}", g[k]);
        }
    }
}
