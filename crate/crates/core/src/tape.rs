//! Reverse-mode differentiation over a Wengert tape.
//!
//! Used for exact gradients of scalar objectives with respect to network
//! parameters when the objective is an arbitrary composition of affine
//! maps, `tanh`, squares, products and finite maxima. The training loop uses
//! the specialised batched backward pass in [`crate::network::batch`]; this
//! tape is the general-purpose route and the cross-check for it.

use crate::error::{Error, Result};
use crate::network::MlpParams;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
struct Node {
    value: f64,
    // (parent, local partial derivative)
    parents: Vec<(usize, f64)>,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: f64, parents: Vec<(usize, f64)>) -> Var {
        self.nodes.push(Node { value, parents });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: f64) -> Var {
        self.push(value, Vec::new())
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(value, Vec::new())
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.0].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, vec![(a.0, 1.0), (b.0, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, vec![(a.0, 1.0), (b.0, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        self.push(va * vb, vec![(a.0, vb), (b.0, va)])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = c * self.value(a);
        self.push(v, vec![(a.0, c)])
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, vec![(a.0, 1.0)])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a);
        self.push(v * v, vec![(a.0, 2.0 * v)])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).tanh();
        self.push(t, vec![(a.0, 1.0 - t * t)])
    }

    /// Maximum over a nonempty set; the derivative follows the argmax branch,
    /// ties resolved to the lowest index.
    pub fn max(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "max over an empty set");
        let mut best = 0;
        for (i, v) in vars.iter().enumerate().skip(1) {
            if self.value(*v) > self.value(vars[best]) {
                best = i;
            }
        }
        let v = self.value(vars[best]);
        self.push(v, vec![(vars[best].0, 1.0)])
    }

    pub fn sum(&mut self, vars: &[Var]) -> Var {
        let v = vars.iter().map(|v| self.value(*v)).sum();
        self.push(v, vars.iter().map(|v| (v.0, 1.0)).collect())
    }

    /// Dot product of variables with fixed coefficients.
    pub fn linear(&mut self, coeffs: &[f64], vars: &[Var]) -> Var {
        let v = coeffs
            .iter()
            .zip(vars)
            .map(|(c, v)| c * self.value(*v))
            .sum();
        self.push(v, vars.iter().zip(coeffs).map(|(v, c)| (v.0, *c)).collect())
    }

    /// Adjoints of every node with respect to `output`.
    pub fn adjoints(&self, output: Var) -> Vec<f64> {
        let mut adj = vec![0.0; output.0 + 1];
        adj[output.0] = 1.0;
        for i in (0..=output.0).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            for &(p, d) in &self.nodes[i].parents {
                adj[p] += a * d;
            }
        }
        adj
    }

    pub fn gradient(&self, output: Var, wrt: &[Var]) -> Vec<f64> {
        let adj = self.adjoints(output);
        wrt.iter()
            .map(|v| adj.get(v.0).copied().unwrap_or(0.0))
            .collect()
    }
}

/// Gradient of a scalar objective with respect to the flattened network
/// parameters, aligned with [`MlpParams::to_flat`] (layer-major: `W1`
/// row-major, `b1`, `W2`, `b2`, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient(pub Vec<f64>);

impl ParamGradient {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Network parameters recorded on a tape.
pub struct TapeNet {
    widths: Vec<usize>,
    // per layer: (W row-major, b)
    layers: Vec<(Vec<Var>, Vec<Var>)>,
}

impl TapeNet {
    pub fn record(tape: &mut Tape, params: &MlpParams) -> Self {
        let layers = params
            .layers()
            .iter()
            .map(|l| {
                let w = l.w.iter().map(|&v| tape.input(v)).collect();
                let b = l.b.iter().map(|&v| tape.input(v)).collect();
                (w, b)
            })
            .collect();
        Self {
            widths: params.arch().widths().to_vec(),
            layers,
        }
    }

    /// Parameter variables in flattening order.
    pub fn flat(&self) -> Vec<Var> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    /// Network output at a fixed input point, recorded on the tape.
    pub fn forward(&self, tape: &mut Tape, x: &[f64]) -> Result<Var> {
        if x.len() != self.widths[0] {
            return Err(Error::DimensionMismatch {
                expected: self.widths[0],
                got: x.len(),
            });
        }
        let mut act: Vec<Var> = x.iter().map(|&v| tape.constant(v)).collect();
        let n_layers = self.layers.len();
        for (l, (w, b)) in self.layers.iter().enumerate() {
            let n_in = self.widths[l];
            let n_out = self.widths[l + 1];
            let mut next = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let mut acc = b[j];
                for k in 0..n_in {
                    let t = tape.mul(w[j * n_in + k], act[k]);
                    acc = tape.add(acc, t);
                }
                next.push(acc);
            }
            act = if l + 1 < n_layers {
                next.into_iter().map(|z| tape.tanh(z)).collect()
            } else {
                next
            };
        }
        Ok(act[0])
    }
}

/// Exact gradient of `objective` at `params`.
///
/// The objective records its computation on the supplied tape, using the
/// parameter handles in [`TapeNet`], and returns the output variable.
pub fn param_gradient<F>(params: &MlpParams, objective: F) -> Result<ParamGradient>
where
    F: FnOnce(&mut Tape, &TapeNet) -> Result<Var>,
{
    let mut tape = Tape::new();
    let net = TapeNet::record(&mut tape, params);
    let out = objective(&mut tape, &net)?;
    let v = tape.value(out);
    if !v.is_finite() {
        return Err(Error::DegenerateEvaluation(format!(
            "objective evaluated to {v}"
        )));
    }
    Ok(ParamGradient(tape.gradient(out, &net.flat())))
}

/// Exact gradient of a scalar function of `x` built on a tape.
pub fn gradient<F>(x: &[f64], f: F) -> Result<Vec<f64>>
where
    F: FnOnce(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = x.iter().map(|&v| tape.input(v)).collect();
    let out = f(&mut tape, &vars);
    let v = tape.value(out);
    if !v.is_finite() {
        return Err(Error::DegenerateEvaluation(format!(
            "objective evaluated to {v}"
        )));
    }
    Ok(tape.gradient(out, &vars))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Architecture;

    #[test]
    fn half_squared_norm_gradient_is_identity() {
        let params = MlpParams::init(&Architecture::new(vec![2, 3, 1]).unwrap(), 7);
        let g = param_gradient(&params, |tape, net| {
            let sq: Vec<Var> = net.flat().iter().map(|&v| tape.square(v)).collect();
            let s = tape.sum(&sq);
            Ok(tape.scale(s, 0.5))
        })
        .unwrap();
        assert_eq!(g.0, params.to_flat());
    }

    #[test]
    fn constant_direction_has_zero_gradient() {
        let params = MlpParams::init(&Architecture::new(vec![1, 2, 1]).unwrap(), 1);
        let g = param_gradient(&params, |tape, net| {
            let flat = net.flat();
            // ignores every parameter except the first
            Ok(tape.square(flat[0]))
        })
        .unwrap();
        assert!(g.0[1..].iter().all(|&v| v == 0.0));
        assert_eq!(g.0[0], 2.0 * params.to_flat()[0]);
    }

    #[test]
    fn max_follows_lowest_index_argmax() {
        let g = gradient(&[1.0, 3.0, 3.0, 2.0], |t, v| t.max(v)).unwrap();
        assert_eq!(g, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn nonfinite_objective_is_degenerate() {
        let r = gradient(&[1.0], |t, v| t.scale(v[0], f64::INFINITY));
        assert!(matches!(r, Err(Error::DegenerateEvaluation(_))));
    }

    #[test]
    fn tape_forward_matches_network() {
        let params = MlpParams::init(&Architecture::new(vec![2, 5, 4, 1]).unwrap(), 3);
        let x = [0.3, -0.7];
        let mut tape = Tape::new();
        let net = TapeNet::record(&mut tape, &params);
        let out = net.forward(&mut tape, &x).unwrap();
        let direct = params.forward(&x).unwrap();
        assert!((tape.value(out) - direct).abs() < 1e-14);
    }
}
