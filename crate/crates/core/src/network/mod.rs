//! Feed-forward `tanh` networks with scalar output.
//!
//! The first layer is affine without activation, `h1 = W1 x + b1`; every
//! later layer applies `tanh` to the previous layer's output before its own
//! affine map, `hl = Wl tanh(h(l-1)) + bl`. The output layer has width one.

pub mod batch;
pub mod io;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jet::{packed_len, Jet2, SymMatrix};
use crate::model::{Model, Points};

pub use batch::{JetBatch, Order};

/// Layer widths `(n0, .., nL)` with `n0 = d` and `nL = 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture(Vec<usize>);

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::InvalidArchitecture(format!(
                "need at least one hidden layer, got widths {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidArchitecture(format!(
                "widths must be positive, got {widths:?}"
            )));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::InvalidArchitecture(format!(
                "output width must be 1, got {widths:?}"
            )));
        }
        Ok(Self(widths))
    }

    pub fn widths(&self) -> &[usize] {
        &self.0
    }

    pub fn input_dim(&self) -> usize {
        self.0[0]
    }

    /// Number of affine layers `L`.
    pub fn depth(&self) -> usize {
        self.0.len() - 1
    }

    /// `sum_l (n_l n_(l-1) + n_l)`.
    pub fn param_count(&self) -> usize {
        self.0.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `n_l x n_(l-1)`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    arch: Architecture,
    layers: Vec<Layer>,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = arch
            .widths()
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = (6.0 / (n_in + n_out) as f64).sqrt();
                let weights = Array2::from_shape_fn((n_out, n_in), |_| {
                    rng.random_range(-bound..bound)
                });
                Layer {
                    w: weights,
                    b: Array1::zeros(n_out),
                }
            })
            .collect();
        Self {
            arch: arch.clone(),
            layers,
        }
    }

    pub fn zeros(arch: &Architecture) -> Self {
        let layers = arch
            .widths()
            .windows(2)
            .map(|w| Layer {
                w: Array2::zeros((w[1], w[0])),
                b: Array1::zeros(w[1]),
            })
            .collect();
        Self {
            arch: arch.clone(),
            layers,
        }
    }

    /// Validates shapes and finiteness.
    pub fn from_layers(arch: Architecture, layers: Vec<Layer>) -> Result<Self> {
        if layers.len() != arch.depth() {
            return Err(Error::InvalidArchitecture(format!(
                "expected {} layers, got {}",
                arch.depth(),
                layers.len()
            )));
        }
        for (l, (layer, w)) in layers.iter().zip(arch.widths().windows(2)).enumerate() {
            if layer.w.dim() != (w[1], w[0]) || layer.b.len() != w[1] {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {}: expected W {}x{} and b {}, got W {:?} and b {}",
                    l + 1,
                    w[1],
                    w[0],
                    w[1],
                    layer.w.dim(),
                    layer.b.len()
                )));
            }
            if layer.w.iter().chain(layer.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "layer {} has non-finite entries",
                    l + 1
                )));
            }
        }
        Ok(Self { arch, layers })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    /// Layer-major flattening: `W1` row-major, `b1`, `W2`, `b2`, ...
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            for (dst, src) in l.w.iter_mut().zip(&mut it) {
                *dst = *src;
            }
            for (dst, src) in l.b.iter_mut().zip(&mut it) {
                *dst = *src;
            }
        }
        Ok(())
    }

    pub fn from_flat(arch: &Architecture, flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(arch);
        p.set_flat(flat)?;
        Ok(p)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Network output `h^L(x)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut act: Vec<f64> = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = affine_values(layer, &act);
            if l < last {
                next.iter_mut().for_each(|z| *z = z.tanh());
            }
            act = next;
        }
        Ok(act[0])
    }

    /// Output jet `(h, Dh, D^2 h)` at `x`. The value channel follows the
    /// same arithmetic as [`MlpParams::forward`], so the two agree bitwise.
    pub fn forward_jet(&self, x: &[f64]) -> Result<Jet2> {
        self.check_input(x)?;
        let d = x.len();
        let mut act: Vec<Jet2> = Jet2::vars(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let values: Vec<f64> = act.iter().map(|j| j.value).collect();
            let zv = affine_values(layer, &values);
            let mut next = Vec::with_capacity(zv.len());
            for (j, &value) in zv.iter().enumerate() {
                let mut grad = vec![0.0; d];
                let mut hess = vec![0.0; packed_len(d)];
                for (k, a) in act.iter().enumerate() {
                    let w = layer.w[[j, k]];
                    for (g, ag) in grad.iter_mut().zip(&a.grad) {
                        *g += w * ag;
                    }
                    for (h, ah) in hess.iter_mut().zip(a.hess.packed()) {
                        *h += w * ah;
                    }
                }
                let z = Jet2 {
                    value,
                    grad,
                    hess: SymMatrix::from_packed(d, hess)?,
                };
                next.push(if l < last { z.tanh() } else { z });
            }
            act = next;
        }
        Ok(act.swap_remove(0))
    }
}

/// `W a + b` with a fixed left-to-right accumulation order.
fn affine_values(layer: &Layer, a: &[f64]) -> Vec<f64> {
    layer
        .w
        .outer_iter()
        .zip(layer.b.iter())
        .map(|(row, &b)| {
            let mut acc = b;
            for (w, x) in row.iter().zip(a) {
                acc += w * x;
            }
            acc
        })
        .collect()
}

// bounds the size of the batched activation matrices
const EVAL_CHUNK: usize = 1024;

impl Model for MlpParams {
    fn dim(&self) -> usize {
        self.arch.input_dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.forward(x)
    }

    fn jet(&self, x: &[f64]) -> Result<Jet2> {
        self.forward_jet(x)
    }

    fn values(&self, points: &Points) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(points.nrows());
        for chunk in points.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
            let b = JetBatch::forward(self, &chunk.to_owned(), Order::Value)?;
            out.extend((0..b.points()).map(|p| b.value(p)));
        }
        Ok(out)
    }

    fn jets(&self, points: &Points) -> Result<Vec<Jet2>> {
        let mut out = Vec::with_capacity(points.nrows());
        for chunk in points.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
            out.extend(JetBatch::forward(self, &chunk.to_owned(), Order::Second)?.to_jets());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn architecture_validation() {
        assert!(Architecture::new(vec![2, 1]).is_err());
        assert!(Architecture::new(vec![2, 0, 1]).is_err());
        assert!(Architecture::new(vec![2, 4, 2]).is_err());
        let a = Architecture::new(vec![2, 16, 16, 1]).unwrap();
        assert_eq!(a.param_count(), 2 * 16 + 16 + 16 * 16 + 16 + 16 + 1);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let arch = Architecture::new(vec![2, 16, 16, 1]).unwrap();
        let a = MlpParams::init(&arch, 42);
        let b = MlpParams::init(&arch, 42);
        assert_eq!(a.to_flat(), b.to_flat());
        assert_ne!(a.to_flat(), MlpParams::init(&arch, 43).to_flat());
        for (layer, w) in a.layers().iter().zip(arch.widths().windows(2)) {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            assert!(layer.w.iter().all(|v| v.abs() < bound));
            assert!(layer.b.iter().all(|&v| v == 0.0));
        }
        assert_eq!(a.to_flat().len(), arch.param_count());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let arch = Architecture::new(vec![2, 8, 8, 1]).unwrap();
        let p = MlpParams::zeros(&arch);
        for x in [[0.0, 0.0], [0.3, -4.0], [10.0, 2.0]] {
            assert_eq!(p.forward(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_last_weights_give_bias() {
        let arch = Architecture::new(vec![1, 6, 1]).unwrap();
        let mut p = MlpParams::init(&arch, 5);
        p.layers_mut()[1].w.fill(0.0);
        p.layers_mut()[1].b[0] = 0.75;
        for x in [-1.0, 0.0, 0.4, 3.0] {
            assert_eq!(p.forward(&[x]).unwrap(), 0.75);
        }
    }

    #[test]
    fn flat_roundtrip() {
        let arch = Architecture::new(vec![3, 4, 2, 1]).unwrap();
        let p = MlpParams::init(&arch, 9);
        let q = MlpParams::from_flat(&arch, &p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(MlpParams::from_flat(&arch, &[0.0; 3]).is_err());
    }

    #[test]
    fn jet_value_is_forward_bitwise() {
        let arch = Architecture::new(vec![2, 7, 5, 1]).unwrap();
        let p = MlpParams::init(&arch, 11);
        for x in [[0.1, 0.9], [-0.4, 0.25], [1.5, -2.0]] {
            assert_eq!(
                p.forward_jet(&x).unwrap().value.to_bits(),
                p.forward(&x).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = MlpParams::init(&Architecture::new(vec![2, 3, 1]).unwrap(), 0);
        assert!(matches!(
            p.forward(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(p.forward_jet(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn small_weights_are_nearly_linear() {
        let arch = Architecture::new(vec![2, 8, 8, 1]).unwrap();
        let mut p = MlpParams::init(&arch, 2);
        let flat: Vec<f64> = p.to_flat().iter().map(|v| v * 1e-3).collect();
        p.set_flat(&flat).unwrap();
        let j = p.forward_jet(&[0.3, 0.6]).unwrap();
        assert!(j.hess.packed().iter().all(|h| h.abs() < 1e-8));
    }
}
