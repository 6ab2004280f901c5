//! Batched jet propagation and its reverse pass.
//!
//! Every neuron carries, for every point, a block of channels: the value,
//! the `d` gradient entries and the packed Hessian. Activations are stored
//! as `n_l x (C * P)` matrices with channel-major column blocks (column
//! `c * P + p` is channel `c` of point `p`), so each affine layer is a single
//! matrix product and the bias touches only the value block.
//!
//! [`JetBatch::backward`] pulls an adjoint on the output channels back to
//! the parameters. Composed with the residual partials this gives exact
//! parameter gradients of any loss built from `(h, Dh, D^2 h)` at the
//! batch points (reverse-over-forward).

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::{Layer, MlpParams};
use crate::error::{Error, Result};
use crate::jet::{packed_len, Jet2, SymMatrix};
use crate::model::Points;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    /// Values only.
    Value,
    /// Values, gradients and Hessians.
    Second,
}

impl Order {
    pub fn channels(self, dim: usize) -> usize {
        match self {
            Order::Value => 1,
            Order::Second => 1 + dim + packed_len(dim),
        }
    }
}

/// Forward state of a batch, kept for the reverse pass.
///
/// The buffers are sized by the architecture and the point count, so a batch
/// can be recomputed for new parameters with [`JetBatch::refresh`] without
/// reallocating.
#[derive(Clone, Debug)]
pub struct JetBatch {
    dim: usize,
    points: usize,
    order: Order,
    // inputs[i] feeds affine layer i
    inputs: Vec<Array2<f64>>,
    // pre-activations of the hidden layers
    pre: Vec<Array2<f64>>,
    // 1 x (C * P)
    output: Array2<f64>,
}

/// Reusable adjoint buffers for [`JetBatch::backward_with`].
#[derive(Clone, Debug, Default)]
pub struct BackwardScratch {
    zbar: Vec<Array2<f64>>,
    abar: Vec<Array2<f64>>,
}

fn reuse(buf: &mut Vec<Array2<f64>>, i: usize, shape: (usize, usize)) -> &mut Array2<f64> {
    if buf.len() <= i {
        buf.resize_with(i + 1, || Array2::zeros((0, 0)));
    }
    if buf[i].dim() != shape {
        buf[i] = Array2::zeros(shape);
    }
    &mut buf[i]
}

impl JetBatch {
    pub fn forward(params: &MlpParams, points: &Points, order: Order) -> Result<Self> {
        let dim = params.arch().input_dim();
        if points.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: points.ncols(),
            });
        }
        let p = points.nrows();
        let cp = order.channels(dim) * p;

        let mut seed = Array2::zeros((dim, cp));
        for k in 0..dim {
            seed.slice_mut(s![k, ..p]).assign(&points.column(k));
            if order == Order::Second {
                seed.slice_mut(s![k, (1 + k) * p..(2 + k) * p]).fill(1.0);
            }
        }
        let layers = params.layers();
        let last = layers.len() - 1;
        let mut inputs = vec![seed];
        let mut pre = Vec::with_capacity(last);
        for layer in &layers[..last] {
            pre.push(Array2::zeros((layer.b.len(), cp)));
            inputs.push(Array2::zeros((layer.b.len(), cp)));
        }
        let mut batch = Self {
            dim,
            points: p,
            order,
            inputs,
            pre,
            output: Array2::zeros((1, cp)),
        };
        batch.refresh(params)?;
        Ok(batch)
    }

    /// Recomputes the batch in place for new parameters of the same
    /// architecture.
    pub fn refresh(&mut self, params: &MlpParams) -> Result<()> {
        let layers = params.layers();
        let last = layers.len() - 1;
        if self.pre.len() != last
            || layers
                .iter()
                .zip(&self.inputs)
                .any(|(l, a)| l.w.dim() != (l.b.len(), a.nrows()))
            || layers[last].b.len() != 1
        {
            return Err(Error::InvalidArchitecture(
                "parameters do not match the batch architecture".into(),
            ));
        }
        let (d, p, order) = (self.dim, self.points, self.order);
        for (i, layer) in layers.iter().enumerate() {
            let (done, rest) = self.inputs.split_at_mut(i + 1);
            let z = if i < last { &mut self.pre[i] } else { &mut self.output };
            general_mat_mul(1.0, &layer.w, &done[i], 0.0, z);
            for (mut row, &b) in z.outer_iter_mut().zip(layer.b.iter()) {
                row.slice_mut(s![..p]).mapv_inplace(|v| v + b);
            }
            if i < last {
                tanh_forward(z, &mut rest[0], d, p, order);
            }
        }
        Ok(())
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn channels(&self) -> usize {
        self.order.channels(self.dim)
    }

    /// Output channels, laid out as `channel * points + point`.
    pub fn output(&self) -> ArrayView1<'_, f64> {
        self.output.row(0)
    }

    pub fn value(&self, p: usize) -> f64 {
        self.output[(0, p)]
    }

    pub fn grad(&self, p: usize, k: usize) -> f64 {
        debug_assert_eq!(self.order, Order::Second);
        self.output[(0, (1 + k) * self.points + p)]
    }

    /// Packed Hessian entry `q` at point `p`.
    pub fn hess(&self, p: usize, q: usize) -> f64 {
        debug_assert_eq!(self.order, Order::Second);
        self.output[(0, (1 + self.dim + q) * self.points + p)]
    }

    pub fn jet(&self, p: usize) -> Jet2 {
        let d = self.dim;
        match self.order {
            Order::Value => Jet2::constant(d, self.value(p)),
            Order::Second => Jet2 {
                value: self.value(p),
                grad: (0..d).map(|k| self.grad(p, k)).collect(),
                hess: SymMatrix::from_packed(
                    d,
                    (0..packed_len(d)).map(|q| self.hess(p, q)).collect(),
                )
                .expect("packed length"),
            },
        }
    }

    pub fn to_jets(&self) -> Vec<Jet2> {
        (0..self.points).map(|p| self.jet(p)).collect()
    }

    /// Parameter gradient of `sum_c adjoint[c] * output[c]`.
    pub fn backward(&self, params: &MlpParams, adjoint: &Array1<f64>) -> Result<Vec<Layer>> {
        self.backward_with(params, adjoint, &mut BackwardScratch::default())
    }

    /// [`JetBatch::backward`] with caller-owned adjoint buffers.
    pub fn backward_with(
        &self,
        params: &MlpParams,
        adjoint: &Array1<f64>,
        scratch: &mut BackwardScratch,
    ) -> Result<Vec<Layer>> {
        let cp = self.output.ncols();
        if adjoint.len() != cp {
            return Err(Error::DimensionMismatch {
                expected: cp,
                got: adjoint.len(),
            });
        }
        let p = self.points;
        let layers = params.layers();
        let last = layers.len() - 1;
        let mut grads: Vec<Option<Layer>> = vec![None; layers.len()];
        reuse(&mut scratch.zbar, last, (1, cp))
            .row_mut(0)
            .assign(adjoint);
        for i in (0..layers.len()).rev() {
            let zbar = &scratch.zbar[i];
            let mut w = Array2::zeros(layers[i].w.raw_dim());
            general_mat_mul(1.0, zbar, &self.inputs[i].t(), 0.0, &mut w);
            let b = zbar.slice(s![.., ..p]).sum_axis(Axis(1));
            grads[i] = Some(Layer { w, b });
            if i > 0 {
                let shape = (layers[i].w.ncols(), cp);
                reuse(&mut scratch.abar, i, shape);
                reuse(&mut scratch.zbar, i - 1, shape);
                let (lo, hi) = scratch.zbar.split_at_mut(i);
                let abar = &mut scratch.abar[i];
                general_mat_mul(1.0, &layers[i].w.t(), &hi[0], 0.0, abar);
                tanh_backward(
                    &self.pre[i - 1],
                    &self.inputs[i],
                    abar,
                    &mut lo[i - 1],
                    self.dim,
                    p,
                    self.order,
                );
            }
        }
        Ok(grads.into_iter().map(|g| g.expect("filled")).collect())
    }
}

fn tanh_forward(z: &Array2<f64>, a: &mut Array2<f64>, d: usize, p: usize, order: Order) {
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p];
    for (zr, mut ar) in z.outer_iter().zip(a.outer_iter_mut()) {
        let z = zr.to_slice().expect("contiguous row");
        let a = ar.as_slice_mut().expect("contiguous row");
        let (av, ad) = a.split_at_mut(p);
        for ((t, s1), (s2, &zv)) in av.iter_mut().zip(&mut s1).zip(s2.iter_mut().zip(&z[..p])) {
            *t = tanh(zv);
            *s1 = 1.0 - *t * *t;
            *s2 = -2.0 * *t * *s1;
        }
        if order == Order::Value {
            continue;
        }
        let zg = |k: usize| &z[(1 + k) * p..(2 + k) * p];
        let (ag, ah) = ad.split_at_mut(d * p);
        for (k, agk) in ag.chunks_exact_mut(p).enumerate() {
            for ((o, &g), &s) in agk.iter_mut().zip(zg(k)).zip(&s1) {
                *o = s * g;
            }
        }
        let mut chunks = ah.chunks_exact_mut(p);
        let mut q = 0;
        for k in 0..d {
            for l in k..d {
                let out = chunks.next().expect("packed channel");
                let zh = &z[(1 + d + q) * p..(2 + d + q) * p];
                for i in 0..p {
                    out[i] = s1[i] * zh[i] + s2[i] * zg(k)[i] * zg(l)[i];
                }
                q += 1;
            }
        }
    }
}

/// `tanh` through one `exp`, several times cheaper than the libm routine and
/// accurate to a few ulps in absolute terms.
#[inline]
fn tanh(z: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * z).exp() + 1.0)
}

/// Adjoint of the pre-activation jets given the adjoint of the activation
/// jets. `act` holds the forward activations, whose value block is `tanh(z)`.
fn tanh_backward(
    z: &Array2<f64>,
    act: &Array2<f64>,
    abar: &Array2<f64>,
    zbar: &mut Array2<f64>,
    d: usize,
    p: usize,
    order: Order,
) {
    let (mut s1, mut s2, mut s3) = (vec![0.0; p], vec![0.0; p], vec![0.0; p]);
    for ((zr, ar), (abr, mut zbr)) in z
        .outer_iter()
        .zip(act.outer_iter())
        .zip(abar.outer_iter().zip(zbar.outer_iter_mut()))
    {
        let z = zr.to_slice().expect("contiguous row");
        let t = &ar.to_slice().expect("contiguous row")[..p];
        let ab = abr.to_slice().expect("contiguous row");
        let zb = zbr.as_slice_mut().expect("contiguous row");
        for i in 0..p {
            s1[i] = 1.0 - t[i] * t[i];
            s2[i] = -2.0 * t[i] * s1[i];
            s3[i] = 2.0 * s1[i] * (3.0 * t[i] * t[i] - 1.0);
        }
        let (zbv, zbd) = zb.split_at_mut(p);
        for i in 0..p {
            zbv[i] = ab[i] * s1[i];
        }
        if order == Order::Value {
            continue;
        }
        let blk = |c: usize| c * p..(c + 1) * p;
        let (zbg, zbh) = zbd.split_at_mut(d * p);
        for k in 0..d {
            let (g, abg) = (&z[blk(1 + k)], &ab[blk(1 + k)]);
            let out = &mut zbg[k * p..(k + 1) * p];
            for i in 0..p {
                zbv[i] += abg[i] * g[i] * s2[i];
                out[i] = s1[i] * abg[i];
            }
        }
        let mut q = 0;
        for k in 0..d {
            for l in k..d {
                let c = 1 + d + q;
                let (h, hb) = (&z[blk(c)], &ab[blk(c)]);
                let (gk, gl) = (&z[blk(1 + k)], &z[blk(1 + l)]);
                let out = &mut zbh[q * p..(q + 1) * p];
                for i in 0..p {
                    zbv[i] += hb[i] * (s2[i] * h[i] + s3[i] * gk[i] * gl[i]);
                    out[i] = s1[i] * hb[i];
                }
                if k == l {
                    let gb = &mut zbg[k * p..(k + 1) * p];
                    for i in 0..p {
                        gb[i] += 2.0 * s2[i] * hb[i] * gk[i];
                    }
                } else {
                    for i in 0..p {
                        let w = s2[i] * hb[i];
                        zbg[k * p + i] += w * gl[i];
                        zbg[l * p + i] += w * gk[i];
                    }
                }
                q += 1;
            }
        }
    }
}

/// Flattens per-layer gradients in the [`MlpParams::to_flat`] order.
pub fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.w.iter());
        out.extend(l.b.iter());
    }
    out
}
