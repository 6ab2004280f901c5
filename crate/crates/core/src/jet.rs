//! Second-order forward jets.
//!
//! A [`Jet2`] carries the value, gradient and Hessian of a scalar function
//! at a point. Arithmetic on jets applies the second-order product and chain
//! rules, so a composite built from jet primitives yields exact input
//! derivatives up to floating point.
//!
//! The Hessian is stored as a packed upper triangle ([`SymMatrix`]), so it is
//! symmetric by construction.

use crate::error::{Error, Result};

/// Real symmetric `d x d` matrix stored as its packed upper triangle.
///
/// Packing is row-major over the upper triangle:
/// `(0,0), (0,1), .., (0,d-1), (1,1), .., (d-1,d-1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    upper: Vec<f64>,
}

/// Number of stored entries of a packed `d x d` symmetric matrix.
pub const fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Position of entry `(i, j)` in the packed upper triangle.
#[inline]
pub fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * (i + 1) / 2 + j
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            upper: vec![0.0; packed_len(dim)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds from the packed upper triangle.
    pub fn from_packed(dim: usize, upper: Vec<f64>) -> Result<Self> {
        if upper.len() != packed_len(dim) {
            return Err(Error::DimensionMismatch {
                expected: packed_len(dim),
                got: upper.len(),
            });
        }
        Ok(Self { dim, upper })
    }

    /// Builds from a dense row-major matrix, reading only the upper triangle.
    pub fn from_dense_upper(dim: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: dense.len(),
            });
        }
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, dense[i * dim + j]);
            }
        }
        Ok(m)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.upper
    }

    pub fn packed_mut(&mut self) -> &mut [f64] {
        &mut self.upper
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[packed_index(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = packed_index(self.dim, i, j);
        self.upper[k] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.get(i, j);
            }
        }
        out
    }

    /// Determinant; closed form up to 3x3, partial-pivot elimination above.
    pub fn determinant(&self) -> f64 {
        let g = |i, j| self.get(i, j);
        match self.dim {
            0 => 1.0,
            1 => g(0, 0),
            2 => g(0, 0) * g(1, 1) - g(0, 1) * g(0, 1),
            3 => {
                g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(1, 2))
                    - g(0, 1) * (g(0, 1) * g(2, 2) - g(1, 2) * g(0, 2))
                    + g(0, 2) * (g(0, 1) * g(1, 2) - g(1, 1) * g(0, 2))
            }
            d => {
                let mut a = self.to_dense();
                let mut det = 1.0;
                for c in 0..d {
                    let p = (c..d)
                        .max_by(|&r, &s| a[r * d + c].abs().total_cmp(&a[s * d + c].abs()))
                        .unwrap_or(c);
                    if a[p * d + c] == 0.0 {
                        return 0.0;
                    }
                    if p != c {
                        for k in 0..d {
                            a.swap(p * d + k, c * d + k);
                        }
                        det = -det;
                    }
                    let piv = a[c * d + c];
                    det *= piv;
                    for r in c + 1..d {
                        let f = a[r * d + c] / piv;
                        for k in c..d {
                            a[r * d + k] -= f * a[c * d + k];
                        }
                    }
                }
                det
            }
        }
    }

    /// Cholesky-based positive semidefiniteness test with absolute slack `tol`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let d = self.dim;
        let mut shifted = self.to_dense();
        for i in 0..d {
            shifted[i * d + i] += tol;
        }
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut s = shifted[j * d + j];
            for k in 0..j {
                s -= l[j * d + k] * l[j * d + k];
            }
            if s < 0.0 {
                return false;
            }
            let ljj = s.sqrt();
            l[j * d + j] = ljj;
            for i in j + 1..d {
                let mut s = shifted[i * d + j];
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = if ljj > 0.0 { s / ljj } else { 0.0 };
            }
        }
        true
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_dim(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_dim(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        Self {
            dim: self.dim,
            upper: self.upper.iter().map(|a| c * a).collect(),
        }
    }

    /// `A^T A` for a dense row-major `dim x dim` matrix `a`; always PSD.
    pub fn gram(dim: usize, a: &[f64]) -> Result<SymMatrix> {
        if a.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: a.len(),
            });
        }
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let s = (0..dim).map(|k| a[k * dim + i] * a[k * dim + j]).sum();
                m.set(i, j, s);
            }
        }
        Ok(m)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Value, gradient and Hessian of a scalar function at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: SymMatrix,
}

impl Jet2 {
    /// The coordinate function `x -> x_i` seeded at `x`.
    pub fn var(x: &[f64], i: usize) -> Result<Self> {
        let d = x.len();
        if i >= d {
            return Err(Error::IndexOutOfRange { index: i, dim: d });
        }
        let mut grad = vec![0.0; d];
        grad[i] = 1.0;
        Ok(Self {
            value: x[i],
            grad,
            hess: SymMatrix::zeros(d),
        })
    }

    /// All coordinate jets of `x`.
    pub fn vars(x: &[f64]) -> Vec<Self> {
        (0..x.len())
            .map(|i| Self::var(x, i).expect("index in range"))
            .collect()
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self {
            value,
            grad: vec![0.0; dim],
            hess: SymMatrix::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(&self, other: &Jet2) -> Result<Jet2> {
        check_dim(self.dim(), other.dim())?;
        Ok(Jet2 {
            value: self.value + other.value,
            grad: self
                .grad
                .iter()
                .zip(&other.grad)
                .map(|(a, b)| a + b)
                .collect(),
            hess: self.hess.add(&other.hess)?,
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(&self, other: &Jet2) -> Result<Jet2> {
        self.add(&other.neg())
    }

    /// Product rule: `H = Ha*b + Hb*a + ga gb^T + gb ga^T`.
    #[allow(clippy::should_implement_trait)]
    pub fn mul(&self, other: &Jet2) -> Result<Jet2> {
        let d = self.dim();
        check_dim(d, other.dim())?;
        let (a, b) = (self, other);
        let mut hess = SymMatrix::zeros(d);
        for i in 0..d {
            for j in i..d {
                let v = a.hess.get(i, j) * b.value
                    + b.hess.get(i, j) * a.value
                    + a.grad[i] * b.grad[j]
                    + b.grad[i] * a.grad[j];
                hess.set(i, j, v);
            }
        }
        Ok(Jet2 {
            value: a.value * b.value,
            grad: a
                .grad
                .iter()
                .zip(&b.grad)
                .map(|(ga, gb)| ga * b.value + gb * a.value)
                .collect(),
            hess,
        })
    }

    pub fn scale(&self, c: f64) -> Jet2 {
        Jet2 {
            value: c * self.value,
            grad: self.grad.iter().map(|g| c * g).collect(),
            hess: self.hess.scale(c),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(&self) -> Jet2 {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Jet2 {
        Jet2 {
            value: self.value + c,
            ..self.clone()
        }
    }

    pub fn square(&self) -> Jet2 {
        self.mul(self).expect("same dimension")
    }

    /// Composition with a scalar function given its value and first two
    /// derivatives at `self.value`.
    pub fn compose(&self, f: f64, df: f64, d2f: f64) -> Jet2 {
        let d = self.dim();
        let mut hess = SymMatrix::zeros(d);
        for i in 0..d {
            for j in i..d {
                hess.set(
                    i,
                    j,
                    df * self.hess.get(i, j) + d2f * self.grad[i] * self.grad[j],
                );
            }
        }
        Jet2 {
            value: f,
            grad: self.grad.iter().map(|g| df * g).collect(),
            hess,
        }
    }

    /// `tanh` with `t' = 1 - t^2`, `t'' = -2 t (1 - t^2)`.
    pub fn tanh(&self) -> Jet2 {
        let t = self.value.tanh();
        let s1 = 1.0 - t * t;
        self.compose(t, s1, -2.0 * t * s1)
    }

    pub fn sin(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.compose(s, c, -s)
    }

    pub fn cos(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.compose(c, -s, -c)
    }

    pub fn exp(&self) -> Jet2 {
        let e = self.value.exp();
        self.compose(e, e, e)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.packed().iter().all(|h| h.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn packed_layout() {
        assert_eq!(packed_index(2, 0, 0), 0);
        assert_eq!(packed_index(2, 0, 1), 1);
        assert_eq!(packed_index(2, 1, 0), 1);
        assert_eq!(packed_index(2, 1, 1), 2);
        let d = 4;
        let mut seen = vec![];
        for i in 0..d {
            for j in i..d {
                seen.push(packed_index(d, i, j));
            }
        }
        assert_eq!(seen, (0..packed_len(d)).collect::<Vec<_>>());
    }

    #[test]
    fn coordinate_seed() {
        let j = Jet2::var(&[3.0, 1.0], 0).unwrap();
        assert_eq!(j.value, 3.0);
        assert_eq!(j.grad, vec![1.0, 0.0]);
        assert_eq!(j.hess, SymMatrix::zeros(2));

        let j = Jet2::var(&[0.5], 0).unwrap();
        assert_eq!((j.value, j.grad.clone()), (0.5, vec![1.0]));
        assert_eq!(j.hess.packed(), &[0.0]);

        assert!(matches!(
            Jet2::var(&[1.0, 2.0], 2),
            Err(Error::IndexOutOfRange { index: 2, dim: 2 })
        ));
    }

    #[test]
    fn square_rules() {
        let x = Jet2::var(&[3.0], 0).unwrap();
        let sq = x.mul(&x).unwrap();
        assert_eq!(sq.value, 9.0);
        assert_eq!(sq.grad, vec![6.0]);
        assert_eq!(sq.hess.packed(), &[2.0]);
    }

    #[test]
    fn product_and_identity() {
        let a = Jet2 {
            value: 2.0,
            grad: vec![1.0],
            hess: SymMatrix::zeros(1),
        };
        let b = Jet2::constant(1, 3.0);
        let p = a.mul(&b).unwrap();
        assert_eq!((p.value, p.grad[0], p.hess.get(0, 0)), (6.0, 3.0, 0.0));
        assert_eq!(a.add(&Jet2::constant(1, 0.0)).unwrap(), a);
    }

    #[test]
    fn bilinear_xy() {
        let x = [1.0, 2.0];
        let v = Jet2::vars(&x);
        let p = v[0].mul(&v[1]).unwrap();
        assert_eq!(p.value, 2.0);
        assert_eq!(p.grad, vec![2.0, 1.0]);
        assert_eq!(p.hess.to_dense(), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Jet2::constant(1, 1.0);
        let b = Jet2::constant(2, 1.0);
        assert!(matches!(a.add(&b), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(a.mul(&b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn tanh_at_zero_and_one() {
        let z = Jet2::var(&[0.0], 0).unwrap().tanh();
        assert_eq!((z.value, z.grad[0], z.hess.get(0, 0)), (0.0, 1.0, 0.0));

        // Scalar oracle: tanh(1), 1 - tanh(1)^2, -2 tanh(1) (1 - tanh(1)^2).
        let o = Jet2::var(&[1.0], 0).unwrap().tanh();
        assert!(close(o.value, 0.761_594_155_955_764_9, 1e-15));
        assert!(close(o.grad[0], 0.419_974_341_614_026_1, 1e-15));
        assert!(close(o.hess.get(0, 0), -0.639_700_008_449_225_2, 1e-14));
    }

    #[test]
    fn determinant_matches_elimination() {
        let m = SymMatrix::from_dense_upper(
            4,
            &[
                4.0, 1.0, 0.5, 0.2, 0.0, 3.0, 0.3, 0.1, 0.0, 0.0, 2.0, 0.4, 0.0, 0.0, 0.0, 1.5,
            ],
        )
        .unwrap();
        // Strictly diagonally dominant with positive diagonal: positive definite.
        assert!(m.determinant() > 0.0 && m.is_psd(0.0));
        let m2 = SymMatrix::from_diagonal(&[1.0, 2.0]);
        assert_eq!(m2.determinant(), 2.0);
        let m3 = SymMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        assert_eq!(m3.determinant(), 6.0);
        let m5 = SymMatrix::from_diagonal(&[1.0, 2.0, 3.0, 4.0, 0.5]);
        assert!(close(m5.determinant(), 12.0, 1e-14));
    }

    #[test]
    fn gram_is_psd() {
        let g = SymMatrix::gram(2, &[1.0, 2.0, -3.0, 0.5]).unwrap();
        assert!(g.is_psd(0.0));
        let neg = SymMatrix::from_diagonal(&[1.0, -1e-3]);
        assert!(!neg.is_psd(0.0));
        assert!(neg.is_psd(1e-2));
    }
}
