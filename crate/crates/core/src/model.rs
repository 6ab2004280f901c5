//! Candidate functions `h` that losses and error metrics can evaluate.

use ndarray::Array2;

use crate::error::Result;
use crate::jet::Jet2;

/// Point set with one point per row.
pub type Points = Array2<f64>;

/// A scalar function on `R^d` that can report values and second-order jets.
pub trait Model: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn jet(&self, x: &[f64]) -> Result<Jet2>;

    fn values(&self, points: &Points) -> Result<Vec<f64>> {
        points
            .outer_iter()
            .map(|p| self.value(p.as_slice().expect("row-major points")))
            .collect()
    }

    fn jets(&self, points: &Points) -> Result<Vec<Jet2>> {
        points
            .outer_iter()
            .map(|p| self.jet(p.as_slice().expect("row-major points")))
            .collect()
    }
}

/// A model defined by closed-form value and jet functions.
#[derive(Clone, Copy)]
pub struct FnModel {
    pub dim: usize,
    pub value: fn(&[f64]) -> f64,
    pub jet: fn(&[f64]) -> Jet2,
}

impl Model for FnModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok((self.value)(x))
    }

    fn jet(&self, x: &[f64]) -> Result<Jet2> {
        Ok((self.jet)(x))
    }
}

/// `inner + offset`, used to perturb a model by a constant.
pub struct Shifted<'a, M: Model + ?Sized> {
    pub inner: &'a M,
    pub offset: f64,
}

impl<M: Model + ?Sized> Model for Shifted<'_, M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.inner.value(x)? + self.offset)
    }

    fn jet(&self, x: &[f64]) -> Result<Jet2> {
        Ok(self.inner.jet(x)?.add_scalar(self.offset))
    }
}

/// `scale * inner`.
pub struct Scaled<'a, M: Model + ?Sized> {
    pub inner: &'a M,
    pub scale: f64,
}

impl<M: Model + ?Sized> Model for Scaled<'_, M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.scale * self.inner.value(x)?)
    }

    fn jet(&self, x: &[f64]) -> Result<Jet2> {
        Ok(self.inner.jet(x)?.scale(self.scale))
    }
}

/// The zero function in `dim` dimensions.
pub struct Zero(pub usize);

impl Model for Zero {
    fn dim(&self) -> usize {
        self.0
    }

    fn value(&self, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn jet(&self, _x: &[f64]) -> Result<Jet2> {
        Ok(Jet2::constant(self.0, 0.0))
    }
}
