//! Hölder-regularized physics-informed networks for fully nonlinear
//! degenerate elliptic boundary value problems `F[u] = 0` in `U`, `u = g` on
//! the boundary, together with the machinery to check their behaviour
//! against exact and finite-difference references.

pub mod csvio;
pub mod error;
pub mod fidelity;
pub mod holder;
pub mod jet;
pub mod loss;
pub mod model;
pub mod network;
pub mod operators;
pub mod oracle;
pub mod sampling;
pub mod stats;
pub mod tape;
pub mod training;

pub use error::{Error, Result};
pub use jet::{Jet2, SymMatrix};
pub use model::{Model, Points};
pub use network::{Architecture, MlpParams};
