//! Admissible-parallelogram decompositions for polynomial surfaces in R^3 and
//! numerical checks of the affine restriction and decoupling inequalities built on them.

pub mod decompose;
pub mod dyadic;
pub mod enclosure;
pub mod error;
pub mod flat1d;
pub mod fourier;
pub mod geometry;
pub mod hessian_split;
pub mod measures;
pub mod poly;
pub mod quadrature;
pub mod sublevel;
pub mod surfaces;
pub mod verify;

pub use error::{Error, Result};
