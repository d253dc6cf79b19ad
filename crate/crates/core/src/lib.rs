//! Fractional Laplacian on hyperbolic space and on rotationally symmetric
//! manifolds: special functions, heat kernels, the fractional kernel, the
//! extension problem and the admissibility checks.

pub mod error;
pub mod frackernel;
pub mod heat2poisson;
pub mod operators;
pub mod quadrature;
pub mod hyperbolic;
pub mod manifolds;
pub mod report;
pub mod specfun;
pub mod verify;

pub use error::{Error, Result};
pub use hyperbolic::{HyperbolicDim, HyperboloidPoint};
pub use specfun::{BesselOrder, FracOrder};
