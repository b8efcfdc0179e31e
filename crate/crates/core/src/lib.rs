//! Energy-based finite elements.
//!
//! Problems are posed as scalar functionals `Ψ(u)`. Residuals come from
//! reverse-mode differentiation, tangents from forward-over-reverse
//! Hessian-vector products, and sparse tangent matrices from a compressed
//! Jacobian built with a distance-2 graph coloring of the mesh sparsity.

pub mod autodiff;
pub mod coloring;
pub mod element;
pub mod error;
pub mod mesh;
pub mod operator;
pub mod physics;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
