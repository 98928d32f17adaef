//! Large-parameter asymptotics of the principal Robin eigenvalue
//! Λ(Ω;γ) = −C_Ω γ² + o(γ²): corner constants, exact model solutions,
//! Rayleigh-quotient checks, and a planar finite-element oracle.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corner_constants;
pub mod error;
pub mod fem2d;
pub mod geometry;
pub mod model_solvers;
pub mod optimize;
pub mod quadrature;
pub mod rayleigh;
pub mod special_functions;

pub use error::{Error, Result};
