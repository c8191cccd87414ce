//! Periodic homogenization of fully nonlinear Dirichlet problems with
//! oscillating boundary data.

pub mod barriers;
pub mod corrector;
pub mod effective;
pub mod error;
pub mod expr;
pub mod fdsolver;
pub mod geometry;
pub mod linalg;
pub mod operators;

pub use error::{Error, Result};
