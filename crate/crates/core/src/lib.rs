//! Radial numerical lab for the Hardy-Sobolev heat flow
//! u_t = Delta u + |x|^{-gamma} |u|^{p-2} u on radial data in R^d.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bessel;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod ops;
pub mod scenario;
pub mod solver;
pub mod spectral;
pub mod suite;
pub mod theory;

pub use error::{LabError, Result};
