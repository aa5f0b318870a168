//! Spectral analysis of second-order operators `L = -d^2/dx^2 + u(x)` whose
//! potential has isolated real poles around which every eigenfunction stays
//! meromorphic.
//!
//! The crate is organised bottom-up:
//!
//! - [`series`]: truncated Laurent series in a local variable.
//! - [`potential`]: closed-form potential families, pole data and profiles.
//! - [`frobenius`]: local solutions, the logarithmic obstruction and
//!   principal-part subspaces.
//! - [`contour`]: pole-avoiding paths and adaptive propagation along them.
//! - [`transfer`]: transfer and monodromy matrices, discriminant sweeps and
//!   gap reports.
//! - [`innerprod`]: the regularized indefinite inner product, Gram
//!   signatures and the adjointness defect.
//! - [`suite`]: the end-to-end property suite run by `smero verify`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod series;
pub mod potential;
pub mod frobenius;
mod stepper;
pub mod contour;
pub mod transfer;
pub mod innerprod;
mod poly;
pub mod suite;

pub use error::{Error, Result};
pub use num_complex::Complex64;
