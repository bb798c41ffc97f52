//! Generalized Ekeland–Hofer–Zehnder capacities `c^Psi` of convex bodies in
//! R^{2n} for a symplectic matrix `Psi`.
//!
//! Closed forms cover balls, ellipsoids, products and cylinders; general
//! convex bodies go through a Galerkin discretization of the Clarke dual
//! action principle in support-function form.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod billiards;
pub mod bodies;
pub mod closedform;
pub mod dualsolver;
pub mod error;
pub mod io;
pub mod oracle2d;
pub mod spectrum;
pub mod symplin;
pub mod verify;

pub use error::{Error, Result};
