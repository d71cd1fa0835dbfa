//! Numerical core for Almgren-type frequency quantities of sublinear
//! elliptic equations `-div(A∇u) = V u + f(x, u)`.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. File formats,
//! configuration and the command-line front end live in the `freq-lab` crate.
//!
//! Module map:
//!
//! * [`model`]: problem data, assumption checks and coordinate normalization.
//! * [`ode`]: the explicit counterexample, conserved energy, radial shooting,
//!   zero audits and separated porous-medium solutions.
//! * [`field`] and [`solver`]: solution fields on polar grids or as radial
//!   profiles, the 2-D variable-coefficient solver and residual evaluation.
//! * [`frequency`]: `H`, `D`, `D1`, `d`, `N` and the identity checks.
//! * [`audit`]: replay of the vanishing-on-a-ball contradiction chain.
#![no_std]
#![warn(missing_debug_implementations)]
#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

extern crate alloc;

pub mod audit;
pub mod error;
pub mod expr;
pub mod field;
pub mod frequency;
pub mod linalg;
pub mod math;
pub mod model;
pub mod ode;
pub mod quad;
pub mod solver;

pub use error::{Error, Result};

/// Largest spatial dimension supported by point-wise coefficient evaluation.
///
/// Radial profiles work in any dimension; everything that evaluates `A(x)`,
/// `V(x)` or `F(x, s)` at a point is limited to `N <= MAX_DIM`.
pub const MAX_DIM: usize = 3;

/// A point or vector in `R^N`, `N <= MAX_DIM`, padded with zeros.
pub type Vector = [f64; MAX_DIM];
