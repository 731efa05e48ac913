//! SL(2,R) cocycles over quasi-periodic and Cantor base dynamics.
//!
//! The library builds explicit perturbations that make a cocycle conjugate to
//! rotations, to constants, or uniformly hyperbolic, and projects such
//! perturbations back into Schrödinger potentials to open spectral gaps.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod error;
pub mod basedyn;
pub mod hypgeom;
mod cache;
pub mod cocycle;
pub mod cohomology;
pub mod rigidity;
pub mod schrodinger;
pub mod projection;
pub mod output;

pub use error::{Error, Result};
