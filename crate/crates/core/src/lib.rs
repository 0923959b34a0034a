//! Numerical laboratory for Gibbs measures of exterior equivariant wave maps.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acceptance;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod gibbs;
pub mod grid;
pub mod invariance;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod measures;
pub mod operator;
pub mod rng;
pub mod soliton;
pub mod stats;

pub use error::{EquiwaveError, Result};
pub use grid::{Field, ModelParams, PhaseState, RadialGrid};
