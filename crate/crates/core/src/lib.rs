//! Finite-basis laboratory for the Bethe–Salpeter effective Hamiltonian and
//! its Brillouin–Wigner expansion, with a numerical check of how the
//! `±ΔE` sign convention in the combined first/second-order energy
//! correction changes the result.

// NaN must fail the range checks, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bw;
pub mod config;
pub mod controversy;
pub mod error;
pub mod identities;
pub mod model;
pub mod operators;
pub mod propagators;
pub mod report;
pub mod scaling;

pub use error::{Error, Result};
