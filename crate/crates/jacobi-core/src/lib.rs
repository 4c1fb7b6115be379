//! Numerical laboratory for frozen and stochastic Jacobi particle systems of
//! type BC on the compact alcove and the noncompact chamber.
//!
//! The crate provides:
//! - the model layer (domains, parameters, drift fields, scaling regimes),
//! - classical Jacobi polynomials and their ordered zeros,
//! - deterministic dynamics, including boundary starts through the
//!   elementary-symmetric-polynomial linearization,
//! - Euler-Maruyama simulation of the rescaled diffusions with martingale
//!   diagnostics,
//! - moment machinery: empirical moments, the closed finite-N moment ODE
//!   system, and the limiting moment recursions,
//! - a free-probability measure algebra on truncated moment sequences,
//! - an experiment harness scoring empirical moments against the predicted
//!   limit laws.

// numeric kernels: negated comparisons reject NaNs, and moment arrays are
// naturally index-aligned
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

pub mod detflow;
pub mod error;
pub mod freeprob;
pub mod harness;
pub mod jacobi_poly;
pub mod model;
pub mod moments;
pub mod sde;

pub use error::{Error, Result};
