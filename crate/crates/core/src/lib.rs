//! Design and evaluation of hierarchical-modulation constellations.
//!
//! [`constellation`] holds labelled point sets, [`capacity`] evaluates the
//! per-layer BICM rates by Gauss-Hermite quadrature, [`optimizer`] designs
//! constellations with a primal-dual interior-point method, [`rateregion`]
//! sweeps rate frontiers and [`coverage`] maps user fractions to SNR.

// Checks such as `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod constellation;
pub mod coverage;
pub mod error;
pub mod optimizer;
pub mod rateregion;
mod quadrature;

pub use error::{Error, Result};
pub use quadrature::gauss_hermite;
