//! Time-widening Fisher information analysis of bifurcations.
//!
//! The pipeline is: build a [`model::ModelSystem`], integrate it together with
//! its forward parameter sensitivities ([`integrate`]), take the spectrum of the
//! Fisher information `JᵀJ` over a geometric sweep of observation horizons
//! ([`twig`]), and classify each eigendirection by how its eigenvalue scales
//! with the horizon.

// Index loops mirror the Butcher tableaux and coefficient tables; `!(a > b)`
// comparisons deliberately reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibria;
pub mod error;
pub mod integrate;
pub mod model;
pub mod oracles;
pub mod twig;

pub use error::{Result, TwigError};
