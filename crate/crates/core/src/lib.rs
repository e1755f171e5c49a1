//! Coupling-epoch bounds for the backward renewal time of a renewal process.
//!
//! The crate computes certified upper bounds on `E tau^l` and `E exp(beta tau)`
//! for the coupling epoch `tau` of two backward-renewal-time processes started
//! from different states, turns them into total-variation convergence bounds
//! against the stationary law, and simulates the coupling construction so the
//! bounds can be checked empirically.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases below fix it to `f64`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod coupling;
pub mod dist;
pub mod error;
pub mod quadrature;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Law = dist::Law<f64>;
pub type Law32 = dist::Law<f32>;
pub type Exponential = dist::Exponential<f64>;
pub type ExampleLaw = dist::ExampleLaw<f64>;
pub type HazardTable = dist::HazardTable<f64>;
pub type CouplingParams = bounds::CouplingParams<f64>;
pub type QuadOptions = quadrature::QuadOptions<f64>;

