//! Game-theoretic power control for the uplink of a DS-CDMA data network.
//!
//! Every user maximizes its own utility, measured in reliably delivered bits
//! per joule, by choosing a transmit power (and optionally its linear
//! receiver). The crate provides:
//!
//! - [`effmath`]: efficiency functions and the utility-maximizing target SIR.
//! - [`linsys`]: spreading sequences, fading gains, the matched filter,
//!   decorrelator and MMSE receivers, and exact output SIRs.
//! - [`game`]: best-response power iteration to the SIR-balanced Nash
//!   equilibrium and a unilateral-deviation check.
//! - [`asymptotic`]: large-system closed forms, Pareto-optimal targets and
//!   utility-maximizing admission control.
//! - [`multiantenna`]: receive diversity through stacked effective signatures.
//! - [`experiments`]: seeded Monte Carlo scenarios producing tabular results.
//!
//! Trials run on rayon when the `parallel` feature is enabled (the default);
//! results are bit-identical either way.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotic;
pub mod effmath;
mod error;
pub mod experiments;
pub mod game;
pub mod linsys;
pub mod multiantenna;
pub mod parallel;
pub mod stats;

pub use error::{Error, Result};
