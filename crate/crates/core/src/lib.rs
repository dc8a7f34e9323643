//! Posterior averaging information criterion (PAIC) and competing Bayesian
//! predictive criteria (BPIC, WAIC₂, DIC, exact leave-one-out, expected
//! deviance penalized loss), with the simulation studies that compare their
//! bias corrections.
//!
//! The usual pipeline: find the posterior mode ([`optimize::find_mode`]),
//! build J_n and I_n at the mode ([`info::info_pair`]), draw from the
//! posterior ([`mcmc`]), and evaluate criteria ([`criteria`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod criteria;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod info;
pub mod mcmc;
pub mod model;
pub mod optimize;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use exec::Execution;
