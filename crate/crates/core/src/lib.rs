//! Bayesian clustering priors for heterogeneous multisource external data.
//!
//! The pipeline: per-source posteriors ([`densities`]) are clustered under the
//! overlapping-coefficient distance ([`overlap`], [`clustering`]); the number of
//! clusters is chosen from the overlapping evidence index profile ([`evidence`]);
//! each cluster yields a meta-analytic predictive prior and the clusters are
//! combined into a (robust) clustering MAP mixture ([`synthesis`]). Mixture priors
//! are updated with new-trial data in [`posterior`], and [`simkit`] runs the
//! estimation and operating-characteristic studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod densities;
pub mod error;
pub mod evidence;
pub mod fixtures;
pub mod overlap;
pub mod posterior;
pub mod rng;
pub mod simkit;
pub mod synthesis;

pub use error::{Error, Result};
