//! Bayesian pairwise meta-analysis of binary outcomes with a correction for
//! odds-ratio non-collapsibility.
//!
//! The crate is organised bottom-up:
//!
//! - [`meta_core`]: domain types, link arithmetic, the exact mixture odds
//!   ratio and the inverse-variance naive baseline.
//! - [`mcmc`]: component-wise adaptive random-walk Metropolis with split
//!   R-hat and bulk ESS diagnostics.
//! - [`models`]: log-posteriors for the standard fixed-effect, standard
//!   random-effects and bookend mixture models, and [`models::fit`].
//! - [`simulate`]: seeded data generation and bias sweeps.
//! - [`workflow`]: baseline-risk spread, bookend identification and the
//!   standard-vs-bookend sensitivity comparison.
//! - [`cli`]: ingestion, reports, forest plots and the command runner.

pub mod cli;
pub mod error;
pub mod mcmc;
pub mod meta_core;
pub mod models;
pub mod simulate;
pub mod workflow;

pub use error::{Error, Result};
