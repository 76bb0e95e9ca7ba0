//! Stratified link-tracing sampling on directed nomination networks.
//!
//! The crate simulates a two-phase design (a stratified Bernoulli initial
//! sample followed by one wave of probabilistic link tracing), computes
//! moment-based stratum and population size estimators with jackknife
//! variances, mean and proportion estimators, and improves all of them by
//! Rao-Blackwellization over sample reorderings, either exactly (by
//! enumeration) or approximately with a Metropolis-Hastings chain.
//!
//! Module map:
//!
//! * [`population`]: the stratified graph, CSV ingestion, synthetic graphs.
//! * [`design`]: drawing samples, observed data and reduced data.
//! * [`estimators`]: count statistics, size/mean/proportion estimators,
//!   jackknife variances and intervals.
//! * [`reorder`]: reorderings, conditional selection probabilities, the
//!   interchange proposal and the Metropolis-Hastings chain.
//! * [`rao_blackwell`]: exact and MCMC Rao-Blackwell estimates.
//! * [`diagnostics`]: over-dispersed seed searches and Gelman-Rubin.
//! * [`simharness`]: replication studies and their reports.

pub mod design;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod population;
pub mod provenance;
pub mod rao_blackwell;
pub mod reorder;
pub mod rng;
pub mod simharness;

pub use error::{Error, ErrorClass, Result};
