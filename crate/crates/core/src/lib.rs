//! Exact behavioural metrics on finite Markov decision processes.
//!
//! The crate computes the bisimulation metric, the π-bisimulation metric, the
//! MICo distance and its reduced form, and the kernel similarity metric (KSMe)
//! on tabular MDPs. On top of the solvers it provides the value-difference
//! bound analysis, Euclidean realizations of the KSMe with random projection,
//! and a tabular learner for the kernel-based loss.

#[cfg(test)]
#[macro_use]
mod test_util;

pub mod bounds;
pub mod csvio;
pub mod embedding;
pub mod error;
pub mod fixed_point;
pub mod fixtures;
pub mod learning;
pub mod mdp;
pub mod metrics;
pub mod prob;
pub mod rng;

pub use error::{Error, Result};
pub use fixed_point::{FixedPointOptions, FixedPointReport, DEFAULT_TOL};
pub use mdp::{induce_chain, InducedChain, Mdp, Policy, PolicySpec};
