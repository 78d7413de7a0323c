//! Bayesian target and skill selection for a druid bot in a PVE fight.
//!
//! The crate is organized bottom-up:
//!
//! * [`prob`]: categorical distributions, conditional tables, log-space scoring.
//! * [`vars`]: the discrete variable families.
//! * [`model`]: the target and skill decompositions and the questions asked of them.
//! * [`perception`]: raw world quantities to discrete variables.
//! * [`sim`]: the combat engine, episode logs and replay.
//! * [`learning`]: fitting tables from decision records.
//! * [`experiments`]: soft-evidence sweeps and the joint table as CSV.

pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod learning;
pub mod model;
pub mod perception;
pub mod prob;
pub mod sim;
pub mod vars;

pub use error::{LearnError, ModelError, PerceptionError, ProbError, SimError};
