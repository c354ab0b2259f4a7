//! Edge caching with federated popularity prediction and an actor-critic
//! replacement agent, plus the simulation harness that evaluates it against
//! classical policies.

pub mod audit;
pub mod baselines;
pub mod cache;
pub mod config;
pub mod ddpg;
pub mod env;
pub mod error;
pub mod fl;
pub mod gradcheck;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod sim;

pub use config::{ExperimentConfig, Policy};
pub use error::{Error, Result};
