//! Simulation and learning library for content caching under Markov-modulated
//! file popularity.

pub mod cache;
pub mod dqn;
pub mod error;
pub mod harness;
pub mod linear;
pub mod mdp;
pub mod network;
pub mod nn;
pub mod popularity;
pub mod rng;
pub mod schedule;
pub mod single_node;
pub mod tabular;

pub use error::{Error, Result};
