//! Packet-level simulation of multi-hop wireless routing.
//!
//! The crate provides a discrete-time network simulator ([`sim`]) over
//! lattice and random geometric topologies with Markov link dynamics
//! ([`topology`]) and Poisson flow traffic ([`traffic`]), three routing
//! policies (distance-vector shortest path and backpressure in
//! [`baselines`], a relational deep Q-learning agent in [`drl`]), and the
//! scenario presets and train/test/sweep drivers in [`scenario`] and
//! [`experiment`].

pub mod baselines;
pub mod distance;
pub mod drl;
pub mod error;
pub mod experiment;
pub mod features;
pub mod nn;
pub mod scenario;
pub mod sim;
pub mod topology;
pub mod traffic;
mod util;

pub use error::{Error, Result};
