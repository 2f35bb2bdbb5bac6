//! Deterministic discrete-event simulation of proof-of-following sessions.
//!
//! A [`world::World`] fixes the road, the base stations and one realization
//! of the shadow field. [`engine::run_simulation`] drives a verifier, a
//! candidate and optionally an adversary through one session over that
//! world, and [`experiments`] wraps it and the raw channel in the sweeps
//! used to characterize the scheme.

pub mod adversary;
pub mod engine;
pub mod experiments;
pub mod queue;
pub mod scenario;
pub mod world;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

pub use adversary::{AdvAction, Adversary};
pub use engine::{run_simulation, GroundTruth, Outcome, SimReport};
pub use queue::EventQueue;
pub use scenario::{MitmStrategy, Scenario, ScenarioKind};
pub use world::{FollowPattern, GapProfile, World, WorldConfig};
