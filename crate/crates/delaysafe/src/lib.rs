//! Safe delay-adaptive control of strict-feedback nonlinear systems with an
//! unknown input delay.
//!
//! The plant is a distal chain Y driven through a pure transport delay by an
//! actuator chain X. The crate provides predictor banks, nonovershooting
//! backstepping laws whose transformed states act as control barrier
//! functions, a batch least-squares delay identifier, a closed-form QP safety
//! filter, a deterministic simulator and a two-follower vehicle platoon.

pub mod algebra;
pub mod assumptions;
pub mod backstepping;
pub mod delay_line;
pub mod error;
pub mod expr;
pub mod filter;
pub mod identifier;
pub mod jet;
pub mod model;
pub mod mpoly;
pub mod oracles;
pub mod plant;
pub mod platoon;
pub mod predictor;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use jet::Jet;
pub use model::{Calculus, DelayConfig, Numerics, PlantDefinition, ScenarioConfig};
pub use sim::{Controller, SimLog, Summary};
