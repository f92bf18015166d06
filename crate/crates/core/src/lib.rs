//! Drift dynamics toolkit: combined-slip tire model, single-track vehicle
//! models, phase-plane equilibrium and saddle analysis, dual stability
//! envelopes under bounded inputs, and an envelope-constrained NMPC drift
//! controller with a closed-loop simulation harness.

pub mod error;
pub mod exec;
pub mod envelope;
pub mod equilibrium;
pub mod handling;
pub mod numeric;
pub mod saddle;
pub mod tire;
pub mod vehicle;

pub use error::{Error, Result};
pub use exec::Parallelism;
