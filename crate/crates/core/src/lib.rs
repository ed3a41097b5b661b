//! Slotted-ALOHA random access with adaptive backlog estimation.
//!
//! The crate is split along the lines of the model:
//!
//! - [`traffic`]: interrupted Poisson arrivals and reproducible random streams.
//! - [`analysis`]: drift functions, the streak chain and its stationary law.
//! - [`estimators`]: FASA and the baseline estimators behind one interface.
//! - [`simulator`]: the slotted collision channel and the experiment drivers.
//! - [`metrics`]: rising time, stationary throughput, delay percentiles, divergence.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod metrics;
pub mod simulator;
pub mod traffic;

pub use error::{Error, Result};

/// `1 / (e - 2)`, the collision increment shared by FASA and PB-ALOHA.
pub const COLLISION_STEP: f64 = 1.0 / (std::f64::consts::E - 2.0);

/// `e^-1`, the throughput of an optimally tuned slotted ALOHA channel.
pub const INV_E: f64 = 0.367_879_441_171_442_33;
