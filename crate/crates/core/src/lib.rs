//! Wideband mmWave integrated access and backhaul simulator.

pub mod canceler;
pub mod channel;
pub mod codebook;
pub mod error;
pub mod harness;
pub mod estimation;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod transceiver;

pub use error::{Error, Result};
