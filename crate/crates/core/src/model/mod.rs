//! System model: scenario parameters, stochastic channel generation, and the
//! signal-model quantities (harvested energy, amplification power, uplink SNR,
//! achievable rate).
//!
//! All operations here are pure functions of their inputs; channel generation
//! is deterministic per `(params, seed)`.

mod channel;
mod params;
mod profile;
mod quantities;

pub use channel::{generate_channels, ChannelSet};
pub use params::{Geometry, SystemParams};
pub use profile::{Allocation, RisProfile};
pub use quantities::{
    effective_downlink_channel, effective_uplink_channel, harvested_energy, path_loss, uplink_snr,
    user_rate, wet_amplification_power, wit_amplification_power,
};

use thiserror::Error;

/// Errors produced by the model layer.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("nonpositive distance: {0}")]
    NonpositiveDistance(f64),
    #[error("user index {index} out of range (K = {k})")]
    UserIndexOutOfRange { index: usize, k: usize },
    #[error("zero receive beamforming vector")]
    ZeroReceiveVector,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}
