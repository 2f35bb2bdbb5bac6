//! Generative RF model: log-distance path loss, a spatio-temporally
//! correlated shadow-fading field shared by all receivers, and independent
//! per-receiver small-scale residue.

mod field;
mod pathloss;
pub mod reference;
mod trace;

pub use field::{ShadowField, ShadowFieldParams, DEFAULT_FEATURES};
pub use pathloss::{path_loss, spatial_correlation, temporal_correlation, PathLoss, PathLossParams};
pub use trace::{generate_rss_trace, RssSample, RssTrace, SamplingConfig};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("no base stations configured")]
    NoStations,
    #[error("invalid channel parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid RSS trace: {0}")]
    InvalidTrace(String),
    #[error(transparent)]
    Kinematics(#[from] crate::kinematics::KinematicsError),
}
