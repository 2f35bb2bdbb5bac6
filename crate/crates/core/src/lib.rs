//! Core of the proof-of-following toolkit: vehicle routes, a correlated
//! shadow-fading channel, the RSS signal pipeline and the verification
//! decision engine.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`). The
//! aliases below fix the scalar to `f64`, which is what the simulator and
//! the protocol use.

pub mod channel;
pub mod io;
pub mod kinematics;
pub mod scalar;
pub mod seed;
pub mod sigproc;
pub mod verify;

pub use scalar::Scalar;

pub type Point = kinematics::Point<f64>;
pub type Route = kinematics::Route<f64>;
pub type RoutePoint = kinematics::RoutePoint<f64>;
pub type Polyline = kinematics::Polyline<f64>;
pub type KinematicSpec = kinematics::KinematicSpec<f64>;
pub type PathLossParams = channel::PathLossParams<f64>;
pub type AlignedPair = sigproc::AlignedPair<f64>;
pub type PofDecision = verify::PofDecision<f64>;

pub type Point32 = kinematics::Point<f32>;
pub type Route32 = kinematics::Route<f32>;
pub type AlignedPair32 = sigproc::AlignedPair<f32>;

pub use channel::{RssSample, RssTrace, ShadowField, ShadowFieldParams};
pub use verify::{PofParams, TunedParams};
