use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ChannelError;
use crate::kinematics::Point;

pub const DEFAULT_FEATURES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowFieldParams {
    /// Spatial decorrelation distance, meters.
    pub d_corr: f64,
    /// Temporal decorrelation constant, seconds.
    pub t_corr: f64,
    pub seed: u64,
    /// Number of spectral components in the realization.
    #[serde(default = "default_features")]
    pub features: usize,
}

fn default_features() -> usize {
    DEFAULT_FEATURES
}

impl Default for ShadowFieldParams {
    fn default() -> Self {
        Self {
            d_corr: 53.35,
            t_corr: 2.0,
            seed: 0,
            features: DEFAULT_FEATURES,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Component {
    kx: f64,
    ky: f64,
    omega: f64,
    phase: f64,
}

/// One realization of a zero-mean Gaussian shadowing field over
/// `(x, y, t)` with covariance `σ²·e^(−|Δp|/d_corr)·e^(−|Δt|/t_corr)`.
///
/// The realization is a sum of random cosines whose wave vectors are drawn
/// from the spectral measure of the covariance: in the plane the exponential
/// kernel has radial spectral CDF `1 − (1 + d_corr²k²)^(−1/2)`, in time the
/// spectrum is Cauchy with scale `1/t_corr`. Radii, directions and temporal
/// frequencies are stratified across components, which keeps the
/// per-realization correlation close to the ensemble value.
///
/// Queries are pure functions of `(seed, pos, t)`; the field never changes
/// after construction.
#[derive(Debug, Clone)]
pub struct ShadowField {
    sigma: f64,
    params: ShadowFieldParams,
    amplitude: f64,
    components: Vec<Component>,
}

impl ShadowField {
    pub fn new(sigma_shadow: f64, params: ShadowFieldParams) -> Result<Self, ChannelError> {
        if !(params.d_corr > 0.0) || !(params.t_corr > 0.0) {
            return Err(ChannelError::InvalidParameter(format!(
                "d_corr and t_corr must be positive (got {}, {})",
                params.d_corr, params.t_corr
            )));
        }
        if !(sigma_shadow >= 0.0) || !sigma_shadow.is_finite() {
            return Err(ChannelError::InvalidParameter(format!(
                "sigma_shadow must be finite and nonnegative, got {sigma_shadow}"
            )));
        }
        if params.features == 0 {
            return Err(ChannelError::InvalidParameter("field needs at least one component".into()));
        }
        let j = params.features;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut angle_slots: Vec<usize> = (0..j).collect();
        let mut time_slots: Vec<usize> = (0..j).collect();
        angle_slots.shuffle(&mut rng);
        time_slots.shuffle(&mut rng);
        let jf = j as f64;
        let components = (0..j)
            .map(|i| {
                let u_r = (i as f64 + rng.random::<f64>()) / jf;
                let radius = ((1.0 - u_r).powi(-2) - 1.0).max(0.0).sqrt() / params.d_corr;
                let theta = 2.0 * PI * (angle_slots[i] as f64 + rng.random::<f64>()) / jf;
                let u_t = (time_slots[i] as f64 + rng.random::<f64>()) / jf;
                let omega = (PI * (u_t - 0.5)).tan() / params.t_corr;
                Component {
                    kx: radius * theta.cos(),
                    ky: radius * theta.sin(),
                    omega,
                    phase: 2.0 * PI * rng.random::<f64>(),
                }
            })
            .collect();
        Ok(Self {
            sigma: sigma_shadow,
            params,
            amplitude: sigma_shadow * (2.0 / jf).sqrt(),
            components,
        })
    }

    pub fn params(&self) -> &ShadowFieldParams {
        &self.params
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Shadowing value in dB at `pos` and time `t`.
    pub fn sample(&self, pos: Point<f64>, t: f64) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let s: f64 = self
            .components
            .iter()
            .map(|c| (c.kx * pos.x + c.ky * pos.y + c.omega * t + c.phase).cos())
            .sum();
        self.amplitude * s
    }

    /// Model correlation between two query points.
    pub fn model_correlation(&self, a: (Point<f64>, f64), b: (Point<f64>, f64)) -> f64 {
        (-a.0.distance(&b.0) / self.params.d_corr).exp()
            * (-(a.1 - b.1).abs() / self.params.t_corr).exp()
    }
}
