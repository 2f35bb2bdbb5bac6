use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{path_loss, ChannelError, PathLossParams, ShadowField};
use crate::kinematics::{Point, Route};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssSample {
    /// Timestamp on the collecting party's clock, seconds.
    pub t: f64,
    pub rss: f64,
}

/// Timestamped RSS samples collected by one vehicle at a fixed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssTrace {
    samples: Vec<RssSample>,
    rate: f64,
    vehicle_id: String,
}

impl RssTrace {
    /// Timestamps must be finite and strictly increasing. Gaps larger than
    /// one period (dropouts) are allowed; alignment deals with them.
    pub fn new(
        samples: Vec<RssSample>,
        rate: f64,
        vehicle_id: impl Into<String>,
    ) -> Result<Self, ChannelError> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(ChannelError::InvalidTrace(format!("rate must be positive, got {rate}")));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.t.is_finite() && s.rss.is_finite()) {
                return Err(ChannelError::InvalidTrace(format!("non-finite sample at index {i}")));
            }
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(ChannelError::InvalidTrace(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self {
            samples,
            rate,
            vehicle_id: vehicle_id.into(),
        })
    }

    pub fn samples(&self) -> &[RssSample] {
        &self.samples
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn period(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn vehicle_id(&self) -> &str {
        &self.vehicle_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.rss).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn start(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn end(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    /// Same samples with every timestamp moved by `dt`.
    pub fn time_shifted(&self, dt: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| RssSample { t: s.t + dt, rss: s.rss }).collect(),
            rate: self.rate,
            vehicle_id: self.vehicle_id.clone(),
        }
    }

    pub fn with_vehicle_id(mut self, id: impl Into<String>) -> Self {
        self.vehicle_id = id.into();
        self
    }

    /// Samples with `t0 <= t <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> Self {
        Self {
            samples: self.samples.iter().copied().filter(|s| s.t >= t0 && s.t <= t1).collect(),
            rate: self.rate,
            vehicle_id: self.vehicle_id.clone(),
        }
    }
}

/// How one receiver samples the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub rate: f64,
    pub small_scale_std: f64,
    pub seed: u64,
    pub vehicle_id: String,
    /// Receiver clock minus true time, seconds.
    pub clock_offset: f64,
    /// First local timestamp and sample count. `None` samples the whole
    /// route span starting at its first instant.
    pub window: Option<(f64, usize)>,
    /// Shadowing is read this many seconds in the past, modeling a trace
    /// recorded earlier at the same positions and replayed now.
    pub replay_lead: f64,
}

impl SamplingConfig {
    pub fn new(rate: f64, small_scale_std: f64, seed: u64, vehicle_id: impl Into<String>) -> Self {
        Self {
            rate,
            small_scale_std,
            seed,
            vehicle_id: vehicle_id.into(),
            clock_offset: 0.0,
            window: None,
            replay_lead: 0.0,
        }
    }
}

fn nearest_station(stations: &[Point<f64>], pos: &Point<f64>) -> f64 {
    stations
        .iter()
        .map(|s| s.distance(pos))
        .fold(f64::INFINITY, f64::min)
}

/// Samples RSS along `route`: `tx_power − path_loss(nearest station) −
/// shadow(pos, t) + residue`. The shadow field is shared by every receiver;
/// the residue stream is seeded from `(seed, vehicle_id)`.
pub fn generate_rss_trace(
    route: &Route<f64>,
    stations: &[Point<f64>],
    pl: &PathLossParams<f64>,
    field: &ShadowField,
    cfg: &SamplingConfig,
) -> Result<RssTrace, ChannelError> {
    if stations.is_empty() {
        return Err(ChannelError::NoStations);
    }
    pl.validate()?;
    if !(cfg.rate > 0.0) {
        return Err(ChannelError::InvalidParameter(format!("rate must be positive, got {}", cfg.rate)));
    }
    let period = 1.0 / cfg.rate;
    let (start_local, count) = match cfg.window {
        Some(w) => w,
        None => {
            let span = route.end() - route.start();
            if span < period {
                return Err(ChannelError::InvalidParameter(format!(
                    "route span {span} s shorter than one sample period {period} s"
                )));
            }
            (route.start() + cfg.clock_offset, (span * cfg.rate + 1e-9).floor() as usize + 1)
        }
    };
    let noise = Normal::new(0.0, cfg.small_scale_std)
        .map_err(|e| ChannelError::InvalidParameter(format!("small_scale_std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &cfg.vehicle_id));
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let local = start_local + i as f64 * period;
        let t = local - cfg.clock_offset;
        let pos = route.position_at(t)?;
        let loss = path_loss(nearest_station(stations, &pos), pl).db;
        let shadow = field.sample(pos, t - cfg.replay_lead);
        let residue = if cfg.small_scale_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        samples.push(RssSample {
            t: local,
            rss: pl.tx_power - loss - shadow + residue,
        });
    }
    RssTrace::new(samples, cfg.rate, cfg.vehicle_id.clone())
}
