//! Road, base stations, channel realization and vehicle kinematics.

use pof_core::channel::{
    generate_rss_trace, PathLossParams, SamplingConfig, ShadowField, ShadowFieldParams, DEFAULT_FEATURES,
};
use pof_core::kinematics::{Point, Polyline, Route, RoutePoint};
use pof_core::seed::derive_seed;
use pof_core::RssTrace;
use serde::{Deserialize, Serialize};

use crate::SimError;

/// Route sampling step (s).
pub const ROUTE_DT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Road centreline; vehicles drive along it from `lead_start`.
    pub path: Vec<Point<f64>>,
    pub stations: Vec<Point<f64>>,
    pub path_loss: PathLossParams<f64>,
    pub d_corr: f64,
    pub t_corr: f64,
    pub features: usize,
    pub rate: f64,
    pub small_scale_std: f64,
    /// One-way message latency (s).
    pub latency: f64,
    /// Clock offsets are drawn uniformly from `±clock_offset_max` (s).
    pub clock_offset_max: f64,
    /// Platoon speed (m/s).
    pub speed: f64,
    /// Arc length of the lead vehicle at t = 0 (m).
    pub lead_start: f64,
    /// Following distance bound used for ground truth (m).
    pub d_ref: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            path: vec![Point::new(0.0, 0.0), Point::new(20_000.0, 0.0)],
            stations: vec![Point::new(1500.0, 3000.0)],
            path_loss: PathLossParams::default(),
            d_corr: 53.35,
            t_corr: 2.0,
            features: DEFAULT_FEATURES,
            rate: 20.0,
            small_scale_std: 4.0,
            latency: 0.01,
            clock_offset_max: 0.05,
            speed: 13.3,
            lead_start: 1000.0,
            d_ref: 20.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.path.len() < 2 {
            return bad("path needs at least two vertices".into());
        }
        Polyline::new(self.path.clone()).map_err(|e| SimError::Config(format!("path: {e}")))?;
        if self.stations.is_empty() {
            return bad("at least one station is required".into());
        }
        self.path_loss
            .validate()
            .map_err(|e| SimError::Config(format!("path_loss: {e}")))?;
        let positive = [
            ("d_corr", self.d_corr),
            ("t_corr", self.t_corr),
            ("rate", self.rate),
            ("speed", self.speed),
            ("d_ref", self.d_ref),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let nonneg = [
            ("small_scale_std", self.small_scale_std),
            ("latency", self.latency),
            ("clock_offset_max", self.clock_offset_max),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if self.features == 0 {
            return bad("features must be positive".into());
        }
        Ok(())
    }
}

/// How a vehicle's distance behind the lead evolves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapProfile {
    Constant {
        gap: f64,
    },
    /// Near for a fraction `theta` of `window`, far otherwise.
    Partial {
        near: f64,
        far: f64,
        theta: f64,
        window: (f64, f64),
        pattern: FollowPattern,
        /// Relative speed limit when changing gap (m/s); `None` switches
        /// instantly.
        ramp_speed: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FollowPattern {
    /// One near segment at the start of the window.
    Contiguous,
    /// `segments` equal cycles, each near for its first `theta` share.
    Interleaved { segments: usize },
}

impl GapProfile {
    /// Gap the vehicle aims for at time `t`.
    pub fn target(&self, t: f64) -> f64 {
        match *self {
            Self::Constant { gap } => gap,
            Self::Partial {
                near,
                far,
                theta,
                window: (w0, w1),
                pattern,
                ..
            } => {
                let u = ((t - w0) / (w1 - w0)).clamp(0.0, 1.0);
                let near_now = match pattern {
                    FollowPattern::Contiguous => u < theta || theta >= 1.0,
                    FollowPattern::Interleaved { segments } => {
                        let n = segments.max(1) as f64;
                        let phase = (u * n).fract();
                        theta >= 1.0 || (u < 1.0 && phase < theta)
                    }
                };
                if t < w0 || (near_now && theta > 0.0) {
                    near
                } else {
                    far
                }
            }
        }
    }

    fn ramp_speed(&self) -> Option<f64> {
        match self {
            Self::Constant { .. } => None,
            Self::Partial { ramp_speed, .. } => *ramp_speed,
        }
    }

    /// Gap at each step of `[t0, t1]` sampled every `dt`.
    pub fn realize(&self, t0: f64, t1: f64, dt: f64) -> Vec<(f64, f64)> {
        let steps = ((t1 - t0) / dt).ceil() as usize;
        let mut gap = self.target(t0);
        let mut out = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let t = (t0 + dt * i as f64).min(t1);
            if i < steps && t1 - t < 1e-6 * dt {
                continue;
            }
            let target = self.target(t);
            gap = match self.ramp_speed() {
                Some(v) if i > 0 => gap + (target - gap).clamp(-v * dt, v * dt),
                _ => target,
            };
            out.push((t, gap));
        }
        out
    }
}

/// A batch of samples taken by one receiver.
#[derive(Debug, Clone, Copy)]
pub struct SampleRequest<'a> {
    pub vehicle_id: &'a str,
    pub seed: u64,
    pub clock_offset: f64,
    /// Local time of the first sample.
    pub start_local: f64,
    pub count: usize,
    pub rate: f64,
    /// Shadowing is read this many seconds in the past (replayed traces).
    pub replay_lead: f64,
}

/// One realization of the environment.
pub struct World {
    pub cfg: WorldConfig,
    pub field: ShadowField,
    path: Polyline<f64>,
}

impl World {
    pub fn new(cfg: WorldConfig, seed: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let field = ShadowField::new(
            cfg.path_loss.sigma_shadow,
            ShadowFieldParams {
                d_corr: cfg.d_corr,
                t_corr: cfg.t_corr,
                seed: derive_seed(seed, "field"),
                features: cfg.features,
            },
        )
        .map_err(|e| SimError::Config(e.to_string()))?;
        let path = Polyline::new(cfg.path.clone()).map_err(|e| SimError::Config(e.to_string()))?;
        Ok(Self { cfg, field, path })
    }

    /// Arc length of the lead vehicle at `t`.
    pub fn lead_arc(&self, t: f64) -> f64 {
        self.cfg.lead_start + self.cfg.speed * t
    }

    /// Route of a vehicle driving `profile` behind the lead over `[t0, t1]`.
    pub fn route(&self, profile: &GapProfile, t0: f64, t1: f64) -> Result<Route<f64>, SimError> {
        let points = profile
            .realize(t0, t1, ROUTE_DT)
            .into_iter()
            .map(|(t, gap)| RoutePoint {
                pos: self.path.point_at(self.lead_arc(t) - gap),
                t,
            })
            .collect();
        let v_max = match profile {
            GapProfile::Partial { ramp_speed: None, .. } => f64::INFINITY,
            _ => 2.0 * self.cfg.speed + 60.0,
        };
        Route::with_speed_bound(points, v_max).map_err(|e| SimError::Config(format!("route: {e}")))
    }

    pub fn lead_route(&self, t0: f64, t1: f64) -> Result<Route<f64>, SimError> {
        self.route(&GapProfile::Constant { gap: 0.0 }, t0, t1)
    }

    /// Samples the channel along `route` as described by `req`.
    pub fn sample(&self, route: &Route<f64>, req: &SampleRequest<'_>) -> Result<RssTrace, SimError> {
        let mut sc = SamplingConfig::new(req.rate, self.cfg.small_scale_std, req.seed, req.vehicle_id);
        sc.clock_offset = req.clock_offset;
        sc.window = Some((req.start_local, req.count));
        sc.replay_lead = req.replay_lead;
        generate_rss_trace(route, &self.cfg.stations, &self.cfg.path_loss, &self.field, &sc)
            .map_err(|e| SimError::Runtime(e.to_string()))
    }
}
