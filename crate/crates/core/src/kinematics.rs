//! Routes, motion generation and the geometric following predicate.
//!
//! Positions are planar meters in a local tangent plane. Routes are
//! interpolated piecewise-linearly between their timestamped points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Default speed bound between consecutive route points, m/s.
pub const DEFAULT_V_MAX: f64 = 60.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("route needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("route timestamps not strictly increasing at index {index}")]
    NonMonotonicTime { index: usize },
    #[error("non-finite coordinate or time at index {index}")]
    NonFinite { index: usize },
    #[error("speed {speed:.2} m/s between points {index} and {next} exceeds bound {v_max:.2} m/s", next = index + 1)]
    SpeedExceeded { index: usize, speed: f64, v_max: f64 },
    #[error("time {t} outside route span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("route time spans do not overlap")]
    DisjointSpans,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Self, w: T) -> Self {
        Self {
            x: self.x + (other.x - self.x) * w,
            y: self.y + (other.y - self.y) * w,
        }
    }

    pub fn translate(&self, dx: T, dy: T) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutePoint<T> {
    pub pos: Point<T>,
    pub t: T,
}

/// Time-ordered positions of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Route<T> {
    points: Vec<RoutePoint<T>>,
}

impl<T: Scalar> Route<T> {
    pub fn new(points: Vec<RoutePoint<T>>) -> Result<Self, KinematicsError> {
        Self::with_speed_bound(points, T::of(DEFAULT_V_MAX))
    }

    pub fn with_speed_bound(
        points: Vec<RoutePoint<T>>,
        v_max: T,
    ) -> Result<Self, KinematicsError> {
        if points.len() < 2 {
            return Err(KinematicsError::TooFewPoints(points.len()));
        }
        for (index, p) in points.iter().enumerate() {
            if !(p.pos.x.is_finite() && p.pos.y.is_finite() && p.t.is_finite()) {
                return Err(KinematicsError::NonFinite { index });
            }
        }
        for (index, w) in points.windows(2).enumerate() {
            let dt = w[1].t - w[0].t;
            if dt <= T::zero() {
                return Err(KinematicsError::NonMonotonicTime { index: index + 1 });
            }
            let speed = w[0].pos.distance(&w[1].pos) / dt;
            if !speed.is_finite() || speed > v_max {
                return Err(KinematicsError::SpeedExceeded {
                    index,
                    speed: speed.as_f64(),
                    v_max: v_max.as_f64(),
                });
            }
        }
        Ok(Self { points })
    }

    /// Builds a route by sampling `f` on `[t0, t1]` every `dt` seconds.
    /// The last point is always at exactly `t1`.
    pub fn from_fn(
        t0: T,
        t1: T,
        dt: T,
        mut f: impl FnMut(T) -> Point<T>,
    ) -> Result<Self, KinematicsError> {
        if !(dt > T::zero()) || !(t1 > t0) {
            return Err(KinematicsError::InvalidParameter(format!(
                "need t1 > t0 and dt > 0 (t0={t0}, t1={t1}, dt={dt})"
            )));
        }
        let steps = ((t1 - t0) / dt).ceil().to_usize().unwrap_or(1).max(1);
        let mut points = Vec::with_capacity(steps + 1);
        for i in 0..steps {
            let t = t0 + dt * T::of_usize(i);
            if t >= t1 {
                break;
            }
            points.push(RoutePoint { pos: f(t), t });
        }
        points.push(RoutePoint { pos: f(t1), t: t1 });
        Self::new(points)
    }

    pub fn points(&self) -> &[RoutePoint<T>] {
        &self.points
    }

    pub fn start(&self) -> T {
        self.points[0].t
    }

    pub fn end(&self) -> T {
        self.points[self.points.len() - 1].t
    }

    pub fn position_at(&self, t: T) -> Result<Point<T>, KinematicsError> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(KinematicsError::OutOfRange {
                t: t.as_f64(),
                start: start.as_f64(),
                end: end.as_f64(),
            });
        }
        // index of first point with time > t
        let hi = self.points.partition_point(|p| p.t <= t);
        if hi == 0 {
            return Ok(self.points[0].pos);
        }
        let a = &self.points[hi - 1];
        if hi == self.points.len() || a.t == t {
            return Ok(a.pos);
        }
        let b = &self.points[hi];
        Ok(a.pos.lerp(&b.pos, (t - a.t) / (b.t - a.t)))
    }

    pub fn translated(&self, dx: T, dy: T) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| RoutePoint {
                    pos: p.pos.translate(dx, dy),
                    t: p.t,
                })
                .collect(),
        }
    }

    pub fn time_shifted(&self, dt: T) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| RoutePoint { pos: p.pos, t: p.t + dt })
                .collect(),
        }
    }
}

/// Euclidean distance between two routes at time `t`.
pub fn separation<T: Scalar>(a: &Route<T>, b: &Route<T>, t: T) -> Result<T, KinematicsError> {
    Ok(a.position_at(t)?.distance(&b.position_at(t)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Following<T> {
    pub following: bool,
    pub max_separation: T,
    /// Fraction of sampled instants with separation within the bound.
    pub fraction_within: T,
}

/// Ground-truth following check: separation ≤ `d_ref` at every instant
/// sampled every `sample_dt` over the overlap of the two routes (both
/// overlap endpoints included).
pub fn is_following<T: Scalar>(
    verifier: &Route<T>,
    candidate: &Route<T>,
    d_ref: T,
    sample_dt: T,
) -> Result<Following<T>, KinematicsError> {
    if !(sample_dt > T::zero()) {
        return Err(KinematicsError::InvalidParameter(format!(
            "sample_dt must be positive, got {sample_dt}"
        )));
    }
    let t0 = verifier.start().max(candidate.start());
    let t1 = verifier.end().min(candidate.end());
    if t0 > t1 {
        return Err(KinematicsError::DisjointSpans);
    }
    let mut max_sep = T::zero();
    let mut within = 0usize;
    let mut total = 0usize;
    let mut i = 0usize;
    loop {
        let t = (t0 + sample_dt * T::of_usize(i)).min(t1);
        let d = separation(verifier, candidate, t)?;
        max_sep = max_sep.max(d);
        if d <= d_ref {
            within += 1;
        }
        total += 1;
        if t >= t1 {
            break;
        }
        i += 1;
    }
    Ok(Following {
        following: within == total,
        max_separation: max_sep,
        fraction_within: T::of_usize(within) / T::of_usize(total),
    })
}

/// Piecewise-linear path parameterized by arc length. Positions past the
/// last vertex extend along the final segment; negative arc lengths extend
/// backwards along the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline<T> {
    vertices: Vec<Point<T>>,
    cumulative: Vec<T>,
}

impl<T: Scalar> Polyline<T> {
    pub fn new(vertices: Vec<Point<T>>) -> Result<Self, KinematicsError> {
        if vertices.len() < 2 {
            return Err(KinematicsError::TooFewPoints(vertices.len()));
        }
        let mut cumulative = Vec::with_capacity(vertices.len());
        cumulative.push(T::zero());
        for (i, w) in vertices.windows(2).enumerate() {
            let len = w[0].distance(&w[1]);
            if !(len > T::zero()) {
                return Err(KinematicsError::InvalidParameter(format!(
                    "zero-length polyline segment at vertex {i}"
                )));
            }
            cumulative.push(cumulative[i] + len);
        }
        Ok(Self {
            vertices,
            cumulative,
        })
    }

    pub fn straight(length: T) -> Self {
        Self::new(vec![Point::new(T::zero(), T::zero()), Point::new(length, T::zero())])
            .expect("positive length")
    }

    pub fn length(&self) -> T {
        self.cumulative[self.cumulative.len() - 1]
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    pub fn point_at(&self, s: T) -> Point<T> {
        let last = self.vertices.len() - 1;
        let seg = if s <= T::zero() {
            0
        } else {
            self.cumulative.partition_point(|&c| c <= s).clamp(1, last) - 1
        };
        let a = self.vertices[seg];
        let b = self.vertices[seg + 1];
        let w = (s - self.cumulative[seg]) / (self.cumulative[seg + 1] - self.cumulative[seg]);
        a.lerp(&b, w)
    }
}

/// Constant-speed drive along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicSpec<T> {
    pub path: Polyline<T>,
    pub speed: T,
    /// Arc length along the path at `start_time`.
    pub start_offset: T,
    pub start_time: T,
    /// Std of zero-mean Gaussian positional noise per point, meters.
    pub jitter: T,
}

impl<T: Scalar> KinematicSpec<T> {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.speed > T::zero()) {
            return Err(KinematicsError::InvalidParameter(format!(
                "speed must be positive, got {}",
                self.speed
            )));
        }
        if !(self.jitter >= T::zero()) {
            return Err(KinematicsError::InvalidParameter(format!(
                "jitter must be nonnegative, got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    pub fn arc_length_at(&self, t: T) -> T {
        self.start_offset + self.speed * (t - self.start_time)
    }

    /// Samples the drive over `[t0, t1]` every `dt`. Jitter draws come
    /// from `seed` and are independent per point.
    pub fn route(&self, t0: T, t1: T, dt: T, seed: u64) -> Result<Route<T>, KinematicsError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.jitter.as_f64())
            .map_err(|e| KinematicsError::InvalidParameter(e.to_string()))?;
        let jitter = self.jitter > T::zero();
        Route::from_fn(t0, t1, dt, |t| {
            let p = self.path.point_at(self.arc_length_at(t));
            if jitter {
                p.translate(T::of(noise.sample(&mut rng)), T::of(noise.sample(&mut rng)))
            } else {
                p
            }
        })
    }
}

/// Equirectangular projection of `(lat, lon)` degrees to planar meters
/// about the centroid of the input.
pub fn project_equirectangular(latlon: &[(f64, f64)]) -> Vec<Point<f64>> {
    const EARTH_RADIUS_M: f64 = 6_371_008.8;
    if latlon.is_empty() {
        return Vec::new();
    }
    let n = latlon.len() as f64;
    let lat0 = latlon.iter().map(|p| p.0).sum::<f64>() / n;
    let lon0 = latlon.iter().map(|p| p.1).sum::<f64>() / n;
    let cos0 = lat0.to_radians().cos();
    latlon
        .iter()
        .map(|&(lat, lon)| Point {
            x: EARTH_RADIUS_M * (lon - lon0).to_radians() * cos0,
            y: EARTH_RADIUS_M * (lat - lat0).to_radians(),
        })
        .collect()
}
