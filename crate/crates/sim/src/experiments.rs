//! Monte-Carlo sweeps over the channel and over whole sessions.
//!
//! Seeds fan out over rayon workers; results are collected in seed order,
//! so every sweep is deterministic.

use pof_core::seed::derive_seed_index;
use pof_core::sigproc::{align, default_alignment_tolerance};
use pof_core::verify::{correlation_tests, decide, PofParams};
use pof_protocol::SessionConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_simulation, SimReport};
use crate::scenario::Scenario;
use crate::world::{GapProfile, SampleRequest, World, WorldConfig};
use crate::SimError;

/// One row of a sweep: `x,mean,std,n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl CurvePoint {
    pub fn from_values(x: f64, values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                x,
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self {
            x,
            mean,
            std: var.sqrt(),
            n,
        }
    }
}

/// A verifier/candidate pair at the signal level, without a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalPair {
    /// Candidate distance behind the verifier (m).
    pub gap: f64,
    /// The candidate samples this many seconds after the verifier and its
    /// timestamps are moved back onto the verifier's timeline.
    pub time_offset: f64,
    /// Candidate's shadowing is read this many seconds in the past.
    pub replay_lead: f64,
}

impl SignalPair {
    pub fn at_gap(gap: f64) -> Self {
        Self {
            gap,
            time_offset: 0.0,
            replay_lead: 0.0,
        }
    }
}

const SIGNAL_START: f64 = 1.0;

/// The `K` per-subset correlations of one pair over a fresh world.
pub fn signal_rhos(world_cfg: &WorldConfig, params: &PofParams, pair: SignalPair, seed: u64) -> Result<Vec<f64>, SimError> {
    params.validate().map_err(|e| SimError::Config(e.to_string()))?;
    let world = World::new(world_cfg.clone(), seed)?;
    let rate = world_cfg.rate;
    let count = params.required_samples();
    let span = count as f64 / rate;
    let t0 = SIGNAL_START.min(SIGNAL_START + pair.time_offset) - 1.0;
    let t1 = SIGNAL_START.max(SIGNAL_START + pair.time_offset) + span + 1.0;
    let lead = world.lead_route(t0, t1)?;
    let cand = world.route(&GapProfile::Constant { gap: pair.gap }, t0, t1)?;
    let noise_seed = derive_seed_index(seed, "noise", 0);
    let req = |id, start_local, replay_lead| SampleRequest {
        vehicle_id: id,
        seed: noise_seed,
        clock_offset: 0.0,
        start_local,
        count,
        rate,
        replay_lead,
    };
    let v = world.sample(&lead, &req("V", SIGNAL_START, 0.0))?;
    let c = world
        .sample(&cand, &req("C", SIGNAL_START + pair.time_offset, pair.replay_lead))?
        .time_shifted(-pair.time_offset);
    let aligned = align(&v, &c, default_alignment_tolerance(rate)).map_err(|e| SimError::Runtime(e.to_string()))?;
    correlation_tests(&aligned, params).map_err(|e| SimError::Runtime(e.to_string()))
}

/// Per-subset correlations of `pair` for each seed, in seed order.
pub fn signal_rhos_many(
    world_cfg: &WorldConfig,
    params: &PofParams,
    pair: SignalPair,
    seeds: &[u64],
) -> Result<Vec<Vec<f64>>, SimError> {
    seeds
        .par_iter()
        .map(|&s| signal_rhos(world_cfg, params, pair, s))
        .collect()
}

/// Mean per-subset correlation at each following distance.
pub fn distance_sweep(
    world_cfg: &WorldConfig,
    params: &PofParams,
    gaps: &[f64],
    seeds: &[u64],
) -> Result<Vec<CurvePoint>, SimError> {
    gaps.iter()
        .map(|&d| {
            let rhos = signal_rhos_many(world_cfg, params, SignalPair::at_gap(d), seeds)?;
            Ok(CurvePoint::from_values(d, &rhos.concat()))
        })
        .collect()
}

/// Mean per-subset correlation between two passes over the same spot
/// `dt` seconds apart.
pub fn time_offset_sweep(
    world_cfg: &WorldConfig,
    params: &PofParams,
    offsets: &[f64],
    seeds: &[u64],
) -> Result<Vec<CurvePoint>, SimError> {
    offsets
        .iter()
        .map(|&dt| {
            let pair = SignalPair {
                gap: world_cfg.speed * dt,
                time_offset: dt,
                replay_lead: 0.0,
            };
            let rhos = signal_rhos_many(world_cfg, params, pair, seeds)?;
            Ok(CurvePoint::from_values(dt, &rhos.concat()))
        })
        .collect()
}

/// Least-squares `d_corr` for `mean ≈ exp(−x / d_corr)`.
pub fn fit_decorrelation(points: &[CurvePoint]) -> Option<f64> {
    let pts: Vec<_> = points.iter().filter(|p| p.mean.is_finite()).collect();
    if pts.is_empty() {
        return None;
    }
    let sse = |dc: f64| pts.iter().map(|p| (p.mean - (-p.x / dc).exp()).powi(2)).sum::<f64>();
    // coarse log grid, then golden-section refinement around the best cell
    let grid: Vec<f64> = (0..=400).map(|i| 10f64.powf(i as f64 / 100.0)).collect();
    let best = (0..grid.len()).min_by(|&a, &b| sse(grid[a]).total_cmp(&sse(grid[b])))?;
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if sse(a) < sse(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    Some((lo + hi) / 2.0)
}

fn rate_point(x: f64, accepts: &[bool]) -> CurvePoint {
    let v: Vec<f64> = accepts.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    CurvePoint::from_values(x, &v)
}

/// Passing rate when the candidate's samples are `Δt` old, i.e. relayed
/// onto a verifier window that starts `Δt` later.
pub fn delta_t_sweep(
    world_cfg: &WorldConfig,
    params: &PofParams,
    gap: f64,
    delta_ts: &[f64],
    seeds: &[u64],
) -> Result<Vec<CurvePoint>, SimError> {
    delta_ts
        .iter()
        .map(|&dt| {
            let pair = SignalPair {
                gap,
                time_offset: -dt,
                replay_lead: 0.0,
            };
            let accepts: Vec<bool> = signal_rhos_many(world_cfg, params, pair, seeds)?
                .iter()
                .map(|r| decide(r, params.tau, params.alpha).accept)
                .collect();
            Ok(rate_point(dt, &accepts))
        })
        .collect()
}

/// Passing rates over the first `K` tests of each run, for a legitimate
/// follower and a remote replayer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweep {
    pub legit: Vec<CurvePoint>,
    pub remote: Vec<CurvePoint>,
}

pub fn k_sweep(
    world_cfg: &WorldConfig,
    params: &PofParams,
    legit_gap: f64,
    remote_lead: f64,
    ks: &[usize],
    seeds: &[u64],
) -> Result<KSweep, SimError> {
    let k_max = ks.iter().copied().max().unwrap_or(0);
    if k_max == 0 || k_max > params.k {
        return Err(SimError::Config(format!("K grid must lie in 1..={}", params.k)));
    }
    let legit = signal_rhos_many(world_cfg, params, SignalPair::at_gap(legit_gap), seeds)?;
    let remote_pair = SignalPair {
        gap: legit_gap,
        time_offset: 0.0,
        replay_lead: remote_lead,
    };
    let remote = signal_rhos_many(world_cfg, params, remote_pair, seeds)?;
    let curve = |runs: &[Vec<f64>]| -> Result<Vec<CurvePoint>, SimError> {
        ks.iter()
            .map(|&k| {
                if k == 0 {
                    return Err(SimError::Config("K must be at least 1".into()));
                }
                let accepts: Vec<bool> = runs.iter().map(|r| decide(&r[..k], params.tau, params.alpha).accept).collect();
                Ok(rate_point(k as f64, &accepts))
            })
            .collect()
    };
    Ok(KSweep {
        legit: curve(&legit)?,
        remote: curve(&remote)?,
    })
}

/// Reports for `scenario` over `seeds`, in seed order.
pub fn run_many(
    world_cfg: &WorldConfig,
    scenario: &Scenario,
    session_cfg: &SessionConfig,
    seeds: &[u64],
) -> Result<Vec<SimReport>, SimError> {
    seeds
        .par_iter()
        .map(|&s| run_simulation(world_cfg, scenario, session_cfg, s))
        .collect()
}

pub fn passing_rate(reports: &[SimReport]) -> f64 {
    if reports.is_empty() {
        return f64::NAN;
    }
    reports.iter().filter(|r| r.accepted()).count() as f64 / reports.len() as f64
}

/// End-to-end passing rate of the partial follower at each `theta`.
pub fn partially_following_sweep(
    world_cfg: &WorldConfig,
    base: &Scenario,
    session_cfg: &SessionConfig,
    thetas: &[f64],
    seeds: &[u64],
) -> Result<Vec<CurvePoint>, SimError> {
    thetas
        .iter()
        .map(|&theta| {
            let scenario = Scenario {
                theta,
                kind: crate::scenario::ScenarioKind::PartiallyFollowing,
                ..base.clone()
            };
            let reports = run_many(world_cfg, &scenario, session_cfg, seeds)?;
            let accepts: Vec<bool> = reports.iter().map(SimReport::accepted).collect();
            Ok(rate_point(theta, &accepts))
        })
        .collect()
}

/// Per-subset correlations of one labeled training pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub legit: bool,
    pub gap: f64,
    pub seed: u64,
    pub rhos: Vec<f64>,
}

/// Training material for tuning: `per_class` legitimate pairs with gaps
/// spread over `legit_gaps` and as many adversarial pairs over
/// `adversary_gaps`, each yielding `k_max` correlations.
pub fn training_pairs(
    world_cfg: &WorldConfig,
    n: usize,
    m: usize,
    k_max: usize,
    legit_gaps: (f64, f64),
    adversary_gaps: (f64, f64),
    per_class: usize,
    seed: u64,
) -> Result<Vec<LabeledPair>, SimError> {
    let params = PofParams {
        n,
        m,
        k: k_max,
        ..PofParams::default()
    };
    let spread = |(lo, hi): (f64, f64), i: usize| {
        if per_class <= 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (per_class - 1) as f64
        }
    };
    let jobs: Vec<(bool, f64, u64)> = (0..per_class)
        .flat_map(|i| {
            [
                (true, spread(legit_gaps, i), derive_seed_index(seed, "train/legit", i as u64)),
                (false, spread(adversary_gaps, i), derive_seed_index(seed, "train/adversary", i as u64)),
            ]
        })
        .collect();
    jobs.par_iter()
        .map(|&(legit, gap, s)| {
            Ok(LabeledPair {
                legit,
                gap,
                seed: s,
                rhos: signal_rhos(world_cfg, &params, SignalPair::at_gap(gap), s)?,
            })
        })
        .collect()
}
