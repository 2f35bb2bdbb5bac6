//! `pof sweep`: one curve over a grid, written as `x,mean,std,n`.

use std::fmt;

use clap::ValueEnum;
use pof_core::verify::PofParams;
use pof_sim::experiments::{
    delta_t_sweep, distance_sweep, fit_decorrelation, k_sweep, partially_following_sweep, time_offset_sweep,
    CurvePoint,
};
use pof_sim::{Scenario, ScenarioKind};

use crate::config::LoadedConfig;
use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    /// Mean per-subset correlation against following distance (m).
    Distance,
    /// Mean per-subset correlation between two passes over the same spot
    /// against their time offset (s).
    TimeOffset,
    /// End-to-end passing rate of the partial follower against θ.
    Theta,
    /// Passing rate against the age of the relayed samples (s).
    DeltaT,
    /// Passing rate of a follower (and of a remote replayer) against K.
    #[value(name = "K", alias = "k")]
    K,
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_possible_value().expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub kind: SweepKind,
    pub curve: Vec<CurvePoint>,
    /// Remote-replayer curve of a K sweep.
    pub remote: Option<Vec<CurvePoint>>,
    /// Least-squares decorrelation distance of a distance sweep.
    pub fitted_d_corr: Option<f64>,
}

pub fn curve_csv(points: &[CurvePoint]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).map_err(HarnessError::runtime)?;
    }
    w.into_inner().map_err(HarnessError::runtime)
}

pub fn read_curve(path: &std::path::Path) -> Result<Vec<CurvePoint>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| HarnessError::config(path, e.to_string()))?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| HarnessError::Config {
                path: path.to_path_buf(),
                line: Some(i + 2),
                column: None,
                msg: e.to_string(),
            })
        })
        .collect()
}

fn partial_base(cfg: &LoadedConfig) -> Scenario {
    cfg.raw
        .scenarios
        .iter()
        .find(|s| s.kind == ScenarioKind::PartiallyFollowing)
        .cloned()
        .unwrap_or_else(|| Scenario::partially_following(0.0))
}

/// Runs `kind` over `grid` (or the config's `sweep.grid` when empty) for
/// every configured seed.
pub fn sweep(cfg: &LoadedConfig, kind: SweepKind, grid: &[f64]) -> Result<SweepOutput> {
    let grid = if grid.is_empty() { &cfg.raw.sweep.grid[..] } else { grid };
    if grid.is_empty() {
        return Err(cfg.error_at("sweep", "sweep grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|x| !x.is_finite()) {
        return Err(cfg.error_at("grid", format!("grid value {bad} is not finite")));
    }
    let params = cfg.params(cfg.raw.seed)?;
    let seeds = &cfg.seeds;
    let world = &cfg.world;
    let spec = &cfg.raw.sweep;
    let rt = HarnessError::runtime;
    let mut out = SweepOutput {
        kind,
        curve: Vec::new(),
        remote: None,
        fitted_d_corr: None,
    };
    match kind {
        SweepKind::Distance => {
            out.curve = distance_sweep(world, &params, grid, seeds).map_err(rt)?;
            out.fitted_d_corr = fit_decorrelation(&out.curve);
        }
        SweepKind::TimeOffset => out.curve = time_offset_sweep(world, &params, grid, seeds).map_err(rt)?,
        SweepKind::Theta => {
            if let Some(t) = grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                return Err(cfg.error_at("grid", format!("theta {t} outside [0, 1]")));
            }
            let session = cfg.session(params);
            out.curve = partially_following_sweep(world, &partial_base(cfg), &session, grid, seeds).map_err(rt)?;
        }
        SweepKind::DeltaT => out.curve = delta_t_sweep(world, &params, spec.gap, grid, seeds).map_err(rt)?,
        SweepKind::K => {
            let ks: Vec<usize> = grid
                .iter()
                .map(|&k| {
                    if k >= 1.0 && k.fract() == 0.0 {
                        Ok(k as usize)
                    } else {
                        Err(cfg.error_at("grid", format!("K grid value {k} is not a positive integer")))
                    }
                })
                .collect::<Result<_>>()?;
            let k_max = *ks.iter().max().expect("grid nonempty");
            let params = PofParams { k: k_max, ..params };
            let r = k_sweep(world, &params, spec.gap, spec.remote_lead, &ks, seeds).map_err(rt)?;
            out.curve = r.legit;
            out.remote = Some(r.remote);
        }
    }
    Ok(out)
}

/// Parses `10,20,30` or `10:110:10` (inclusive start:stop:step).
pub fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts[..] {
        [a, b, c] => {
            let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
            if !(step > 0.0) || stop < start {
                return Err("range needs start <= stop and a positive step".into());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + step * i as f64).collect())
        }
        [_] => s.split(',').filter(|t| !t.trim().is_empty()).map(num).collect(),
        _ => Err("grid is `a,b,c` or `start:stop:step`".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("1,2.5,4").unwrap(), vec![1.0, 2.5, 4.0]);
        assert_eq!(parse_grid("10:50:10").unwrap(), vec![10.0, 20.0, 30.0, 40.0, 50.0]);
        assert_eq!(parse_grid("0:5:1").unwrap().len(), 6);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn kind_names() {
        let names: Vec<String> = SweepKind::value_variants().iter().map(ToString::to_string).collect();
        assert_eq!(names, ["distance", "time-offset", "theta", "delta-t", "K"]);
        assert_eq!(SweepKind::from_str("k", false), Ok(SweepKind::K));
    }

    #[test]
    fn curve_csv_round_trips() {
        let pts = vec![CurvePoint::from_values(10.0, &[0.1, 0.7, 0.35]), CurvePoint::from_values(20.0, &[1.0])];
        let text = curve_csv(&pts).unwrap();
        assert!(text.starts_with(b"x,mean,std,n\n"));
        let back: Vec<CurvePoint> = csv::Reader::from_reader(&text[..])
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .unwrap();
        assert_eq!(back, pts);
    }
}
