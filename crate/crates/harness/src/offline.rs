//! Offline commands on recorded traces: `verify-trace` and `apen`.

use std::path::Path;

use pof_core::io::read_trace;
use pof_core::sigproc::{align, approx_entropy, default_alignment_tolerance, moving_average, std_dev, SigprocError};
use pof_core::verify::{verify_pair, PofParams};
use pof_core::RssTrace;
use serde::{Deserialize, Serialize};

use crate::config::load_params;
use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceVerdict {
    pub verdict: String,
    pub accept: bool,
    pub rhos: Vec<f64>,
    pub passed_count: usize,
    pub required: usize,
    pub params: PofParams,
    pub aligned_samples: usize,
}

impl TraceVerdict {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes") + "\n"
    }
}

// CSV line (header is line 1) of the first verifier sample with no
// candidate sample within `tol`.
fn first_unmatched_row(tv: &RssTrace, tc: &RssTrace, tol: f64) -> Option<usize> {
    let c = tc.samples();
    let (lo, hi) = (c.first()?.t, c.last()?.t);
    let mut j = 0;
    for (i, s) in tv.samples().iter().enumerate() {
        if s.t < lo - tol || s.t > hi + tol {
            continue;
        }
        while j + 1 < c.len() && (c[j + 1].t - s.t).abs() <= (c[j].t - s.t).abs() {
            j += 1;
        }
        if (c[j].t - s.t).abs() > tol {
            return Some(i + 2);
        }
    }
    None
}

/// Offline decision on a recorded verifier/candidate pair.
pub fn verify_trace(trace_v: &Path, trace_c: &Path, params: &Path) -> Result<TraceVerdict> {
    let params = load_params(params)?;
    let tv = read_trace(trace_v)?;
    let tc = read_trace(trace_c)?;
    let tol = default_alignment_tolerance(tv.rate());
    let aligned = align(&tv, &tc, tol).map_err(|e| match e {
        SigprocError::Misaligned { .. } => HarnessError::Config {
            path: trace_v.to_path_buf(),
            line: first_unmatched_row(&tv, &tc, tol),
            column: None,
            msg: format!("cannot align with {}: {e}", trace_c.display()),
        },
        other => HarnessError::Runtime(format!("{} vs {}: {other}", trace_v.display(), trace_c.display())),
    })?;
    let d = verify_pair(&aligned, &params).map_err(HarnessError::runtime)?;
    Ok(TraceVerdict {
        verdict: if d.accept { "accept" } else { "reject" }.into(),
        accept: d.accept,
        rhos: d.rhos,
        passed_count: d.passed_count,
        required: d.required,
        params,
        aligned_samples: aligned.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApenOptions {
    pub m: usize,
    /// Similarity radius as a multiple of the smoothed trace's deviation.
    pub r_factor: f64,
    /// Moving-average window applied first; 1 disables smoothing.
    pub smooth: usize,
}

impl Default for ApenOptions {
    fn default() -> Self {
        Self {
            m: 2,
            r_factor: 0.2,
            smooth: 20,
        }
    }
}

/// ApEn of `rss` after smoothing. A flat series scores 0.
pub fn apen_of(rss: &[f64], opts: ApenOptions) -> Result<f64> {
    if !(opts.r_factor > 0.0 && opts.r_factor.is_finite()) {
        return Err(HarnessError::Runtime(format!("R-factor must be positive, got {}", opts.r_factor)));
    }
    let need = opts.m + 2 + opts.smooth.saturating_sub(1);
    if rss.len() < need {
        return Err(HarnessError::Runtime(format!(
            "trace has {} samples; m={} with smoothing M={} needs at least {need}",
            rss.len(),
            opts.m,
            opts.smooth
        )));
    }
    let x = moving_average(rss, opts.smooth.max(1)).map_err(HarnessError::runtime)?;
    let r = opts.r_factor * std_dev(&x);
    if r == 0.0 {
        return Ok(0.0);
    }
    approx_entropy(&x, opts.m, r).map_err(HarnessError::runtime)
}

pub fn apen(trace: &Path, opts: ApenOptions) -> Result<f64> {
    let t = read_trace(trace)?;
    let rss: Vec<f64> = t.samples().iter().map(|s| s.rss).collect();
    apen_of(&rss, opts).map_err(|e| HarnessError::Runtime(format!("{}: {e}", trace.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_series_scores_zero() {
        assert_eq!(apen_of(&[3.0; 200], ApenOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn short_series_is_an_error() {
        let e = apen_of(&[1.0, 2.0, 3.0], ApenOptions { smooth: 1, ..Default::default() }).unwrap_err();
        assert!(e.to_string().contains("at least 4"), "{e}");
        assert!(apen_of(&[1.0; 22], ApenOptions::default()).is_err());
        assert!(apen_of(&[1.0; 23], ApenOptions::default()).is_ok());
    }

    #[test]
    fn bad_radius_is_an_error() {
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        assert!(apen_of(&x, ApenOptions { r_factor: 0.0, ..Default::default() }).is_err());
    }
}
