//! Repeated collection and verification after a successful join.

use pof_core::channel::RssTrace;
use pof_core::sigproc::{align, default_alignment_tolerance};
use pof_core::verify::{verify_pair, PofDecision};
use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;

/// Gaps in the verifier's stream longer than this many periods void a window.
pub const MAX_GAP_PERIODS: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum WindowOutcome {
    Verdict {
        index: usize,
        start_t: f64,
        end_t: f64,
        decision: PofDecision<f64>,
    },
    Skipped {
        index: usize,
        start_t: f64,
        end_t: f64,
        diagnostic: String,
    },
}

impl WindowOutcome {
    /// `Some(accept)` for evaluated windows.
    pub fn accept(&self) -> Option<bool> {
        match self {
            Self::Verdict { decision, .. } => Some(decision.accept),
            Self::Skipped { .. } => None,
        }
    }
}

/// One verdict per consecutive block of `(K+1)·N/2` verifier samples.
/// Windows with stream gaps are skipped; membership ends at the first
/// rejection, so nothing follows a rejecting window.
pub fn continuous_verification(cfg: &SessionConfig, v: &RssTrace, c: &RssTrace) -> Vec<WindowOutcome> {
    let need = cfg.params.required_samples();
    let tol = default_alignment_tolerance(v.rate());
    let max_gap = MAX_GAP_PERIODS * v.period();
    let mut out = Vec::new();
    for (index, block) in v.samples().chunks_exact(need).enumerate() {
        let (start_t, end_t) = (block[0].t, block[need - 1].t);
        let skip = |diagnostic: String| WindowOutcome::Skipped {
            index,
            start_t,
            end_t,
            diagnostic,
        };
        if let Some(w) = block.windows(2).find(|w| w[1].t - w[0].t > max_gap) {
            out.push(skip(format!("verifier stream gap of {:.3} s at t = {:.3}", w[1].t - w[0].t, w[0].t)));
            continue;
        }
        let vw = v.window(start_t, end_t);
        let cw = c.window(start_t - tol, end_t + tol);
        let decision = align(&vw, &cw, tol)
            .map_err(|e| e.to_string())
            .and_then(|pair| verify_pair(&pair, &cfg.params).map_err(|e| e.to_string()));
        match decision {
            Ok(decision) => {
                let accept = decision.accept;
                out.push(WindowOutcome::Verdict {
                    index,
                    start_t,
                    end_t,
                    decision,
                });
                if !accept {
                    break;
                }
            }
            Err(e) => out.push(skip(format!("candidate stream unusable: {e}"))),
        }
    }
    out
}
