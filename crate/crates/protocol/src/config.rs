use pof_core::verify::PofParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid session config: {0}")]
    Invalid(String),
}

/// Parameters both parties agree on for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub params: PofParams,
    /// Allowed lag between the end of collection and the commitment (s).
    pub epsilon: f64,
    /// Delay before the commitment is opened (s).
    pub delta_t: f64,
    /// Earliest collection window `[start_t, end_t)` in the verifier's
    /// clock (s). A request arriving too late for it shifts the window.
    pub window: (f64, f64),
    /// Minimum gap between answering a join request and starting to
    /// collect (s).
    pub reply_lead: f64,
    pub rate: f64,
    /// Carrier frequency echoed in the reply; opaque to the protocol.
    pub freq: f64,
    /// Worst-case clock disagreement between the parties (s).
    pub sync_error_bound: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let params = PofParams::default();
        let rate = 20.0;
        Self {
            window: (1.0, 1.0 + params.duration_secs(rate)),
            params,
            reply_lead: 0.5,
            epsilon: 0.5,
            delta_t: 3.0,
            rate,
            freq: 5.9e9,
            sync_error_bound: 0.1,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad(format!("rate must be positive, got {}", self.rate));
        }
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return bad(format!("delta_t must be positive, got {}", self.delta_t));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= self.delta_t / 4.0) {
            return bad(format!(
                "epsilon must lie in (0, delta_t/4 = {}], got {}",
                self.delta_t / 4.0,
                self.epsilon
            ));
        }
        if !(self.sync_error_bound >= 0.0 && self.sync_error_bound < self.epsilon) {
            return bad(format!(
                "sync_error_bound must lie in [0, epsilon), got {}",
                self.sync_error_bound
            ));
        }
        if !(self.reply_lead >= 0.0 && self.reply_lead.is_finite()) {
            return bad(format!("reply_lead must be nonnegative, got {}", self.reply_lead));
        }
        let (s, e) = self.window;
        if !(s.is_finite() && e.is_finite() && e > s) {
            return bad(format!("window ({s}, {e}) is empty"));
        }
        let need = self.params.required_samples();
        if self.window_samples() < need {
            return bad(format!(
                "window of {} s holds {} samples at {} Hz, {} required",
                e - s,
                self.window_samples(),
                self.rate,
                need
            ));
        }
        if !self.freq.is_finite() {
            return bad("freq must be finite".into());
        }
        Ok(())
    }

    /// Window offered to a request answered at `now`.
    pub fn window_for_request(&self, now: f64) -> (f64, f64) {
        let (s, e) = self.window;
        let start = s.max(now + self.reply_lead);
        (start, start + (e - s))
    }

    /// Samples taken at `start_t + i/rate` inside the window.
    pub fn window_samples(&self) -> usize {
        window_samples(self.window, self.rate)
    }
}

pub fn window_samples(window: (f64, f64), rate: f64) -> usize {
    let span = (window.1 - window.0) * rate;
    if span <= 0.0 {
        0
    } else {
        (span - 1e-9).ceil() as usize
    }
}

/// True iff the commitment arrived within `epsilon` of the verifier's last
/// sample.
pub fn timing_check(t_commit: f64, t_v_last: f64, epsilon: f64) -> bool {
    t_commit - t_v_last < epsilon
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timing_check_is_strict() {
        assert!(timing_check(10.2, 10.0, 0.5));
        assert!(!timing_check(10.5, 10.0, 0.5));
        assert!(!timing_check(13.0, 10.0, 0.5));
        assert!(timing_check(9.9, 10.0, 0.5));
    }

    #[test]
    fn default_is_valid_and_fits_exactly() {
        let c = SessionConfig::default();
        c.validate().unwrap();
        assert_eq!(c.window_samples(), 4200);
        assert_eq!(c.window, (1.0, 211.0));
    }

    #[test]
    fn epsilon_must_be_small_against_delta_t() {
        let c = SessionConfig {
            epsilon: 0.8,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("delta_t/4"));
        let c = SessionConfig {
            epsilon: 0.75,
            ..Default::default()
        };
        c.validate().unwrap();
    }

    #[test]
    fn short_window_is_rejected() {
        let c = SessionConfig {
            window: (0.0, 209.9),
            ..Default::default()
        };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("4200 required"), "{msg}");
    }

    #[test]
    fn late_requests_shift_the_window() {
        let c = SessionConfig::default();
        assert_eq!(c.window_for_request(0.02), (1.0, 211.0));
        assert_eq!(c.window_for_request(3.5), (4.0, 214.0));
    }

    #[test]
    fn sync_bound_below_epsilon() {
        let c = SessionConfig {
            sync_error_bound: 0.5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_roundtrip() {
        let c = SessionConfig::default();
        let back: SessionConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
