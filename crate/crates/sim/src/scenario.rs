//! What the candidate side of a run does.

use std::fmt;

use pof_protocol::Variant;
use serde::{Deserialize, Serialize};

use crate::world::{FollowPattern, WorldConfig};
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Honest candidate following the verifier.
    Legit,
    /// Candidate replays a trace recorded on the same road earlier.
    Remote,
    /// Candidate drives the same road but too far behind.
    FollowingAfar,
    /// Candidate is close for a fraction of the collection window.
    PartiallyFollowing,
    /// Adversary between a known verifier and an honest candidate.
    MitmKnown,
    /// Adversary runs two commitment sessions side by side.
    MitmParallel,
    /// Adversary runs its session with the verifier `delta_t` late.
    MitmDelayed,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        Self::Legit,
        Self::Remote,
        Self::FollowingAfar,
        Self::PartiallyFollowing,
        Self::MitmKnown,
        Self::MitmParallel,
        Self::MitmDelayed,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Legit => "legit",
            Self::Remote => "remote",
            Self::FollowingAfar => "following-afar",
            Self::PartiallyFollowing => "partially-following",
            Self::MitmKnown => "mitm-known",
            Self::MitmParallel => "mitm-parallel",
            Self::MitmDelayed => "mitm-delayed",
        }
    }

    pub fn is_mitm(&self) -> bool {
        matches!(self, Self::MitmKnown | Self::MitmParallel | Self::MitmDelayed)
    }

    /// Protocol variant the scenario runs against.
    pub fn forced_variant(&self) -> Option<Variant> {
        match self {
            Self::MitmKnown => Some(Variant::KnownVerifier),
            Self::MitmParallel | Self::MitmDelayed => Some(Variant::Commitment),
            _ => None,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the parallel-session adversary handles the honest commitment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MitmStrategy {
    /// Commit to the verifier only once the candidate has opened.
    #[default]
    CommitAfterOpen,
    /// Forward the candidate's commitment at once, open under its own id.
    ForwardCommitment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Label used in reports; defaults to the kind.
    pub name: Option<String>,
    /// Defaults to the kind's forced variant, else the commitment variant.
    pub variant: Option<Variant>,
    /// Gap behind the verifier (m): 15 for legit, 100 for following-afar.
    pub follow_distance: Option<f64>,
    /// Age of the replayed trace (s).
    pub pre_record_lead: f64,
    /// Share of the collection window spent near (partially-following).
    pub theta: f64,
    pub pattern: FollowPattern,
    /// Gap change rate limit (m/s) for the partial follower.
    pub ramp_speed: Option<f64>,
    /// Gap while near (m); also the honest candidate's gap in MiTM runs.
    pub near_distance: f64,
    /// Gap of the partial follower while far and of the MiTM adversary (m).
    pub adversary_distance: f64,
    /// Extra back-to-back verification windows after the session.
    pub continuous_windows: usize,
    pub mitm_strategy: MitmStrategy,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Legit,
            name: None,
            variant: None,
            follow_distance: None,
            pre_record_lead: 60.0,
            theta: 1.0,
            pattern: FollowPattern::Contiguous,
            ramp_speed: None,
            near_distance: 15.0,
            adversary_distance: 100.0,
            continuous_windows: 0,
            mitm_strategy: MitmStrategy::CommitAfterOpen,
        }
    }
}

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            ..Default::default()
        }
    }

    pub fn legit(gap: f64) -> Self {
        Self {
            follow_distance: Some(gap),
            ..Self::new(ScenarioKind::Legit)
        }
    }

    pub fn remote(pre_record_lead: f64) -> Self {
        Self {
            pre_record_lead,
            ..Self::new(ScenarioKind::Remote)
        }
    }

    pub fn following_afar(gap: f64) -> Self {
        Self {
            follow_distance: Some(gap),
            ..Self::new(ScenarioKind::FollowingAfar)
        }
    }

    pub fn partially_following(theta: f64) -> Self {
        Self {
            theta,
            ..Self::new(ScenarioKind::PartiallyFollowing)
        }
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        self.variant = Some(v);
        self
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn variant(&self) -> Variant {
        self.kind
            .forced_variant()
            .or(self.variant)
            .unwrap_or(Variant::Commitment)
    }

    pub fn follow_distance(&self) -> f64 {
        self.follow_distance.unwrap_or(match self.kind {
            ScenarioKind::FollowingAfar => 100.0,
            _ => 15.0,
        })
    }

    pub fn validate(&self, world: &WorldConfig) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(format!("scenario {}: {m}", self.label())));
        if let (Some(forced), Some(asked)) = (self.kind.forced_variant(), self.variant) {
            if forced != asked {
                return bad(format!("{} runs only against the {forced:?} variant", self.kind));
            }
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        let d = self.follow_distance();
        if !(d.is_finite() && d >= 0.0) {
            return bad(format!("follow_distance must be nonnegative, got {d}"));
        }
        if self.kind == ScenarioKind::FollowingAfar && d <= world.d_ref {
            return bad(format!("following-afar needs follow_distance > d_ref = {}, got {d}", world.d_ref));
        }
        if self.kind == ScenarioKind::Remote && !(self.pre_record_lead > 0.0 && self.pre_record_lead.is_finite()) {
            return bad(format!("pre_record_lead must be positive, got {}", self.pre_record_lead));
        }
        if !(self.near_distance >= 0.0 && self.near_distance <= world.d_ref) {
            return bad(format!(
                "near_distance must lie in [0, d_ref = {}], got {}",
                world.d_ref, self.near_distance
            ));
        }
        if !(self.adversary_distance > world.d_ref && self.adversary_distance.is_finite()) {
            return bad(format!(
                "adversary_distance must exceed d_ref = {}, got {}",
                world.d_ref, self.adversary_distance
            ));
        }
        if let Some(v) = self.ramp_speed {
            if !(v > 0.0) {
                return bad(format!("ramp_speed must be positive, got {v}"));
            }
        }
        if let FollowPattern::Interleaved { segments: 0 } = self.pattern {
            return bad("interleaved pattern needs at least one segment".into());
        }
        if self.continuous_windows > 0 && self.kind.is_mitm() {
            return bad("continuous windows are not modeled for MiTM scenarios".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_per_kind() {
        assert_eq!(Scenario::new(ScenarioKind::Legit).follow_distance(), 15.0);
        assert_eq!(Scenario::new(ScenarioKind::FollowingAfar).follow_distance(), 100.0);
        assert_eq!(Scenario::new(ScenarioKind::MitmKnown).variant(), Variant::KnownVerifier);
        assert_eq!(Scenario::new(ScenarioKind::MitmDelayed).variant(), Variant::Commitment);
        assert_eq!(Scenario::new(ScenarioKind::Legit).variant(), Variant::Commitment);
    }

    #[test]
    fn invariants_are_checked() {
        let w = WorldConfig::default();
        assert!(Scenario::partially_following(1.2).validate(&w).is_err());
        assert!(Scenario::partially_following(0.0).validate(&w).is_ok());
        let msg = Scenario::following_afar(20.0).validate(&w).unwrap_err().to_string();
        assert!(msg.contains("d_ref"), "{msg}");
        assert!(Scenario::following_afar(20.5).validate(&w).is_ok());
        let s = Scenario::new(ScenarioKind::MitmKnown).with_variant(Variant::Commitment);
        assert!(s.validate(&w).is_err());
    }

    #[test]
    fn json_uses_kebab_kinds() {
        let s: Scenario = serde_json::from_str(r#"{"kind": "following-afar", "follow_distance": 90}"#).unwrap();
        assert_eq!(s.kind, ScenarioKind::FollowingAfar);
        assert_eq!(s.follow_distance(), 90.0);
        assert_eq!(s.pre_record_lead, 60.0);
    }
}
