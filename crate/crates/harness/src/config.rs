//! Experiment configuration: JSON schema, defaults and up-front validation.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Validation errors carry the line of the offending key when it can
//! be located in the source text.

use std::path::{Path, PathBuf};

use pof_core::io::read_route;
use pof_core::verify::PofParams;
use pof_protocol::SessionConfig;
use pof_sim::{Scenario, World, WorldConfig};
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub world: WorldConfig,
    /// Route CSV (`t_s,x_m,y_m`) whose points replace `world.path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route_file: Option<PathBuf>,
    #[serde(default)]
    pub session: SessionConfig,
    /// Verification tuple; falls back to `session.params`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsSource>,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub seeds: SeedSpec,
    /// Base seed for tuning splits and training material.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSpec>,
    #[serde(default)]
    pub sweep: SweepSpec,
}

/// Where the verification tuple comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    untagged,
    expecting = "params must be {N, M, K, tau, alpha}, {\"tuned\": <file>} or {\"tune\": true}"
)]
pub enum ParamsSource {
    Explicit(PofParams),
    /// A file written by `pof tune` (or any JSON holding `N, M, K, tau, alpha`).
    Tuned { tuned: PathBuf },
    /// Tune on the `training` section before running.
    Tune { tune: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, expecting = "seeds must be a list of integers or {\"from\": <int>, \"count\": <int>}")]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { from: u64, count: usize },
}

impl Default for SeedSpec {
    fn default() -> Self {
        Self::Range { from: 0, count: 10 }
    }
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { from, count } => (0..*count as u64).map(|i| from + i).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Legit,
    Adversary,
}

/// A recorded verifier/candidate trace pair with its class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledTraces {
    pub label: Label,
    pub verifier: PathBuf,
    pub candidate: PathBuf,
}

/// Training pairs drawn from the simulated world at constant gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatedTraining {
    pub legit_gaps: (f64, f64),
    pub adversary_gaps: (f64, f64),
    pub per_class: usize,
}

impl Default for SimulatedTraining {
    fn default() -> Self {
        Self {
            legit_gaps: (11.0, 20.0),
            adversary_gaps: (90.0, 150.0),
            per_class: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSpec {
    pub pairs: Vec<LabeledTraces>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulated: Option<SimulatedTraining>,
    pub k_max: usize,
    /// Share of each class used for training; the rest is held out.
    pub train_fraction: f64,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            pairs: Vec::new(),
            simulated: None,
            k_max: pof_core::verify::DEFAULT_K_MAX,
            train_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub grid: Vec<f64>,
    /// Following distance for delta-t and K sweeps (m).
    pub gap: f64,
    /// Replay lead of the remote candidate in K sweeps (s).
    pub remote_lead: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            grid: Vec::new(),
            gap: 15.0,
            remote_lead: 3600.0,
        }
    }
}

/// A parsed and validated config together with its source.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub raw: ExperimentConfig,
    /// World with `route_file` applied.
    pub world: WorldConfig,
    pub seeds: Vec<u64>,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(path, format!("cannot read config: {e}")))?;
        Self::from_text(path, text)
    }

    /// Parses `text` as if read from `path`.
    pub fn from_text(path: &Path, text: String) -> Result<Self> {
        let raw: ExperimentConfig = serde_json::from_str(&text).map_err(|e| HarnessError::Config {
            path: path.to_path_buf(),
            line: Some(e.line()),
            column: Some(e.column()),
            msg: e.to_string(),
        })?;
        let mut cfg = Self {
            path: path.to_path_buf(),
            text,
            world: raw.world.clone(),
            seeds: raw.seeds.seeds(),
            raw,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Error anchored at the first occurrence of `"key"` in the source.
    pub fn error_at(&self, key: &str, msg: impl Into<String>) -> HarnessError {
        self.error_at_nth(key, 0, msg)
    }

    fn error_at_nth(&self, key: &str, nth: usize, msg: impl Into<String>) -> HarnessError {
        HarnessError::Config {
            path: self.path.clone(),
            line: key_line(&self.text, key, nth),
            column: None,
            msg: msg.into(),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new("")).join(p)
        }
    }

    fn require_file(&self, key: &str, p: &Path, what: &str) -> Result<PathBuf> {
        let full = self.resolve(p);
        if !full.is_file() {
            return Err(self.error_at(key, format!("{what} not found: {}", full.display())));
        }
        Ok(full)
    }

    fn validate(&mut self) -> Result<()> {
        if let Some(route) = self.raw.route_file.clone() {
            let full = self.require_file("route_file", &route, "route file")?;
            let r = read_route(&full)?;
            self.world.path = r.points().iter().map(|p| p.pos).collect();
        }
        self.world.validate().map_err(|e| self.error_at("world", e.to_string()))?;
        World::new(self.world.clone(), 0).map_err(|e| self.error_at("world", e.to_string()))?;
        self.raw.session.validate().map_err(|e| self.error_at("session", e.to_string()))?;
        if (self.raw.session.rate - self.world.rate).abs() > 1e-9 {
            return Err(self.error_at(
                "rate",
                format!("session rate {} Hz differs from world rate {} Hz", self.raw.session.rate, self.world.rate),
            ));
        }
        match &self.raw.params {
            Some(ParamsSource::Explicit(p)) => p.validate().map_err(|e| self.error_at("params", e.to_string()))?,
            Some(ParamsSource::Tuned { tuned }) => {
                let full = self.require_file("tuned", tuned, "tuned-params file")?;
                load_params(&full)?;
            }
            Some(ParamsSource::Tune { tune: true }) if self.raw.training.is_none() => {
                return Err(self.error_at("tune", "`tune: true` needs a `training` section"));
            }
            _ => {}
        }
        if let SeedSpec::List(v) = &self.raw.seeds {
            if v.is_empty() {
                return Err(self.error_at("seeds", "seed list is empty"));
            }
        }
        if self.seeds.is_empty() {
            return Err(self.error_at("seeds", "seed range is empty"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for (i, s) in self.raw.scenarios.iter().enumerate() {
            let here = |msg: String| self.error_at_nth("kind", i + self.kinds_before_scenarios(), msg);
            s.validate(&self.world).map_err(|e| here(format!("scenario {i}: {e}")))?;
            if !labels.insert(s.label()) {
                return Err(here(format!("duplicate scenario name `{}`", s.label())));
            }
        }
        if let Some(t) = &self.raw.training {
            self.validate_training(t)?;
        }
        Ok(())
    }

    // `"kind"` keys appearing before the scenario list, e.g. inside `world`.
    fn kinds_before_scenarios(&self) -> usize {
        let Some(at) = self.text.find("\"scenarios\"") else {
            return 0;
        };
        self.text[..at].matches("\"kind\"").count()
    }

    fn validate_training(&self, t: &TrainingSpec) -> Result<()> {
        if t.pairs.is_empty() && t.simulated.is_none() {
            return Err(self.error_at("training", "training needs `pairs` or `simulated`"));
        }
        if t.k_max == 0 {
            return Err(self.error_at("k_max", "k_max must be at least 1"));
        }
        if !(t.train_fraction > 0.0 && t.train_fraction <= 1.0) {
            return Err(self.error_at("train_fraction", "train_fraction must lie in (0, 1]"));
        }
        for p in &t.pairs {
            self.require_file("verifier", &p.verifier, "trace file")?;
            self.require_file("candidate", &p.candidate, "trace file")?;
        }
        if let Some(s) = &t.simulated {
            if s.per_class == 0 {
                return Err(self.error_at("per_class", "per_class must be at least 1"));
            }
            for (name, (lo, hi)) in [("legit_gaps", s.legit_gaps), ("adversary_gaps", s.adversary_gaps)] {
                if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(self.error_at(name, format!("{name} must be an ordered pair of distances")));
                }
            }
        }
        Ok(())
    }

    /// The verification tuple, tuning first if the config asks for it.
    pub fn params(&self, seed: u64) -> Result<PofParams> {
        match &self.raw.params {
            Some(ParamsSource::Explicit(p)) => Ok(*p),
            Some(ParamsSource::Tuned { tuned }) => load_params(&self.resolve(tuned)),
            Some(ParamsSource::Tune { tune: true }) => Ok(crate::tune::tune(self, seed)?.params()),
            _ => Ok(self.raw.session.params),
        }
    }

    /// Session config whose window holds exactly `(K+1)·N/2` samples of
    /// `params`.
    pub fn session(&self, params: PofParams) -> SessionConfig {
        session_for(&self.raw.session, params)
    }
}

pub fn session_for(base: &SessionConfig, params: PofParams) -> SessionConfig {
    let mut s = base.clone();
    s.params = params;
    let start = s.window.0;
    s.window = (start, start + params.duration_secs(s.rate));
    s
}

/// Reads `N, M, K, tau, alpha` from a JSON file; extra fields are ignored.
pub fn load_params(path: &Path) -> Result<PofParams> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::config(path, e.to_string()))?;
    let p: PofParams = serde_json::from_str(&text).map_err(|e| HarnessError::Config {
        path: path.to_path_buf(),
        line: Some(e.line()),
        column: Some(e.column()),
        msg: e.to_string(),
    })?;
    p.validate().map_err(|e| HarnessError::config(path, e.to_string()))?;
    Ok(p)
}

/// 1-based line of the `nth` occurrence of `"key"` in `text`.
fn key_line(text: &str, key: &str, nth: usize) -> Option<usize> {
    let needle = format!("\"{key}\"");
    let (at, _) = text.match_indices(&needle).nth(nth)?;
    Some(text[..at].matches('\n').count() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<LoadedConfig> {
        LoadedConfig::from_text(Path::new("cfg.json"), text.to_string())
    }

    #[test]
    fn empty_object_takes_defaults() {
        let c = load("{}").unwrap();
        assert_eq!(c.seeds, (0..10).collect::<Vec<_>>());
        assert_eq!(c.params(0).unwrap(), PofParams::default());
    }

    #[test]
    fn syntax_error_has_line_and_column() {
        let e = load("{\n  \"seeds\": [1,\n  2,,]\n}").unwrap_err();
        match e {
            HarnessError::Config { line, column, .. } => {
                assert_eq!(line, Some(3));
                assert!(column.is_some());
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_field_is_rejected() {
        let e = load("{\"sedes\": [1]}").unwrap_err();
        assert!(e.to_string().contains("unknown field"), "{e}");
        assert_eq!(e.exit_code(), crate::EXIT_CONFIG);
    }

    #[test]
    fn semantic_error_is_anchored_to_key() {
        let text = "{\n  \"scenarios\": [\n    {\"kind\": \"legit\"},\n    {\"kind\": \"partially-following\", \"theta\": 2}\n  ]\n}";
        match load(text).unwrap_err() {
            HarnessError::Config { line, msg, .. } => {
                assert_eq!(line, Some(4), "{msg}");
                assert!(msg.contains("scenario 1"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn duplicate_scenario_names_are_rejected() {
        let e = load(r#"{"scenarios": [{"kind": "legit"}, {"kind": "legit"}]}"#).unwrap_err();
        assert!(e.to_string().contains("duplicate"), "{e}");
    }

    #[test]
    fn missing_route_file_names_path() {
        let e = load(r#"{"route_file": "no/such/road.csv"}"#).unwrap_err();
        assert_eq!(e.exit_code(), crate::EXIT_CONFIG);
        assert!(e.to_string().contains("no/such/road.csv"), "{e}");
    }

    #[test]
    fn seed_forms() {
        assert_eq!(load(r#"{"seeds": [5, 7]}"#).unwrap().seeds, vec![5, 7]);
        assert_eq!(load(r#"{"seeds": {"from": 3, "count": 2}}"#).unwrap().seeds, vec![3, 4]);
        assert!(load(r#"{"seeds": []}"#).is_err());
        assert!(load(r#"{"seeds": "x"}"#).unwrap_err().to_string().contains("seeds must be"));
    }

    #[test]
    fn session_window_follows_params() {
        let p = PofParams { k: 40, ..PofParams::default() };
        let s = session_for(&SessionConfig::default(), p);
        assert_eq!(s.window_samples(), p.required_samples());
        s.validate().unwrap();
    }

    #[test]
    fn tune_directive_needs_training() {
        assert!(load(r#"{"params": {"tune": true}}"#).is_err());
    }
}
