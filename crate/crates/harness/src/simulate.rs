//! `pof simulate`: scenarios × seeds, one report per run plus an aggregate
//! CSV.

use std::path::{Path, PathBuf};

use pof_sim::experiments::run_many;
use pof_sim::SimReport;
use serde::{Deserialize, Serialize};

use crate::config::LoadedConfig;
use crate::{write_file, HarnessError, Result};

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const REPORT_DIR: &str = "reports";

/// One line of `aggregate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub seed: u64,
    pub verdict: String,
    pub mean_rho: Option<f64>,
    pub passed_count: Option<usize>,
}

impl AggregateRow {
    pub fn from_report(r: &SimReport) -> Self {
        Self {
            scenario: r.scenario.clone(),
            seed: r.seed,
            verdict: r.outcome.label(),
            mean_rho: r.mean_rho(),
            passed_count: r.passed_count(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub aggregate: PathBuf,
    /// Report files in (scenario, seed) order.
    pub reports: Vec<PathBuf>,
    pub rows: Vec<AggregateRow>,
}

impl SimulateOutput {
    /// Passing rate per scenario, in config order.
    pub fn passing_rates(&self) -> Vec<(String, f64, usize)> {
        let mut out: Vec<(String, usize, usize)> = Vec::new();
        for r in &self.rows {
            if out.last().is_none_or(|(s, _, _)| *s != r.scenario) {
                out.push((r.scenario.clone(), 0, 0));
            }
            let last = out.last_mut().expect("just pushed");
            last.1 += usize::from(r.verdict == "accept");
            last.2 += 1;
        }
        out.into_iter()
            .map(|(s, a, n)| (s, a as f64 / n as f64, n))
            .collect()
    }
}

fn file_stem(label: &str, seed: u64) -> String {
    let safe: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}_seed{seed}")
}

/// Runs every scenario over every seed and writes
/// `reports/<scenario>_seed<seed>.json`, the matching transcript as
/// `.jsonl`, and `aggregate.csv` into `out`.
pub fn simulate(cfg: &LoadedConfig, out: &Path) -> Result<SimulateOutput> {
    if cfg.raw.scenarios.is_empty() {
        return Err(cfg.error_at("scenarios", "no scenarios to simulate"));
    }
    let params = cfg.params(cfg.raw.seed)?;
    let session = cfg.session(params);
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for scenario in &cfg.raw.scenarios {
        let runs = run_many(&cfg.world, scenario, &session, &cfg.seeds).map_err(HarnessError::runtime)?;
        for r in &runs {
            let stem = file_stem(&r.scenario, r.seed);
            let path = out.join(REPORT_DIR).join(format!("{stem}.json"));
            write_file(&path, (r.to_json() + "\n").as_bytes())?;
            write_file(
                &out.join(REPORT_DIR).join(format!("{stem}.jsonl")),
                r.transcript.to_jsonl().as_bytes(),
            )?;
            reports.push(path);
            rows.push(AggregateRow::from_report(r));
        }
    }
    let aggregate = out.join(AGGREGATE_FILE);
    write_file(&aggregate, &aggregate_csv(&rows)?)?;
    Ok(SimulateOutput { aggregate, reports, rows })
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(HarnessError::runtime)?;
    }
    w.into_inner().map_err(HarnessError::runtime)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
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
