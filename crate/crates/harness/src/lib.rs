//! Experiment driver behind the `pof` command-line tool.
//!
//! Every command reads an [`ExperimentConfig`] (JSON), validates it up
//! front and writes CSV or JSON. Runs fan out over seeds but results are
//! always emitted in (scenario, seed) order, so reruns are byte-identical.

use std::path::PathBuf;

use thiserror::Error;

pub mod config;
pub mod offline;
pub mod simulate;
pub mod sweep;
pub mod tune;

pub use config::{ExperimentConfig, LoadedConfig, ParamsSource, SeedSpec, SweepSpec, TrainingSpec};
pub use offline::{apen, verify_trace, ApenOptions, TraceVerdict};
pub use simulate::{read_aggregate, simulate, AggregateRow, SimulateOutput};
pub use sweep::{sweep, SweepKind, SweepOutput};
pub use tune::{tune, TuneReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Unreadable or invalid input; `line`/`column` point into `path`.
    #[error("{}: {msg}", location(path, *line, *column))]
    Config {
        path: PathBuf,
        line: Option<usize>,
        column: Option<usize>,
        msg: String,
    },
    #[error("infeasible tuning: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Runtime(String),
}

fn location(path: &std::path::Path, line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!("{}:{l}:{c}", path.display()),
        (Some(l), None) => format!("{}:{l}", path.display()),
        _ => path.display().to_string(),
    }
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => EXIT_CONFIG,
            Self::Infeasible(_) => EXIT_INFEASIBLE,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub(crate) fn config(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Self::Config {
            path: path.into(),
            line: None,
            column: None,
            msg: msg.into(),
        }
    }

    pub(crate) fn runtime(e: impl std::fmt::Display) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<pof_core::io::IoError> for HarnessError {
    fn from(e: pof_core::io::IoError) -> Self {
        use pof_core::io::IoError;
        match e {
            IoError::File { path, source } => Self::config(path, source.to_string()),
            IoError::Row { path, row, msg } => Self::Config {
                path,
                line: Some(row),
                column: None,
                msg,
            },
            IoError::Format { path, msg } => Self::config(path, msg),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

/// Writes `bytes` to `path`, creating parent directories.
pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}
