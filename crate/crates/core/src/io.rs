//! File formats: route CSV (`t_s,x_m,y_m`) and RSS trace CSV (`t_s,rss_db`)
//! with a sidecar JSON `{rate_hz, vehicle_id, start_t_s}` next to it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{RssSample, RssTrace};
use crate::kinematics::{Point, Route, RoutePoint};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}: row {row}: {msg}")]
    Row { path: PathBuf, row: usize, msg: String },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub rate_hz: f64,
    pub vehicle_id: String,
    pub start_t_s: f64,
}

/// Sidecar path for a trace CSV: same stem, `.json` extension.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    t_s: f64,
    rss_db: f64,
}

#[derive(Serialize, Deserialize)]
struct RouteRow {
    t_s: f64,
    x_m: f64,
    y_m: f64,
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<(), IoError> {
    let header = rdr.headers().map_err(|e| IoError::Row {
        path: path.to_path_buf(),
        row: 1,
        msg: e.to_string(),
    })?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(IoError::Row {
            path: path.to_path_buf(),
            row: 1,
            msg: format!("expected header `{}`, got `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn read_rows<R: for<'de> Deserialize<'de>>(path: &Path, expected: &[&str]) -> Result<Vec<R>, IoError> {
    let file = File::open(path).map_err(file_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    check_header(path, &mut rdr, expected)?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            // row 1 is the header
            r.map_err(|e| IoError::Row { path: path.to_path_buf(), row: i + 2, msg: e.to_string() })
        })
        .collect()
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<(), IoError> {
    let file = File::create(path).map_err(file_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r).map_err(|e| IoError::Format { path: path.to_path_buf(), msg: e.to_string() })?;
    }
    w.flush().map_err(file_err(path))
}

pub fn write_trace(trace: &RssTrace, csv_path: &Path) -> Result<(), IoError> {
    write_rows(csv_path, trace.samples().iter().map(|s| TraceRow { t_s: s.t, rss_db: s.rss }))?;
    let meta = TraceMeta {
        rate_hz: trace.rate(),
        vehicle_id: trace.vehicle_id().to_string(),
        start_t_s: trace.start().unwrap_or(0.0),
    };
    let side = sidecar_path(csv_path);
    let mut f = BufWriter::new(File::create(&side).map_err(file_err(&side))?);
    serde_json::to_writer_pretty(&mut f, &meta)
        .map_err(|e| IoError::Format { path: side.clone(), msg: e.to_string() })?;
    writeln!(f).and_then(|_| f.flush()).map_err(file_err(&side))
}

pub fn read_trace_meta(csv_path: &Path) -> Result<TraceMeta, IoError> {
    let side = sidecar_path(csv_path);
    let f = File::open(&side).map_err(file_err(&side))?;
    serde_json::from_reader(f).map_err(|e| IoError::Format { path: side, msg: e.to_string() })
}

/// Reads a trace CSV and its sidecar. Row numbers in errors are 1-based
/// file lines.
pub fn read_trace(csv_path: &Path) -> Result<RssTrace, IoError> {
    let meta = read_trace_meta(csv_path)?;
    let rows: Vec<TraceRow> = read_rows(csv_path, &["t_s", "rss_db"])?;
    for (i, r) in rows.iter().enumerate() {
        let row = i + 2;
        if !(r.t_s.is_finite() && r.rss_db.is_finite()) {
            return Err(IoError::Row { path: csv_path.to_path_buf(), row, msg: "non-finite value".into() });
        }
        if i > 0 && r.t_s <= rows[i - 1].t_s {
            return Err(IoError::Row {
                path: csv_path.to_path_buf(),
                row,
                msg: format!("timestamp {} not after previous {}", r.t_s, rows[i - 1].t_s),
            });
        }
    }
    if let Some(first) = rows.first() {
        if (first.t_s - meta.start_t_s).abs() > 0.5 / meta.rate_hz {
            return Err(IoError::Row {
                path: csv_path.to_path_buf(),
                row: 2,
                msg: format!("first timestamp {} disagrees with start_t_s {}", first.t_s, meta.start_t_s),
            });
        }
    }
    let samples = rows.into_iter().map(|r| RssSample { t: r.t_s, rss: r.rss_db }).collect();
    RssTrace::new(samples, meta.rate_hz, meta.vehicle_id)
        .map_err(|e| IoError::Format { path: csv_path.to_path_buf(), msg: e.to_string() })
}

pub fn write_route(route: &Route<f64>, path: &Path) -> Result<(), IoError> {
    write_rows(path, route.points().iter().map(|p| RouteRow { t_s: p.t, x_m: p.pos.x, y_m: p.pos.y }))
}

pub fn read_route(path: &Path) -> Result<Route<f64>, IoError> {
    let rows: Vec<RouteRow> = read_rows(path, &["t_s", "x_m", "y_m"])?;
    let points = rows
        .into_iter()
        .map(|r| RoutePoint { pos: Point::new(r.x_m, r.y_m), t: r.t_s })
        .collect();
    Route::new(points).map_err(|e| IoError::Format { path: path.to_path_buf(), msg: e.to_string() })
}
