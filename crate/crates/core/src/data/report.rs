//! Flat result tables, one row per (architecture, method, image).
//!
//! Columns (schema version 1):
//!
//! | column | meaning |
//! |---|---|
//! | `schema_version` | always 1 |
//! | `architecture` | catalog name or `custom` |
//! | `method` | `rgap`, `hybrid`, `dlg` or `cosinetv` |
//! | `image_index`, `label` | target image and its class |
//! | `status`, `error` | `ok`, or `error` with the message |
//! | `mse`, `psnr` | against the target; empty on error |
//! | `c_metric`, `c_metric_rounded`, `c_metric_truncated` | security score of the architecture |
//! | `rd` | per-conv-layer rank deficiencies, `;`-separated |
//! | `seed` | run seed |
//! | `iterations` | optimiser updates |
//! | `wall_time_secs` | run time |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attack::{Method, ReconstructionReport};
use crate::error::{Error, Result};
use crate::metrics::SecurityAudit;

pub const SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: [&str; 16] = [
    "schema_version",
    "architecture",
    "method",
    "image_index",
    "label",
    "status",
    "error",
    "mse",
    "psnr",
    "c_metric",
    "c_metric_rounded",
    "c_metric_truncated",
    "rd",
    "seed",
    "iterations",
    "wall_time_secs",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown report format `{other}`; valid: csv, json"))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

/// One attack run as the harness saw it.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub architecture: String,
    pub image_index: usize,
    pub label: usize,
    pub method: Method,
    pub seed: u64,
    pub result: std::result::Result<ReconstructionReport, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchitectureAudit {
    pub architecture: String,
    pub audit: SecurityAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub schema_version: u32,
    pub architecture: String,
    pub method: Method,
    pub image_index: usize,
    pub label: usize,
    pub status: String,
    pub error: Option<String>,
    pub mse: Option<f64>,
    pub psnr: Option<f64>,
    pub c_metric: Option<f64>,
    pub c_metric_rounded: Option<i64>,
    pub c_metric_truncated: Option<i64>,
    pub rd: String,
    pub seed: u64,
    pub iterations: usize,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonReport {
    pub schema_version: u32,
    pub rows: Vec<ReportRow>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Joins runs with their architecture's audit.
pub fn report_rows(runs: &[RunOutcome], audits: &[ArchitectureAudit]) -> Vec<ReportRow> {
    runs.iter()
        .map(|run| {
            let audit = audits.iter().find(|a| a.architecture == run.architecture).map(|a| &a.audit);
            let score = run.result.as_ref().ok().and_then(|r| r.score);
            ReportRow {
                schema_version: SCHEMA_VERSION,
                architecture: run.architecture.clone(),
                method: run.method,
                image_index: run.image_index,
                label: run.label,
                status: if run.result.is_ok() { "ok" } else { "error" }.into(),
                error: run.result.as_ref().err().cloned(),
                mse: score.and_then(|s| finite(s.mse)),
                psnr: score.and_then(|s| finite(s.psnr)),
                c_metric: audit.map(|a| a.c_metric.exact),
                c_metric_rounded: audit.map(|a| a.c_metric.rounded),
                c_metric_truncated: audit.map(|a| a.c_metric.truncated),
                rd: audit
                    .map(|a| a.deficiencies().iter().map(i64::to_string).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default(),
                seed: run.seed,
                iterations: run.result.as_ref().map(|r| r.iterations).unwrap_or(0),
                wall_time_secs: run.result.as_ref().map(|r| r.wall_time_secs).unwrap_or(0.0),
            }
        })
        .collect()
}

/// Writes the joined rows as CSV or JSON.
pub fn write_report(
    runs: &[RunOutcome],
    audits: &[ArchitectureAudit],
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    write_rows(&report_rows(runs, audits), path, format)
}

pub fn write_rows(rows: &[ReportRow], path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            w.write_record(COLUMNS)?;
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            let mut file = file;
            let doc = JsonReport {
                schema_version: SCHEMA_VERSION,
                rows: rows.to_vec(),
            };
            serde_json::to_writer_pretty(&mut file, &doc)?;
            file.write_all(b"\n")?;
            file.flush()?;
        }
    }
    Ok(())
}

pub fn read_csv_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn read_json_report(path: impl AsRef<Path>) -> Result<JsonReport> {
    let doc: JsonReport = serde_json::from_reader(File::open(path)?)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "report schema {} is not supported",
            doc.schema_version
        )));
    }
    Ok(doc)
}
