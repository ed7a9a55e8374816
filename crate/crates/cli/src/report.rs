//! CSV and JSON rendering of reports, and atomic file output.
//!
//! CSV: UTF-8, LF line endings, reals with exactly six decimals.
//! JSON: the report's fields at top level plus `schema_version`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ebdnn::experiments::{ContractionReport, CoverageReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const COVERAGE_HEADER: &str = "n,norm,inflation,coverage,mean_dist,sd_dist,mean_radius,sd_radius,reps_used,failures";
pub const CONTRACTION_HEADER: &str = "n,mean_l2_dist,sd_l2_dist,mean_l2_radius,reps_used,failures";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    report: T,
}

/// Six-decimal fixed point; negative zero prints as zero.
pub fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

pub fn coverage_csv(report: &CoverageReport) -> String {
    let mut out = String::from(COVERAGE_HEADER);
    out.push('\n');
    for c in &report.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            c.n,
            c.norm.label(),
            c.inflation.label(),
            fmt6(c.coverage),
            fmt6(c.mean_dist),
            fmt6(c.sd_dist),
            fmt6(c.mean_radius),
            fmt6(c.sd_radius),
            c.reps_used,
            c.failures
        )
        .unwrap();
    }
    out
}

pub fn contraction_csv(report: &ContractionReport) -> String {
    let mut out = String::from(CONTRACTION_HEADER);
    out.push('\n');
    for p in &report.points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.n,
            fmt6(p.mean_l2_dist),
            fmt6(p.sd_l2_dist),
            fmt6(p.mean_l2_radius),
            p.reps_used,
            p.failures
        )
        .unwrap();
    }
    out
}

/// Columnar CSV from named columns of equal length.
pub fn columns_csv(columns: &[(String, Vec<f64>)]) -> String {
    let mut out = columns.iter().map(|(name, _)| name.as_str()).collect::<Vec<_>>().join(",");
    out.push('\n');
    let rows = columns.first().map_or(0, |c| c.1.len());
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|(_, v)| fmt6(v[i])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn to_json<T: Serialize>(report: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(&Versioned { schema_version: SCHEMA_VERSION, report })
        .map_err(|e| CliError::Usage(format!("cannot serialize report: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let v: Versioned<T> = serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: "<report>".into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if v.schema_version != SCHEMA_VERSION {
        return Err(CliError::Invalid {
            field: "schema_version".into(),
            reason: format!("expected {SCHEMA_VERSION}, found {}", v.schema_version),
        });
    }
    Ok(v.report)
}

/// Writes every `(file name, contents)` pair into `out_dir` through a
/// temporary file and a rename. Nothing is written until all contents exist.
pub fn write_files(out_dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let target = out_dir.join(name);
        let mut tmp = tempfile::Builder::new()
            .prefix(&format!(".{name}."))
            .tempfile_in(out_dir)
            .map_err(|e| CliError::io(out_dir, e))?;
        tmp.write_all(contents.as_bytes()).map_err(|e| CliError::io(tmp.path(), e))?;
        tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
        tmp.persist(&target).map_err(|e| CliError::io(&target, e.error))?;
        written.push(target);
    }
    Ok(written)
}
