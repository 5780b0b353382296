//! `report.json`, `metadata.json` and CSV writers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use triform::ControlAffineSystem;

use crate::config::RunConfig;
use crate::error::CliError;

/// Bumped whenever a field of `report.json` changes meaning or moves.
pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Info,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    /// What was checked, in words.
    pub check: String,
    /// The object checked, e.g. `H_3` or `g3`.
    pub subject: String,
    pub status: Status,
    pub detail: String,
}

impl Verdict {
    pub fn new(check: impl Into<String>, subject: impl Into<String>, status: Status, detail: impl Into<String>) -> Self {
        Self { check: check.into(), subject: subject.into(), status, detail: detail.into() }
    }

    pub fn pass_if(ok: bool, check: impl Into<String>, subject: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::new(check, subject, if ok { Status::Pass } else { Status::Fail }, detail)
    }
}

#[derive(Serialize)]
pub struct Provenance<'a> {
    pub tool_version: &'static str,
    pub system_name: &'a str,
    pub system_hash: String,
    pub system_text: String,
    pub config_hash: String,
    pub config: &'a RunConfig,
}

impl<'a> Provenance<'a> {
    pub fn new(sys: &'a ControlAffineSystem, cfg: &'a RunConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            system_name: &sys.name,
            system_hash: sys.hash(),
            system_text: sys.to_text(),
            config_hash: cfg.hash(),
            config: cfg,
        }
    }
}

#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub report_version: u32,
    pub command: &'static str,
    pub provenance: Provenance<'a>,
    pub verdicts: Vec<Verdict>,
    pub results: T,
}

/// Output directory plus a clock for `metadata.json`.
pub struct Output {
    pub dir: PathBuf,
    started: SystemTime,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), started: SystemTime::now() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_report<T: Serialize>(&self, report: &Report<'_, T>) -> Result<PathBuf, CliError> {
        self.write_json("report.json", report)
    }

    /// Header plus rows of already formatted cells.
    pub fn write_csv(&self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", p.display()));
        let mut w = csv::Writer::from_path(&p).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(&r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        Ok(p)
    }

    /// Timing lives here so that `report.json` stays byte-identical across runs.
    pub fn write_metadata(&self, command: &str) -> Result<PathBuf, CliError> {
        let started = self.started.duration_since(UNIX_EPOCH).unwrap_or(Duration::ZERO);
        let elapsed = self.started.elapsed().unwrap_or(Duration::ZERO);
        let meta = serde_json::json!({
            "command": command,
            "started_unix_seconds": started.as_secs_f64(),
            "elapsed_seconds": elapsed.as_secs_f64(),
        });
        self.write_json("metadata.json", &meta)
    }
}

/// Writes to stdout; a closed pipe is not an error.
pub fn print_text(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

/// One line per verdict.
pub fn print_verdicts(verdicts: &[Verdict]) {
    let mut text = String::new();
    for v in verdicts {
        let tag = match v.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        };
        text.push_str(&format!("{tag:<4} {:<10} {}: {}\n", v.subject, v.check, v.detail));
    }
    print_text(&text);
}

/// Shortest round-trip text of a float; empty for NaN.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn nums(v: &[f64]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|&a| num(a))
}

/// `prefix1..prefixN`.
pub fn columns(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |k| format!("{prefix}{k}"))
}
