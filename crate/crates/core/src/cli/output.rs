//! CSV tables, run manifests and validation reports.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RawConfig;
use super::CliError;
use crate::allocation::Allocator;
use crate::montecarlo::{Metrics, SweepResult, SweepRow};
use crate::scenario::watts_to_dbm;

pub const METRICS_FILE: &str = "metrics.csv";
pub const POWERS_FILE: &str = "powers.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const REPORT_FILE: &str = "report.json";

/// Seventeen significant digits: enough to recover any `f64` exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MetricsRecord {
    d_m: String,
    allocator: String,
    mean_gain: String,
    se_gain: String,
    mean_rate_bps_hz: String,
    se_rate: String,
    closed_form_gain: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PowerRecord {
    d_m: String,
    allocator: String,
    ris_index: usize,
    pilot_power_w: String,
    pilot_power_dbm: String,
}

/// One metrics CSV row after parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub d_m: f64,
    pub allocator: Allocator,
    pub mean_gain: f64,
    pub se_gain: f64,
    pub mean_rate: f64,
    pub se_rate: f64,
    pub closed_form_gain: f64,
}

impl From<&SweepRow> for MetricsRow {
    fn from(r: &SweepRow) -> Self {
        MetricsRow {
            d_m: r.d_m,
            allocator: r.allocator,
            mean_gain: r.metrics.mean_gain,
            se_gain: r.metrics.se_gain,
            mean_rate: r.metrics.mean_rate,
            se_rate: r.metrics.se_rate,
            closed_form_gain: r.closed_form_gain,
        }
    }
}

/// One powers CSV row after parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub d_m: f64,
    pub allocator: Allocator,
    pub ris_index: usize,
    pub pilot_power_w: f64,
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn metrics_csv(result: &SweepResult) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &result.rows {
        let m: &Metrics = &r.metrics;
        w.serialize(MetricsRecord {
            d_m: fmt_f64(r.d_m),
            allocator: r.allocator.id().into(),
            mean_gain: fmt_f64(m.mean_gain),
            se_gain: fmt_f64(m.se_gain),
            mean_rate_bps_hz: fmt_f64(m.mean_rate),
            se_rate: fmt_f64(m.se_rate),
            closed_form_gain: fmt_f64(r.closed_form_gain),
        })
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn powers_csv(result: &SweepResult) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &result.rows {
        for (k, &p) in r.powers.iter().enumerate() {
            w.serialize(PowerRecord {
                d_m: fmt_f64(r.d_m),
                allocator: r.allocator.id().into(),
                ris_index: k,
                pilot_power_w: fmt_f64(p),
                pilot_power_dbm: fmt_f64(watts_to_dbm(p)),
            })
            .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn num(path: &Path, field: &str, s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| csv_error(path, format!("{field}: '{s}' is not a number")))
}

fn alloc_id(path: &Path, s: &str) -> Result<Allocator, CliError> {
    s.parse().map_err(|m: String| csv_error(path, m))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize::<MetricsRecord>()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            Ok(MetricsRow {
                d_m: num(path, "d_m", &rec.d_m)?,
                allocator: alloc_id(path, &rec.allocator)?,
                mean_gain: num(path, "mean_gain", &rec.mean_gain)?,
                se_gain: num(path, "se_gain", &rec.se_gain)?,
                mean_rate: num(path, "mean_rate_bps_hz", &rec.mean_rate_bps_hz)?,
                se_rate: num(path, "se_rate", &rec.se_rate)?,
                closed_form_gain: num(path, "closed_form_gain", &rec.closed_form_gain)?,
            })
        })
        .collect()
}

pub fn read_powers_csv(path: &Path) -> Result<Vec<PowerRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize::<PowerRecord>()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            Ok(PowerRow {
                d_m: num(path, "d_m", &rec.d_m)?,
                allocator: alloc_id(path, &rec.allocator)?,
                ris_index: rec.ris_index,
                pilot_power_w: num(path, "pilot_power_w", &rec.pilot_power_w)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: String,
    pub version: String,
    pub seed: super::config::Seed,
    pub duration_s: f64,
}

/// Everything needed to rerun a command: metadata plus the resolved config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run: RunInfo,
    pub config: RawConfig,
}

impl RunManifest {
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid manifest: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Too few trials for the tolerance to be meaningful.
    Inconclusive,
    /// The check does not apply to this configuration.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub expected: f64,
    pub observed: f64,
    pub standard_error: f64,
    pub abs_error: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub command: String,
    pub seed: u64,
    pub trials: u64,
    pub status: CheckStatus,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn new(seed: u64, trials: u64, checks: Vec<CheckResult>) -> Self {
        let status = if checks.iter().any(|c| c.status == CheckStatus::Fail) {
            CheckStatus::Fail
        } else if checks.iter().any(|c| c.status == CheckStatus::Inconclusive) {
            CheckStatus::Inconclusive
        } else {
            CheckStatus::Pass
        };
        ValidationReport {
            command: "validate".into(),
            seed,
            trials,
            status,
            checks,
        }
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))
    }
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let mut f =
        fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(bytes)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
