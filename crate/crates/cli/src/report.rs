//! Serializable report documents. Nothing here carries a wall-clock time, so
//! identical inputs produce identical bytes; timestamps live in the manifest.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use wfbt_core::analytics::{
    Attribution, BootstrapResult, CapacityResult, PerfSummary, PeriodRow, RegressionResult, ScaledReport, SpaResult,
};
use wfbt_core::walkforward::{RunVariant, StressCell, Window};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataInfo {
    pub rows: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub calendar: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowInfo {
    pub window: Window,
    pub params_hash: String,
    pub lambda_ema: f64,
    pub omega: f64,
    pub f_star: f64,
    pub oos_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSummary {
    pub window: Window,
    pub summary: Option<PerfSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    /// Where the unit-notional moments came from: `config` or `last_train_window`.
    pub moments_source: String,
    pub l_max: f64,
    pub aum_max: Option<f64>,
    pub detail: Option<CapacityResult>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema_version: u32,
    pub config_hash: String,
    pub data: DataInfo,
    pub variant: RunVariant,
    pub windows: Vec<WindowInfo>,
    pub stitched: bool,
    pub oos_days: usize,
    pub summary: Option<PerfSummary>,
    pub expectancy_annualized: Option<f64>,
    pub regression: Option<RegressionResult>,
    pub bootstrap: Option<BootstrapResult>,
    pub vol_scaled: Option<ScaledReport>,
    pub attribution: Option<Attribution>,
    pub yearly: Vec<PeriodRow>,
    pub slices: Vec<SliceSummary>,
    pub capacity: Option<CapacityReport>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaCandidate {
    pub index: usize,
    pub lambda_ema: f64,
    pub momentum_window: usize,
    pub activation_threshold: f64,
    pub sharpe: Option<f64>,
    pub ann_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub benchmark: String,
    pub result: SpaResult,
    pub candidates: Vec<SpaCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub cells: Vec<StressCell>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_stress_csv(path: &Path, cells: &[StressCell]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record([
        "group", "variant", "cost_multiplier", "impact_multiplier", "latency", "reversed", "ablation", "sharpe",
        "ann_return", "ann_vol", "max_drawdown", "entries", "active_days", "mean_abs_turnover",
    ])
    .map_err(io)?;
    for c in cells {
        let s = &c.summary;
        w.write_record([
            c.group.clone(),
            c.label.clone(),
            c.variant.cost_multiplier.to_string(),
            c.variant.impact_multiplier.to_string(),
            c.variant.latency.label(),
            c.variant.reversed.to_string(),
            c.variant.ablation.as_str().to_string(),
            opt(s.sharpe),
            s.ann_return.to_string(),
            s.ann_vol.to_string(),
            s.max_drawdown.to_string(),
            s.entries.to_string(),
            s.active_days.to_string(),
            s.mean_abs_turnover.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn write_curve_csv(path: &Path, curve: &[(f64, f64)]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["participation", "growth"]).map_err(io)?;
    for (l, g) in curve {
        w.write_record([l.to_string(), g.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}
