//! TOML run configuration with `WFBT_` environment overrides.
//!
//! Every key is optional; omitted keys take the engine defaults. An override
//! such as `WFBT_SIGNAL__LAMBDA_EMA=0.9` sets `signal.lambda_ema` (path
//! segments separated by a double underscore). Override values are parsed as
//! TOML scalars and fall back to plain strings.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wfbt_core::market_data::ColumnSchema;
use wfbt_core::synthetic::SyntheticSpec;
use wfbt_core::walkforward::{EngineConfig, StressGrid};

use crate::CliError;

pub const ENV_PREFIX: &str = "WFBT_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub path: PathBuf,
    pub columns: ColumnSchema,
    /// Calendar label recorded in outputs.
    pub calendar: String,
    /// One `YYYY-MM-DD` per line; weekdays minus these dates form the calendar.
    pub holidays: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { path: PathBuf::from("data/synthetic.csv"), columns: ColumnSchema::default(), calendar: "weekdays".into(), holidays: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subperiod {
    pub label: String,
    pub start: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyticsConfig {
    pub bootstrap_resamples: usize,
    pub bootstrap_block: usize,
    pub spa_resamples: usize,
    pub spa_block: f64,
    pub hac_lags: usize,
    pub seed: u64,
    pub target_vol: f64,
    pub subperiods: Vec<Subperiod>,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            bootstrap_resamples: 1000,
            bootstrap_block: 20,
            spa_resamples: 800,
            spa_block: 20.0,
            hac_lags: 5,
            seed: 20_240_601,
            target_vol: 0.15,
            subperiods: vec![
                Subperiod { label: "2019+".into(), start: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap() },
                Subperiod { label: "2022+".into(), start: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap() },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapacityConfig {
    /// Unit-notional moments; the last window's training moments when absent.
    pub mu_u: Option<f64>,
    pub sigma_u: Option<f64>,
    pub adv_dollars: f64,
    /// Turnover for the AUM mapping; the backtest's mean |Δw| when absent.
    pub mean_abs_turnover: Option<f64>,
    /// Externally quoted zero-growth point to compare against.
    pub reference_l_max: Option<f64>,
    pub grid_points: usize,
    /// Grid upper bound as a multiple of the computed zero-growth point.
    pub grid_span: f64,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self {
            mu_u: None,
            sigma_u: None,
            adv_dollars: 5e10,
            mean_abs_turnover: None,
            reference_l_max: Some(2.9e-6),
            grid_points: 101,
            grid_span: 1.5,
        }
    }
}

/// Candidate grid for the superior-predictive-ability test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpaGrid {
    pub lambda_ema: Vec<f64>,
    pub momentum_window: Vec<usize>,
    pub activation_threshold: Vec<f64>,
}

impl Default for SpaGrid {
    fn default() -> Self {
        Self {
            lambda_ema: vec![0.90, 0.94, 0.97, 0.99],
            momentum_window: vec![20, 50, 100, 150],
            activation_threshold: vec![0.51, 0.52, 0.55, 0.58],
        }
    }
}

impl SpaGrid {
    pub fn len(&self) -> usize {
        self.lambda_ema.len() * self.momentum_window.len() * self.activation_threshold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(flatten)]
    pub engine: EngineConfig,
    pub analytics: AnalyticsConfig,
    pub capacity: CapacityConfig,
    pub stress: StressGrid,
    pub spa: SpaGrid,
    pub synthetic: SyntheticSpec,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            engine: EngineConfig::default(),
            analytics: AnalyticsConfig::default(),
            capacity: CapacityConfig::default(),
            stress: StressGrid::default(),
            spa: SpaGrid::default(),
            synthetic: SyntheticSpec::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `WFBT_A__B=value` pairs onto a parsed table.
pub fn apply_overrides(table: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), CliError> {
    for (key, raw) in vars {
        let Some(path) = key.strip_prefix(ENV_PREFIX) else { continue };
        let segments: Vec<String> = path.split("__").map(str::to_ascii_lowercase).collect();
        if segments.iter().any(String::is_empty) {
            return Err(CliError::Config(format!("malformed override variable {key}")));
        }
        let (last, parents) = segments.split_last().expect("nonempty");
        let mut node = &mut *table;
        for seg in parents {
            let entry = node.entry(seg.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("override {key}: {seg} is not a table")))?;
        }
        node.insert(last.clone(), parse_scalar(&raw));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self, CliError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(format!("config parse error: {e}")))?;
        apply_overrides(&mut table, vars)?;
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("config error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the file (or starts from defaults when `path` is `None`) and applies process env overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut cfg = Self::from_toml_str(&text, std::env::vars())?;
        if let Some(base) = path.and_then(Path::parent) {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        if self.data.path.is_relative() {
            self.data.path = base.join(&self.data.path);
        }
        if let Some(h) = self.data.holidays.as_mut().filter(|h| h.is_relative()) {
            *h = base.join(&*h);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.engine.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let a = &self.analytics;
        if a.bootstrap_resamples == 0 || a.bootstrap_block == 0 {
            return Err(CliError::Config("analytics.bootstrap_resamples and analytics.bootstrap_block must be positive".into()));
        }
        if a.spa_resamples == 0 || !(a.spa_block >= 1.0) {
            return Err(CliError::Config("analytics.spa_resamples must be positive and analytics.spa_block >= 1".into()));
        }
        if !(a.target_vol > 0.0) {
            return Err(CliError::Config(format!("analytics.target_vol must be positive, got {}", a.target_vol)));
        }
        let c = &self.capacity;
        if !(c.adv_dollars > 0.0) {
            return Err(CliError::Config(format!("capacity.adv_dollars must be positive, got {}", c.adv_dollars)));
        }
        if c.grid_points < 2 || !(c.grid_span > 0.0) {
            return Err(CliError::Config("capacity.grid_points must be >= 2 and capacity.grid_span positive".into()));
        }
        if let Some(s) = c.sigma_u.filter(|s| !(*s > 0.0)) {
            return Err(CliError::Config(format!("capacity.sigma_u must be positive, got {s}")));
        }
        for &l in &self.stress.latencies {
            if l > 2 {
                return Err(CliError::Config(format!("stress.latencies entries must be 0, 1 or 2, got {l}")));
            }
        }
        if self.stress.cost_multipliers.iter().chain(&self.stress.impact_multipliers).any(|m| !(*m >= 0.0)) {
            return Err(CliError::Config("stress multipliers must be nonnegative".into()));
        }
        self.synthetic.validate().map_err(CliError::Config)?;
        Ok(())
    }

    /// Stable digest of every setting that affects results. Paths are left
    /// out; the data file is identified by its checksum instead.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.data.path = PathBuf::new();
        hex::encode(Sha256::digest(serde_json::to_vec(&canonical).expect("config serializes")))
    }
}
