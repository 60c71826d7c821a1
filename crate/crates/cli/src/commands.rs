//! Command implementations. Each writes its artifacts under the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use wfbt_core::analytics::{
    attribution, block_bootstrap_sharpe, capacity_curve, capm_regression, expectancy_annualized, linear_grid,
    perf_summary, spa_test, vol_scaling, yearly_summaries, AnalyticsError, CapacityInputs,
};
use wfbt_core::execution::{write_ledger_csv, LedgerRow};
use wfbt_core::market_data::{align_calendar, load_csv, write_csv, BusinessCalendar, PriceSeries};
use wfbt_core::signal::SignalParams;
use wfbt_core::synthetic::generate;
use wfbt_core::walkforward::{run_stress_grid, run_walk_forward, RunVariant, WalkForwardRun};

use crate::config::RunConfig;
use crate::report::*;
use crate::CliError;

pub struct LoadedData {
    pub series: PriceSeries,
    pub info: DataInfo,
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn load_data(cfg: &RunConfig) -> Result<LoadedData, CliError> {
    let path = &cfg.data.path;
    let sha256 = sha256_file(path)?;
    let raw = load_csv(path, &cfg.data.columns).map_err(|e| CliError::Data(e.to_string()))?;
    let calendar = match &cfg.data.holidays {
        Some(h) => BusinessCalendar::load_holidays(h).map_err(|e| CliError::Data(e.to_string()))?,
        None => BusinessCalendar::weekdays(),
    };
    let (Some(first), Some(last)) = (raw.first_date(), raw.last_date()) else {
        return Err(CliError::Data(format!("{} has no rows", path.display())));
    };
    let series = align_calendar(&raw, &calendar, first..=last).map_err(|e| CliError::Data(e.to_string()))?;
    let info = DataInfo {
        rows: series.len(),
        first_date: series.first_date(),
        last_date: series.last_date(),
        calendar: cfg.data.calendar.clone(),
        sha256,
    };
    Ok(LoadedData { series, info })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn run_ledger(run: &WalkForwardRun) -> Vec<LedgerRow> {
    run.stitched.clone().unwrap_or_default()
}

/// Capacity from configured moments, or from the last training window when none are given.
pub fn capacity_report(cfg: &RunConfig, run: Option<&WalkForwardRun>, turnover: Option<f64>) -> Result<CapacityReport, CliError> {
    let c = &cfg.capacity;
    let (mu_u, sigma_u, source) = match (c.mu_u, c.sigma_u) {
        (Some(m), Some(s)) => (m, s, "config"),
        _ => {
            let last = run
                .and_then(|r| r.windows.last())
                .ok_or_else(|| CliError::Config("capacity.mu_u and capacity.sigma_u are required without a backtest".into()))?;
            (last.params.moments.mu_u, last.params.moments.sigma_u, "last_train_window")
        }
    };
    let k = &cfg.engine.kelly;
    let inputs = CapacityInputs { mu_u, sigma_u, k: k.k, gamma: k.gamma, n: k.n };
    match capacity_curve(inputs, &[]) {
        Ok(first) => {
            let grid = linear_grid(first.l_max * c.grid_span, c.grid_points);
            let mut detail = capacity_curve(inputs, &grid).map_err(|e| CliError::Runtime(e.to_string()))?;
            if let Some(r) = c.reference_l_max {
                detail = detail.with_reference(r);
            }
            let turnover = c.mean_abs_turnover.or(turnover).filter(|t| *t > 0.0);
            if let Some(t) = turnover {
                detail = detail.with_aum(c.adv_dollars, t).map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            Ok(CapacityReport {
                moments_source: source.into(),
                l_max: detail.l_max,
                aum_max: detail.aum_max,
                detail: Some(detail),
                warning: None,
            })
        }
        Err(e @ AnalyticsError::NoPositiveBranch { .. }) => Ok(CapacityReport {
            moments_source: source.into(),
            l_max: 0.0,
            aum_max: Some(0.0),
            detail: None,
            warning: Some(format!("{e}; capacity set to zero")),
        }),
        Err(e) => Err(CliError::Runtime(e.to_string())),
    }
}

pub struct BacktestOutput {
    pub report: ReportBundle,
    pub run: WalkForwardRun,
    pub files: Vec<PathBuf>,
}

pub fn build_report(cfg: &RunConfig, data: &LoadedData, run: &WalkForwardRun) -> Result<ReportBundle, CliError> {
    let a = &cfg.analytics;
    let mut notes = Vec::new();
    let ledger = run_ledger(run);
    let stitched = run.stitched.is_some();
    if !stitched {
        notes.push("overlapping test slices: per-slice summaries only, no stitched curve".into());
    }
    let summary = perf_summary(&ledger).ok();
    let net: Vec<f64> = ledger.iter().map(|r| r.net_return).collect();
    let bench: Vec<f64> = ledger.iter().map(|r| r.asset_return).collect();

    let mut note_err = |what: &str, e: AnalyticsError| {
        notes.push(format!("{what} unavailable: {e}"));
    };
    let regression = if stitched {
        capm_regression(&net, &bench, a.hac_lags).map_err(|e| note_err("regression", e)).ok()
    } else {
        None
    };
    let bootstrap = if stitched {
        block_bootstrap_sharpe(&net, a.bootstrap_resamples, a.bootstrap_block, a.seed)
            .map_err(|e| note_err("bootstrap", e))
            .ok()
    } else {
        None
    };
    let vol_scaled = match (&summary, &regression) {
        (Some(s), Some(r)) => vol_scaling(s, r, a.target_vol).map_err(|e| note_err("vol scaling", e)).ok(),
        _ => None,
    };
    let subperiods: Vec<(String, chrono::NaiveDate)> = a.subperiods.iter().map(|s| (s.label.clone(), s.start)).collect();
    let attribution = if stitched { attribution(&ledger, &subperiods).ok() } else { None };
    let expectancy = summary
        .as_ref()
        .and_then(|s| s.ev_per_active_day_bps.map(|ev| expectancy_annualized(ev, s.active_days, s.days)));

    let capacity = capacity_report(cfg, Some(run), summary.as_ref().map(|s| s.mean_abs_turnover))?;
    if let Some(w) = &capacity.warning {
        notes.push(format!("capacity: {w}"));
    }
    if let Some(n) = capacity.detail.as_ref().and_then(|d| d.divergence_note.clone()) {
        notes.push(format!("capacity: {n}"));
    }

    Ok(ReportBundle {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        data: data.info.clone(),
        variant: run.variant,
        windows: run
            .windows
            .iter()
            .map(|w| WindowInfo {
                window: w.window,
                params_hash: w.params_hash.clone(),
                lambda_ema: w.params.signal.lambda_ema,
                omega: w.params.signal.omega,
                f_star: w.params.f_star,
                oos_days: w.ledger.len(),
            })
            .collect(),
        stitched,
        oos_days: if stitched { ledger.len() } else { run.windows.iter().map(|w| w.ledger.len()).sum() },
        summary,
        expectancy_annualized: expectancy,
        regression,
        bootstrap,
        vol_scaled,
        attribution,
        yearly: if stitched { yearly_summaries(&ledger) } else { Vec::new() },
        slices: run.slice_summaries().into_iter().map(|(window, summary)| SliceSummary { window, summary }).collect(),
        capacity: Some(capacity),
        notes,
    })
}

fn write_equity_csv(path: &Path, ledger: &[LedgerRow]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["date", "net_return", "equity", "drawdown"]).map_err(io)?;
    let (mut eq, mut peak) = (1.0_f64, 1.0_f64);
    for r in ledger {
        eq *= 1.0 + r.net_return;
        peak = peak.max(eq);
        w.write_record([r.date.to_string(), r.net_return.to_string(), eq.to_string(), (1.0 - eq / peak).to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

#[derive(Serialize)]
struct ManifestFile {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    generated_at: String,
    tool: String,
    command: &'a str,
    config_hash: String,
    config: &'a RunConfig,
    data_path: String,
    data_sha256: Option<String>,
    windows: Vec<serde_json::Value>,
    outputs: Vec<ManifestFile>,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    data: Option<&LoadedData>,
    run: Option<&WalkForwardRun>,
    files: &[PathBuf],
) -> Result<PathBuf, CliError> {
    let outputs = files
        .iter()
        .map(|p| {
            Ok(ManifestFile {
                path: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                sha256: sha256_file(p).map_err(|e| CliError::Runtime(e.to_string()))?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let windows = run
        .map(|r| {
            r.windows
                .iter()
                .map(|w| serde_json::json!({ "window": w.window, "params_hash": w.params_hash, "params": w.params }))
                .collect()
        })
        .unwrap_or_default();
    let manifest = Manifest {
        generated_at: chrono::Utc::now().to_rfc3339(),
        tool: format!("wfbt {}", env!("CARGO_PKG_VERSION")),
        command,
        config_hash: cfg.hash(),
        config: cfg,
        data_path: cfg.data.path.display().to_string(),
        data_sha256: data.map(|d| d.info.sha256.clone()),
        windows,
        outputs,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn cmd_backtest(cfg: &RunConfig, out: &Path) -> Result<BacktestOutput, CliError> {
    let data = load_data(cfg)?;
    let run = run_walk_forward(&data.series, &cfg.engine, &RunVariant::base(&cfg.engine))?;
    let report = build_report(cfg, &data, &run)?;
    ensure_dir(out)?;

    let mut files = Vec::new();
    let report_path = out.join("report.json");
    write_json(&report_path, &report)?;
    files.push(report_path);
    if let Some(ledger) = &run.stitched {
        let path = out.join("ledger.csv");
        let f = fs::File::create(&path).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        write_ledger_csv(ledger, f).map_err(|e| CliError::Runtime(e.to_string()))?;
        files.push(path);
        let eq = out.join("equity.csv");
        write_equity_csv(&eq, ledger)?;
        files.push(eq);
    }
    if let Some(detail) = report.capacity.as_ref().and_then(|c| c.detail.as_ref()) {
        let path = out.join("capacity_curve.csv");
        write_curve_csv(&path, &detail.curve)?;
        files.push(path);
    }
    let manifest = write_manifest(out, "backtest", cfg, Some(&data), Some(&run), &files)?;
    files.push(manifest);
    Ok(BacktestOutput { report, run, files })
}

pub fn cmd_stress(cfg: &RunConfig, out: &Path) -> Result<StressReport, CliError> {
    let data = load_data(cfg)?;
    let cells = run_stress_grid(&data.series, &cfg.engine, &cfg.stress)?;
    ensure_dir(out)?;
    let csv_path = out.join("stress.csv");
    write_stress_csv(&csv_path, &cells)?;
    let report = StressReport { schema_version: SCHEMA_VERSION, config_hash: cfg.hash(), cells };
    let json_path = out.join("stress.json");
    write_json(&json_path, &report)?;
    write_manifest(out, "stress", cfg, Some(&data), None, &[csv_path, json_path])?;
    Ok(report)
}

pub fn cmd_capacity(cfg: &RunConfig, out: &Path) -> Result<CapacityReport, CliError> {
    let (data, run) = if cfg.capacity.mu_u.is_some() && cfg.capacity.sigma_u.is_some() {
        (None, None)
    } else {
        let data = load_data(cfg)?;
        let run = run_walk_forward(&data.series, &cfg.engine, &RunVariant::base(&cfg.engine))?;
        (Some(data), Some(run))
    };
    let turnover = run
        .as_ref()
        .and_then(|r| r.stitched.as_ref())
        .and_then(|l| perf_summary(l).ok())
        .map(|s| s.mean_abs_turnover);
    let report = capacity_report(cfg, run.as_ref(), turnover)?;
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    ensure_dir(out)?;
    let json_path = out.join("capacity.json");
    write_json(&json_path, &report)?;
    let curve_path = out.join("capacity_curve.csv");
    let origin = [(0.0, 0.0)];
    write_curve_csv(&curve_path, report.detail.as_ref().map_or(&origin[..], |d| &d.curve))?;
    write_manifest(out, "capacity", cfg, data.as_ref(), run.as_ref(), &[json_path, curve_path])?;
    Ok(report)
}

pub fn cmd_spa(cfg: &RunConfig, out: &Path) -> Result<SpaReport, CliError> {
    let g = &cfg.spa;
    if g.len() < 2 {
        return Err(CliError::Config(format!("spa grid expands to {} configs; need at least 2", g.len())));
    }
    if cfg.engine.window.overlapping() {
        return Err(CliError::Config("spa needs non-overlapping windows (window.advance_months = window.test_months)".into()));
    }
    let mut grid = Vec::new();
    for &l in &g.lambda_ema {
        for &k in &g.momentum_window {
            for &th in &g.activation_threshold {
                let signal = SignalParams { lambda_ema: l, momentum_window: k, activation_threshold: th, ..cfg.engine.signal };
                signal.validate().map_err(|e| CliError::Config(format!("spa grid: {e}")))?;
                grid.push(signal);
            }
        }
    }
    let data = load_data(cfg)?;
    let runs: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|signal| {
            let mut engine = cfg.engine.clone();
            engine.signal = *signal;
            let run = run_walk_forward(&data.series, &engine, &RunVariant::base(&engine))?;
            Ok(run_ledger(&run).iter().map(|r| r.net_return).collect())
        })
        .collect::<Result<_, CliError>>()?;
    let n = runs[0].len();
    if runs.iter().any(|r| r.len() != n) {
        return Err(CliError::Runtime("candidate ledgers differ in length".into()));
    }
    let a = &cfg.analytics;
    let result = spa_test(&runs, &vec![0.0; n], a.spa_resamples, a.spa_block, a.seed)
        .map_err(|e| CliError::Runtime(format!("spa: {e}")))?;
    let candidates = grid
        .iter()
        .zip(&runs)
        .enumerate()
        .map(|(index, (s, r))| {
            let mean = r.iter().sum::<f64>() / r.len().max(1) as f64;
            SpaCandidate {
                index,
                lambda_ema: s.lambda_ema,
                momentum_window: s.momentum_window,
                activation_threshold: s.activation_threshold,
                sharpe: wfbt_core::analytics::annualized_sharpe(r).ok(),
                ann_return: mean * 252.0,
            }
        })
        .collect();
    let report = SpaReport {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        benchmark: "flat zero-cost (zero daily return)".into(),
        result,
        candidates,
    };
    ensure_dir(out)?;
    let path = out.join("spa.json");
    write_json(&path, &report)?;
    write_manifest(out, "spa", cfg, Some(&data), None, &[path])?;
    Ok(report)
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<PathBuf, CliError> {
    let series = generate(&cfg.synthetic).map_err(|e| CliError::Config(e.to_string()))?;
    ensure_dir(out)?;
    let path = out.join("synthetic.csv");
    let f = fs::File::create(&path).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    write_csv(&series, f).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(path)
}
