//! Rolling train/test windows, per-window parameter freezing, out-of-sample
//! slices, stitching and robustness grids.

use std::ops::RangeInclusive;

use chrono::{Days, Months, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytics::{perf_summary, AnalyticsError, PerfSummary};
use crate::execution::{
    flatten_last_day, rolling_atr, simulate_path, CostModel, DayInput, Direction, ExecutionError, ExitParams,
    LatencyMode, LedgerRow, TradeRules,
};
use crate::market_data::{DataError, PriceSeries};
use crate::signal::{build_signal, SignalError, SignalParams, SignalSeries, TrainStats};
use crate::sizing::{
    confidence_weight, ewma_variance, final_weight, friction_kelly, vol_target_weight, KellyParams, SizingError,
    TrainMoments, VolParams,
};

/// Tolerance for the first training window starting slightly before the data.
const START_GRACE_DAYS: u64 = 7;

#[derive(Debug, Error)]
pub enum WalkForwardError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Sizing(#[from] SizingError),
    #[error(transparent)]
    Execution(#[from] ExecutionError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("insufficient history: first training window starts {needed} but data starts {available}")]
    InsufficientHistory { needed: NaiveDate, available: NaiveDate },
    #[error("window {index}: training slice has {got} days, need more than {needed}")]
    ShortTraining { index: usize, needed: usize, got: usize },
    #[error("cannot stitch overlapping slices: {next} starts on or before {prev_end}")]
    OverlapInStitch { prev_end: NaiveDate, next: NaiveDate },
    #[error("invalid window spec: {0}")]
    InvalidSpec(String),
    #[error("no out-of-sample window fits inside the data")]
    NoWindows,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub train_years: u32,
    pub test_months: u32,
    pub advance_months: u32,
    pub first_test_start: NaiveDate,
    /// Optional cap on the last out-of-sample date.
    pub last_test_end: Option<NaiveDate>,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            train_years: 10,
            test_months: 6,
            advance_months: 6,
            first_test_start: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
            last_test_end: None,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), WalkForwardError> {
        if self.train_years == 0 {
            return Err(WalkForwardError::InvalidSpec("window.train_years must be positive".into()));
        }
        if self.test_months == 0 {
            return Err(WalkForwardError::InvalidSpec("window.test_months must be positive".into()));
        }
        if self.advance_months == 0 || self.advance_months > self.test_months {
            return Err(WalkForwardError::InvalidSpec("window.advance_months must be in [1, test_months]".into()));
        }
        Ok(())
    }

    /// Test slices overlap when the window advances by less than a slice.
    pub fn overlapping(&self) -> bool {
        self.advance_months < self.test_months
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

impl Window {
    pub fn train_range(&self) -> RangeInclusive<NaiveDate> {
        self.train_start..=self.train_end
    }

    pub fn test_range(&self) -> RangeInclusive<NaiveDate> {
        self.test_start..=self.test_end
    }
}

/// Rolling windows over `data_span`; the last test slice is clipped to the data.
pub fn generate_windows(data_span: RangeInclusive<NaiveDate>, spec: &WindowSpec) -> Result<Vec<Window>, WalkForwardError> {
    spec.validate()?;
    let (data_start, mut data_end) = (*data_span.start(), *data_span.end());
    if let Some(cap) = spec.last_test_end {
        data_end = data_end.min(cap);
    }
    let train_months = Months::new(spec.train_years * 12);
    let first_train = spec.first_test_start - train_months;
    if data_start > first_train + Days::new(START_GRACE_DAYS) {
        return Err(WalkForwardError::InsufficientHistory { needed: first_train, available: data_start });
    }
    let mut out = Vec::new();
    for i in 0.. {
        let test_start = spec.first_test_start + Months::new(spec.advance_months * i);
        if test_start > data_end {
            break;
        }
        let test_end = (test_start + Months::new(spec.test_months) - Days::new(1)).min(data_end);
        out.push(Window {
            index: i as usize,
            train_start: test_start - train_months,
            train_end: test_start - Days::new(1),
            test_start,
            test_end,
        });
    }
    if out.is_empty() {
        return Err(WalkForwardError::NoWindows);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    SlopeOnly,
    MomentumOnly,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::SlopeOnly => "slope_only",
            Ablation::MomentumOnly => "momentum_only",
        }
    }

    fn omega(self) -> Option<f64> {
        match self {
            Ablation::Full => None,
            Ablation::SlopeOnly => Some(1.0),
            Ablation::MomentumOnly => Some(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunVariant {
    pub latency: LatencyMode,
    pub reversed: bool,
    pub ablation: Ablation,
    pub cost_multiplier: f64,
    pub impact_multiplier: f64,
}

impl RunVariant {
    pub fn base(config: &EngineConfig) -> Self {
        Self {
            latency: config.latency,
            reversed: false,
            ablation: Ablation::Full,
            cost_multiplier: config.costs.cost_multiplier,
            impact_multiplier: config.costs.impact_multiplier,
        }
    }

    pub fn direction(&self) -> Direction {
        if self.reversed {
            Direction::Short
        } else {
            Direction::Long
        }
    }

    pub fn label(&self) -> String {
        let name = if self.reversed { "reversed" } else { self.ablation.as_str() };
        format!("{name}/cost{}x/impact{}x/{}", self.cost_multiplier, self.impact_multiplier, self.latency.label())
    }
}

/// Candidate values scanned on each training slice by in-sample unit-rule Sharpe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SelectionGrid {
    pub lambda_ema: Vec<f64>,
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub window: WindowSpec,
    pub signal: SignalParams,
    pub vol: VolParams,
    pub kelly: KellyParams,
    pub exit: ExitParams,
    pub costs: CostModel,
    pub latency: LatencyMode,
    pub selection: SelectionGrid,
    /// Close any open position on the last day of each test slice.
    pub flatten_slices: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            signal: SignalParams::default(),
            vol: VolParams::default(),
            kelly: KellyParams::default(),
            exit: ExitParams::default(),
            costs: CostModel::default(),
            latency: LatencyMode::new(1).unwrap(),
            selection: SelectionGrid::default(),
            flatten_slices: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), WalkForwardError> {
        self.window.validate()?;
        self.signal.validate()?;
        self.vol.validate()?;
        self.kelly.validate()?;
        self.exit.validate()?;
        self.costs.validate()?;
        LatencyMode::new(self.latency.delay_days)?;
        for &l in &self.selection.lambda_ema {
            SignalParams { lambda_ema: l, ..self.signal }.validate()?;
        }
        for &w in &self.selection.omega {
            SignalParams { omega: w, ..self.signal }.validate()?;
        }
        Ok(())
    }
}

/// Everything a test slice is allowed to know, fixed at the end of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenParams {
    pub window_index: usize,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub direction: Direction,
    pub signal: SignalParams,
    pub stats: TrainStats,
    pub vol: VolParams,
    pub kelly: KellyParams,
    pub exit: ExitParams,
    pub moments: TrainMoments,
    pub f_star: f64,
    pub seed_variance: f64,
}

impl FrozenParams {
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("frozen params serialize");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn rules(&self) -> TradeRules {
        TradeRules { exit: self.exit, activation_threshold: self.signal.activation_threshold, direction: self.direction }
    }
}

fn close_returns(closes: &[f64]) -> Vec<f64> {
    (0..closes.len()).map(|t| if t == 0 { 0.0 } else { closes[t] / closes[t - 1] - 1.0 }).collect()
}

fn population_moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Daily returns of holding one unit in the traded direction whenever the
/// entry gate was on at the prior close.
pub fn unit_rule_returns(signal: &SignalSeries, returns: &[f64], rules: &TradeRules) -> Vec<f64> {
    (1..returns.len())
        .map(|t| {
            let d = &signal.days[t - 1];
            let on = d.tradeable && rules.gate(d.p_bull, d.slope);
            if on {
                rules.direction.sign() * returns[t]
            } else {
                0.0
            }
        })
        .collect()
}

fn unit_rule_sharpe(train: &PriceSeries, params: &SignalParams, rules: &TradeRules, returns: &[f64]) -> f64 {
    let Ok(stats) = TrainStats::fit(train, params.lambda_ema) else {
        return f64::NEG_INFINITY;
    };
    let Ok(signal) = build_signal(train, params, &stats) else {
        return f64::NEG_INFINITY;
    };
    let (m, s) = population_moments(&unit_rule_returns(&signal, returns, rules));
    if s > 0.0 {
        m / s
    } else {
        f64::NEG_INFINITY
    }
}

/// Estimates and freezes every parameter from the window's training slice.
pub fn fit_window(
    history: &PriceSeries,
    window: &Window,
    config: &EngineConfig,
    variant: &RunVariant,
) -> Result<FrozenParams, WalkForwardError> {
    let train = history.slice(window.train_range());
    let needed = config.signal.momentum_window.max(config.exit.atr_window) + 1;
    if train.len() <= needed {
        return Err(WalkForwardError::ShortTraining { index: window.index, needed, got: train.len() });
    }
    let returns = close_returns(&train.closes());
    let direction = variant.direction();
    let rules = TradeRules { exit: config.exit, activation_threshold: config.signal.activation_threshold, direction };

    let mut signal_params = config.signal;
    if let Some(w) = variant.ablation.omega() {
        signal_params.omega = w;
    }
    let lambdas = if config.selection.lambda_ema.is_empty() { vec![signal_params.lambda_ema] } else { config.selection.lambda_ema.clone() };
    let omegas = match variant.ablation.omega() {
        Some(w) => vec![w],
        None if !config.selection.omega.is_empty() => config.selection.omega.clone(),
        None => vec![signal_params.omega],
    };
    if lambdas.len() * omegas.len() > 1 {
        let mut best = (f64::NEG_INFINITY, signal_params);
        for &l in &lambdas {
            for &w in &omegas {
                let cand = SignalParams { lambda_ema: l, omega: w, ..signal_params };
                let s = unit_rule_sharpe(&train, &cand, &rules, &returns);
                if s > best.0 {
                    best = (s, cand);
                }
            }
        }
        signal_params = best.1;
    }

    let stats = TrainStats::fit(&train, signal_params.lambda_ema)?;
    let signal = build_signal(&train, &signal_params, &stats)?;
    let (mu, sigma) = population_moments(&unit_rule_returns(&signal, &returns, &rules));
    let (mu_u, sigma_u) = population_moments(&returns[1..]);
    let moments = TrainMoments { mu, sigma, mu_u, sigma_u };
    let f_star = friction_kelly(mu, sigma, config.kelly.k, config.kelly.gamma, config.kelly.n);

    Ok(FrozenParams {
        window_index: window.index,
        train_start: window.train_start,
        train_end: window.train_end,
        direction,
        signal: signal_params,
        stats,
        vol: config.vol,
        kelly: config.kelly,
        exit: config.exit,
        moments,
        f_star,
        seed_variance: sigma_u * sigma_u,
    })
}

/// Sizing inputs for every day of `span`, with recursive filters started at its first day.
pub fn build_day_inputs(span: &PriceSeries, frozen: &FrozenParams) -> Result<Vec<DayInput>, WalkForwardError> {
    let signal = build_signal(span, &frozen.signal, &frozen.stats)?;
    let returns = close_returns(&span.closes());
    let variance = ewma_variance(&returns[1..], frozen.vol.theta, frozen.seed_variance)?;
    let atr = rolling_atr(span.bars(), frozen.exit.atr_window);
    let rules = frozen.rules();

    Ok(span
        .bars()
        .iter()
        .enumerate()
        .map(|(t, bar)| {
            let d = &signal.days[t];
            // variance[t] is the forecast after observing returns[1..=t]
            let w_vol = vol_target_weight(variance[t].sqrt(), &frozen.vol);
            let gate = d.tradeable && rules.gate(d.p_bull, d.slope);
            let sizing_weight = match d.p_bull {
                Some(p) if d.tradeable => {
                    let w_conf = confidence_weight(w_vol, rules.favorable(p));
                    final_weight(frozen.f_star, w_conf, w_vol, gate, &frozen.kelly, &frozen.vol)
                }
                _ => 0.0,
            };
            DayInput {
                date: bar.date,
                bar: *bar,
                asset_return: returns[t],
                p_bull: d.p_bull,
                prev_p_bull: (t > 0).then(|| signal.days[t - 1].p_bull).flatten(),
                slope: d.slope,
                atr: atr[t],
                tradeable: d.tradeable,
                sizing_weight,
            }
        })
        .collect())
}

/// Runs one test slice on frozen parameters. Filters run continuously from the
/// training start so the first test day matches an uninterrupted computation.
pub fn run_oos(
    history: &PriceSeries,
    window: &Window,
    frozen: &FrozenParams,
    config: &EngineConfig,
    variant: &RunVariant,
) -> Result<Vec<LedgerRow>, WalkForwardError> {
    let span = history.slice(window.train_start..=window.test_end);
    let inputs = build_day_inputs(&span, frozen)?;
    let test: Vec<DayInput> = inputs.into_iter().filter(|d| d.date >= window.test_start).collect();
    let costs = CostModel {
        cost_multiplier: variant.cost_multiplier,
        impact_multiplier: variant.impact_multiplier,
        ..config.costs
    };
    costs.validate()?;
    let mut rows = simulate_path(&test, &frozen.rules(), &costs, variant.latency);
    if config.flatten_slices {
        flatten_last_day(&mut rows, &costs);
    }
    Ok(rows)
}

/// Concatenates ordered, disjoint slices.
pub fn stitch(slices: &[Vec<LedgerRow>]) -> Result<Vec<LedgerRow>, WalkForwardError> {
    let mut out: Vec<LedgerRow> = Vec::new();
    for s in slices {
        if let (Some(prev), Some(first)) = (out.last(), s.first()) {
            if first.date <= prev.date {
                return Err(WalkForwardError::OverlapInStitch { prev_end: prev.date, next: first.date });
            }
        }
        out.extend_from_slice(s);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRun {
    pub window: Window,
    pub params: FrozenParams,
    pub params_hash: String,
    pub ledger: Vec<LedgerRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkForwardRun {
    pub variant: RunVariant,
    pub windows: Vec<WindowRun>,
    /// Concatenated ledger; absent in overlapping mode.
    pub stitched: Option<Vec<LedgerRow>>,
}

impl WalkForwardRun {
    /// Per-slice summaries, the only output in overlapping mode.
    pub fn slice_summaries(&self) -> Vec<(Window, Option<PerfSummary>)> {
        self.windows.iter().map(|w| (w.window, perf_summary(&w.ledger).ok())).collect()
    }
}

pub fn run_walk_forward(
    history: &PriceSeries,
    config: &EngineConfig,
    variant: &RunVariant,
) -> Result<WalkForwardRun, WalkForwardError> {
    config.validate()?;
    let (Some(first), Some(last)) = (history.first_date(), history.last_date()) else {
        return Err(WalkForwardError::NoWindows);
    };
    let windows = generate_windows(first..=last, &config.window)?;
    let runs: Vec<WindowRun> = windows
        .par_iter()
        .map(|w| {
            let params = fit_window(history, w, config, variant)?;
            let ledger = run_oos(history, w, &params, config, variant)?;
            Ok(WindowRun { window: *w, params_hash: params.hash(), params, ledger })
        })
        .collect::<Result<_, WalkForwardError>>()?;
    let runs: Vec<WindowRun> = runs.into_iter().filter(|r| !r.ledger.is_empty()).collect();
    if runs.is_empty() {
        return Err(WalkForwardError::NoWindows);
    }
    let stitched = if config.window.overlapping() {
        None
    } else {
        Some(stitch(&runs.iter().map(|r| r.ledger.clone()).collect::<Vec<_>>())?)
    };
    Ok(WalkForwardRun { variant: *variant, windows: runs, stitched })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StressGrid {
    pub cost_multipliers: Vec<f64>,
    pub impact_multipliers: Vec<f64>,
    pub latencies: Vec<u8>,
    /// Also run the full, slope-only, momentum-only and reversed variants at base settings.
    pub ablations: bool,
}

impl Default for StressGrid {
    fn default() -> Self {
        Self {
            cost_multipliers: vec![0.5, 1.0, 1.5, 2.0],
            impact_multipliers: vec![0.5, 1.0, 1.5, 2.0],
            latencies: vec![0, 1, 2],
            ablations: true,
        }
    }
}

impl StressGrid {
    pub fn variants(&self, config: &EngineConfig) -> Result<Vec<(String, RunVariant)>, WalkForwardError> {
        let mut out = Vec::new();
        for &lat in &self.latencies {
            let latency = LatencyMode::new(lat)?;
            for &c in &self.cost_multipliers {
                for &i in &self.impact_multipliers {
                    let v = RunVariant { latency, cost_multiplier: c, impact_multiplier: i, ..RunVariant::base(config) };
                    out.push(("cost_impact".to_string(), v));
                }
            }
        }
        if self.ablations {
            let base = RunVariant::base(config);
            for ab in [Ablation::Full, Ablation::SlopeOnly, Ablation::MomentumOnly] {
                out.push(("ablation".to_string(), RunVariant { ablation: ab, ..base }));
            }
            out.push(("ablation".to_string(), RunVariant { reversed: true, ..base }));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressCell {
    pub group: String,
    pub label: String,
    pub variant: RunVariant,
    pub summary: PerfSummary,
}

/// One independent walk-forward run per cell, in grid order.
pub fn run_stress_grid(
    history: &PriceSeries,
    config: &EngineConfig,
    grid: &StressGrid,
) -> Result<Vec<StressCell>, WalkForwardError> {
    grid.variants(config)?
        .into_par_iter()
        .map(|(group, variant)| {
            let run = run_walk_forward(history, config, &variant)?;
            let ledger = run.stitched.unwrap_or_else(|| run.windows.into_iter().flat_map(|w| w.ledger).collect());
            Ok(StressCell { group, label: variant.label(), variant, summary: perf_summary(&ledger)? })
        })
        .collect()
}
