//! Daily trade management and fill accounting.
//!
//! [`step_position`] runs the position state machine for one decision day.
//! Exit rules are evaluated in a fixed order: hard stop, trailing stop,
//! timeout, regime de-risk; then the entry gate, then the weight refresh.
//! [`simulate_path`] drives the machine over a slice, delays targets by the
//! latency mode and charges linear and square-root impact costs on the
//! realized weight changes.
//!
//! P&L convention: the return of day `t` is earned by the weight filled at the
//! close of day `t − 1`.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::Bar;

#[derive(Debug, Error, PartialEq)]
pub enum ExecutionError {
    #[error("ATR warm-up: need {needed} true ranges, have {have}")]
    Warmup { needed: usize, have: usize },
    #[error("{field} {reason}")]
    InvalidParam { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeriskMode {
    /// Halve on the first adverse day, close on the second consecutive one.
    #[default]
    Halve,
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopTrigger {
    #[default]
    CloseOnly,
    /// Compare the day's low (high for shorts) against the stop levels.
    IntradayTouch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExitParams {
    pub atr_window: usize,
    pub hard_stop_mult: f64,
    pub trail_stop_mult: f64,
    pub timeout_days: u32,
    pub derisk_threshold: f64,
    pub derisk_mode: DeriskMode,
    pub stop_trigger: StopTrigger,
}

impl Default for ExitParams {
    fn default() -> Self {
        Self {
            atr_window: 14,
            hard_stop_mult: 2.0,
            trail_stop_mult: 1.5,
            timeout_days: 30,
            derisk_threshold: 0.5,
            derisk_mode: DeriskMode::Halve,
            stop_trigger: StopTrigger::CloseOnly,
        }
    }
}

impl ExitParams {
    pub fn validate(&self) -> Result<(), ExecutionError> {
        if self.atr_window < 1 {
            return Err(ExecutionError::InvalidParam { field: "exit.atr_window", reason: "must be >= 1".into() });
        }
        for (field, v) in [("exit.hard_stop_mult", self.hard_stop_mult), ("exit.trail_stop_mult", self.trail_stop_mult)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ExecutionError::InvalidParam { field, reason: format!("must be positive, got {v}") });
            }
        }
        if self.timeout_days < 1 {
            return Err(ExecutionError::InvalidParam { field: "exit.timeout_days", reason: "must be >= 1".into() });
        }
        if !(0.0..=1.0).contains(&self.derisk_threshold) {
            return Err(ExecutionError::InvalidParam {
                field: "exit.derisk_threshold",
                reason: format!("must be in [0, 1], got {}", self.derisk_threshold),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub k: f64,
    pub gamma: f64,
    pub cost_multiplier: f64,
    pub impact_multiplier: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { k: 7e-5, gamma: 0.02, cost_multiplier: 1.0, impact_multiplier: 1.0 }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), ExecutionError> {
        for (field, v) in [
            ("costs.k", self.k),
            ("costs.gamma", self.gamma),
            ("costs.cost_multiplier", self.cost_multiplier),
            ("costs.impact_multiplier", self.impact_multiplier),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ExecutionError::InvalidParam { field, reason: format!("must be >= 0, got {v}") });
            }
        }
        Ok(())
    }

    pub fn linear(&self, turnover: f64) -> f64 {
        self.cost_multiplier * self.k * turnover
    }

    pub fn impact(&self, turnover: f64) -> f64 {
        self.impact_multiplier * self.gamma * turnover.powf(1.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LatencyMode {
    pub delay_days: u8,
}

impl LatencyMode {
    pub fn new(delay_days: u8) -> Result<Self, ExecutionError> {
        if delay_days > 2 {
            return Err(ExecutionError::InvalidParam {
                field: "latency.delay_days",
                reason: format!("must be 0, 1 or 2, got {delay_days}"),
            });
        }
        Ok(Self { delay_days })
    }

    pub fn label(&self) -> String {
        format!("T+{}", self.delay_days)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Long,
    /// Mirrored rules used by the reversal variant.
    Short,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Long => 1.0,
            Direction::Short => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionStatus {
    #[default]
    Flat,
    Long,
    Short,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    HardStop,
    TrailStop,
    Timeout,
    Derisk,
    SignalOff,
}

impl ExitReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitReason::HardStop => "hard_stop",
            ExitReason::TrailStop => "trail_stop",
            ExitReason::Timeout => "timeout",
            ExitReason::Derisk => "derisk",
            ExitReason::SignalOff => "signal_off",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Bull,
    Chop,
    Bear,
}

impl Regime {
    /// Bull above 0.55, bear below 0.45; undefined probabilities count as chop.
    pub fn from_p_bull(p_bull: Option<f64>) -> Self {
        match p_bull {
            Some(p) if p > 0.55 => Regime::Bull,
            Some(p) if p < 0.45 => Regime::Bear,
            _ => Regime::Chop,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Bull => "bull",
            Regime::Chop => "chop",
            Regime::Bear => "bear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionState {
    pub status: PositionStatus,
    pub entry_price: f64,
    pub entry_date: Option<NaiveDate>,
    /// Most favorable close since entry (a trough for shorts).
    pub peak_price: f64,
    pub age: u32,
    /// Signed weight; zero iff flat.
    pub current_weight: f64,
    pub derisk_streak: u32,
    pub derisk_scale: f64,
}

impl Default for PositionState {
    fn default() -> Self {
        Self::flat()
    }
}

impl PositionState {
    pub fn flat() -> Self {
        Self {
            status: PositionStatus::Flat,
            entry_price: 0.0,
            entry_date: None,
            peak_price: 0.0,
            age: 0,
            current_weight: 0.0,
            derisk_streak: 0,
            derisk_scale: 1.0,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.status == PositionStatus::Flat
    }
}

/// Everything the state machine sees on one decision day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayInput {
    pub date: NaiveDate,
    pub bar: Bar,
    /// Close-to-close return realized on this day.
    pub asset_return: f64,
    pub p_bull: Option<f64>,
    /// Regime probability at the previous close, when the held weight was set.
    pub prev_p_bull: Option<f64>,
    pub slope: f64,
    pub atr: Option<f64>,
    pub tradeable: bool,
    /// Nonnegative weight magnitude proposed by sizing.
    pub sizing_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRules {
    pub exit: ExitParams,
    pub activation_threshold: f64,
    pub direction: Direction,
}

impl TradeRules {
    /// Probability of the traded direction (p_bull long, p_bear short).
    pub fn favorable(&self, p_bull: f64) -> f64 {
        match self.direction {
            Direction::Long => p_bull,
            Direction::Short => 1.0 - p_bull,
        }
    }

    /// Entry condition: enough conviction and a slope pointing the traded way.
    pub fn gate(&self, p_bull: Option<f64>, slope: f64) -> bool {
        match p_bull {
            Some(p) => self.favorable(p) >= self.activation_threshold && self.direction.sign() * slope > 0.0,
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Signed target weight after the step.
    pub weight: f64,
    pub entered: bool,
    pub exit: Option<ExitReason>,
    pub derisked: bool,
}

pub fn true_range(bar: &Bar, prev_close: Option<f64>) -> f64 {
    let hl = bar.high - bar.low;
    match prev_close {
        Some(c) => hl.max((bar.high - c).abs()).max((bar.low - c).abs()),
        None => hl,
    }
}

/// Mean of the last `n` true ranges.
pub fn atr(tr: &[f64], n: usize) -> Result<f64, ExecutionError> {
    if n == 0 || tr.len() < n {
        return Err(ExecutionError::Warmup { needed: n, have: tr.len() });
    }
    Ok(tr[tr.len() - n..].iter().sum::<f64>() / n as f64)
}

/// ATR for every day of `bars`, `None` until `n` true ranges exist.
pub fn rolling_atr(bars: &[Bar], n: usize) -> Vec<Option<f64>> {
    let tr: Vec<f64> = bars
        .iter()
        .enumerate()
        .map(|(i, b)| true_range(b, (i > 0).then(|| bars[i - 1].close)))
        .collect();
    (0..tr.len()).map(|t| atr(&tr[..=t], n).ok()).collect()
}

pub fn step_position(state: &PositionState, day: &DayInput, rules: &TradeRules) -> (PositionState, StepOutcome) {
    let sign = rules.direction.sign();
    let held_status = match rules.direction {
        Direction::Long => PositionStatus::Long,
        Direction::Short => PositionStatus::Short,
    };
    let p = &rules.exit;
    let close = day.bar.close;

    if state.status == held_status {
        let mut next = *state;
        next.age += 1;
        let (touch, extreme) = match (p.stop_trigger, rules.direction) {
            (StopTrigger::CloseOnly, _) => (close, close),
            (StopTrigger::IntradayTouch, Direction::Long) => (day.bar.low, day.bar.high),
            (StopTrigger::IntradayTouch, Direction::Short) => (day.bar.high, day.bar.low),
        };
        let prior_peak = state.peak_price;
        if sign * (extreme - next.peak_price) > 0.0 {
            next.peak_price = extreme;
        }
        // intraday touches are measured against the peak known before today
        let trail_ref = match p.stop_trigger {
            StopTrigger::CloseOnly => next.peak_price,
            StopTrigger::IntradayTouch => prior_peak,
        };

        let exit = |reason| {
            let flat = PositionState::flat();
            (flat, StepOutcome { weight: 0.0, entered: false, exit: Some(reason), derisked: false })
        };

        if let Some(a) = day.atr {
            let hard = state.entry_price - sign * p.hard_stop_mult * a;
            if sign * (touch - hard) <= 0.0 {
                return exit(ExitReason::HardStop);
            }
            let trail = trail_ref - sign * p.trail_stop_mult * a;
            if sign * (touch - trail) <= 0.0 {
                return exit(ExitReason::TrailStop);
            }
        }
        if next.age >= p.timeout_days {
            return exit(ExitReason::Timeout);
        }
        let mut derisked = false;
        match day.p_bull.map(|pb| 1.0 - rules.favorable(pb)) {
            Some(adverse) if adverse > p.derisk_threshold => {
                next.derisk_streak += 1;
                if p.derisk_mode == DeriskMode::Close || next.derisk_streak >= 2 {
                    return exit(ExitReason::Derisk);
                }
                next.derisk_scale *= 0.5;
                derisked = true;
            }
            _ => next.derisk_streak = 0,
        }
        let w = day.sizing_weight * next.derisk_scale;
        if !(w > 0.0) {
            return exit(ExitReason::SignalOff);
        }
        next.current_weight = sign * w;
        return (next, StepOutcome { weight: next.current_weight, entered: false, exit: None, derisked });
    }

    let can_enter = day.tradeable && day.atr.is_some() && day.sizing_weight > 0.0 && rules.gate(day.p_bull, day.slope);
    if can_enter {
        let next = PositionState {
            status: held_status,
            entry_price: close,
            entry_date: Some(day.date),
            peak_price: close,
            age: 0,
            current_weight: sign * day.sizing_weight,
            derisk_streak: 0,
            derisk_scale: 1.0,
        };
        return (next, StepOutcome { weight: next.current_weight, entered: true, exit: None, derisked: false });
    }
    (PositionState::flat(), StepOutcome { weight: 0.0, entered: false, exit: None, derisked: false })
}

/// `filled[t] = target[t − delay]`, zero-padded at the front.
pub fn apply_latency(targets: &[f64], mode: LatencyMode) -> Vec<f64> {
    let d = mode.delay_days as usize;
    (0..targets.len()).map(|t| if t >= d { targets[t - d] } else { 0.0 }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub turnover: f64,
    pub linear_cost: f64,
    pub impact_cost: f64,
    pub net_return: f64,
}

/// Costs on `|filled[t] − filled[t−1]|`, with the weight before the first day
/// taken as zero.
pub fn apply_costs(filled: &[f64], gross: &[f64], model: &CostModel) -> Vec<CostRow> {
    let mut prev = 0.0;
    filled
        .iter()
        .zip(gross)
        .map(|(&w, &g)| {
            let turnover = (w - prev).abs();
            prev = w;
            let linear_cost = model.linear(turnover);
            let impact_cost = model.impact(turnover);
            CostRow { turnover, linear_cost, impact_cost, net_return: g - linear_cost - impact_cost }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub date: NaiveDate,
    pub close: f64,
    pub asset_return: f64,
    pub p_bull: Option<f64>,
    /// Ex-ante label from the prior close's regime probability.
    pub regime: Regime,
    pub target_weight: f64,
    pub filled_weight: f64,
    /// Weight carried through this day (the previous fill).
    pub held_weight: f64,
    pub turnover: f64,
    pub gross_return: f64,
    pub linear_cost: f64,
    pub impact_cost: f64,
    pub net_return: f64,
    pub status: PositionStatus,
    pub age: u32,
    pub entered: bool,
    pub exit_reason: Option<ExitReason>,
}

pub fn simulate_path(inputs: &[DayInput], rules: &TradeRules, costs: &CostModel, latency: LatencyMode) -> Vec<LedgerRow> {
    let mut state = PositionState::flat();
    let mut steps = Vec::with_capacity(inputs.len());
    for day in inputs {
        let (next, out) = step_position(&state, day, rules);
        state = next;
        steps.push((state, out));
    }
    let targets: Vec<f64> = steps.iter().map(|(_, o)| o.weight).collect();
    let filled = apply_latency(&targets, latency);
    let held: Vec<f64> = (0..filled.len()).map(|t| if t == 0 { 0.0 } else { filled[t - 1] }).collect();
    let gross: Vec<f64> = held.iter().zip(inputs).map(|(w, d)| w * d.asset_return).collect();
    let cost_rows = apply_costs(&filled, &gross, costs);

    inputs
        .iter()
        .enumerate()
        .map(|(t, d)| {
            let (st, out) = steps[t];
            let c = cost_rows[t];
            LedgerRow {
                date: d.date,
                close: d.bar.close,
                asset_return: d.asset_return,
                p_bull: d.p_bull,
                regime: Regime::from_p_bull(d.prev_p_bull),
                target_weight: targets[t],
                filled_weight: filled[t],
                held_weight: held[t],
                turnover: c.turnover,
                gross_return: gross[t],
                linear_cost: c.linear_cost,
                impact_cost: c.impact_cost,
                net_return: c.net_return,
                status: st.status,
                age: st.age,
                entered: out.entered,
                exit_reason: out.exit,
            }
        })
        .collect()
}

/// Forces the final fill of a slice to zero and recharges that day's costs,
/// so each slice starts and ends flat.
pub fn flatten_last_day(rows: &mut [LedgerRow], costs: &CostModel) {
    if let Some(last) = rows.last_mut() {
        last.filled_weight = 0.0;
        last.turnover = last.held_weight.abs();
        last.linear_cost = costs.linear(last.turnover);
        last.impact_cost = costs.impact(last.turnover);
        last.net_return = last.gross_return - last.linear_cost - last.impact_cost;
    }
}

pub fn write_ledger_csv<W: Write>(rows: &[LedgerRow], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "date", "close", "asset_return", "p_bull", "regime", "target_weight", "filled_weight", "held_weight", "turnover",
        "gross_return", "linear_cost", "impact_cost", "net_return", "status", "age", "entered", "exit_reason",
    ])?;
    for r in rows {
        let status = match r.status {
            PositionStatus::Flat => "flat",
            PositionStatus::Long => "long",
            PositionStatus::Short => "short",
        };
        wtr.write_record([
            r.date.to_string(),
            r.close.to_string(),
            r.asset_return.to_string(),
            r.p_bull.map(|p| p.to_string()).unwrap_or_default(),
            r.regime.as_str().to_string(),
            r.target_weight.to_string(),
            r.filled_weight.to_string(),
            r.held_weight.to_string(),
            r.turnover.to_string(),
            r.gross_return.to_string(),
            r.linear_cost.to_string(),
            r.impact_cost.to_string(),
            r.net_return.to_string(),
            status.to_string(),
            r.age.to_string(),
            (r.entered as u8).to_string(),
            r.exit_reason.map(|e| e.as_str().to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
