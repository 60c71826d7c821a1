//! Summary statistics of a daily net-return ledger.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{mean, sample_std, AnalyticsError, RegressionResult, TRADING_DAYS};
use crate::execution::LedgerRow;

/// A day counts as active when the carried weight exceeds this magnitude.
pub const ACTIVE_WEIGHT_THRESHOLD: f64 = 1e-3;

const TAIL_MIN_OBS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfSummary {
    pub days: usize,
    pub ann_return: f64,
    pub ann_vol: f64,
    /// `None` when the return series has zero volatility.
    pub sharpe: Option<f64>,
    pub total_return: f64,
    pub cagr: f64,
    pub max_drawdown: f64,
    /// `None` when there is no drawdown.
    pub calmar: Option<f64>,
    /// Share of all days with a positive net return.
    pub hit_rate_calendar: f64,
    /// Share of days with a nonzero net return that were positive.
    pub hit_rate_nonzero: Option<f64>,
    /// Share of active days with a positive net return.
    pub hit_rate_active: Option<f64>,
    pub up_month_share: Option<f64>,
    pub skewness: Option<f64>,
    /// Raw standardized fourth moment (normal = 3).
    pub kurtosis: Option<f64>,
    pub var95: Option<f64>,
    pub cvar95: Option<f64>,
    pub worst_month: Option<f64>,
    pub avg_gain_bps: Option<f64>,
    pub avg_loss_bps: Option<f64>,
    pub payoff_ratio: Option<f64>,
    pub ev_per_active_day_bps: Option<f64>,
    pub entries: usize,
    pub active_days: usize,
    pub mean_abs_weight: f64,
    pub mean_abs_turnover: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailMetrics {
    pub var95: f64,
    pub cvar95: f64,
    pub worst_month: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledReport {
    pub target_vol: f64,
    pub scale: f64,
    pub scaled_return: f64,
    pub scaled_alpha: f64,
    pub sharpe: f64,
    pub information_ratio: Option<f64>,
}

/// Largest peak-to-trough loss as a fraction of the running peak.
pub fn max_drawdown(equity: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0_f64;
    for &e in equity {
        peak = peak.max(e);
        worst = worst.max(1.0 - e / peak);
    }
    worst
}

/// Linear-interpolation sample quantile of `sorted` at probability `p`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Annualized Sharpe with a zero risk-free rate.
pub fn annualized_sharpe(returns: &[f64]) -> Result<f64, AnalyticsError> {
    if returns.len() < 2 {
        return Err(AnalyticsError::TooShort { needed: 2, got: returns.len() });
    }
    let sd = sample_std(returns);
    if sd == 0.0 {
        return Err(AnalyticsError::ZeroVol);
    }
    Ok(mean(returns) / sd * TRADING_DAYS.sqrt())
}

fn monthly_returns(dates: &[NaiveDate], returns: &[f64]) -> Vec<f64> {
    let mut months: BTreeMap<(i32, u32), f64> = BTreeMap::new();
    for (d, r) in dates.iter().zip(returns) {
        let g = months.entry((d.year(), d.month())).or_insert(1.0);
        *g *= 1.0 + r;
    }
    months.values().map(|g| g - 1.0).collect()
}

/// 95% VaR and CVaR as positive loss magnitudes, plus the worst calendar month.
pub fn tail_metrics(dates: &[NaiveDate], returns: &[f64]) -> Result<TailMetrics, AnalyticsError> {
    if dates.len() != returns.len() {
        return Err(AnalyticsError::LengthMismatch(dates.len(), returns.len()));
    }
    if returns.len() < TAIL_MIN_OBS {
        return Err(AnalyticsError::TooShort { needed: TAIL_MIN_OBS, got: returns.len() });
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = quantile(&sorted, 0.05);
    let tail: Vec<f64> = sorted.iter().copied().filter(|&r| r <= q).collect();
    let worst_month = monthly_returns(dates, returns).into_iter().fold(f64::INFINITY, f64::min);
    Ok(TailMetrics { var95: (-q).max(0.0), cvar95: (-mean(&tail)).max(0.0), worst_month })
}

/// Annualized expectancy from the mean active-day return.
pub fn expectancy_annualized(ev_per_active_day_bps: f64, active_days: usize, total_days: usize) -> f64 {
    ev_per_active_day_bps / 1e4 * active_days as f64 / total_days as f64 * TRADING_DAYS
}

fn share(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn moments(x: &[f64]) -> (Option<f64>, Option<f64>) {
    let m = mean(x);
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64;
    if var == 0.0 {
        return (None, None);
    }
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / x.len() as f64;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / x.len() as f64;
    (Some(m3 / var.powf(1.5)), Some(m4 / (var * var)))
}

pub fn perf_summary(ledger: &[LedgerRow]) -> Result<PerfSummary, AnalyticsError> {
    if ledger.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let n = ledger.len();
    let r: Vec<f64> = ledger.iter().map(|row| row.net_return).collect();
    let dates: Vec<NaiveDate> = ledger.iter().map(|row| row.date).collect();

    let ann_return = mean(&r) * TRADING_DAYS;
    let ann_vol = sample_std(&r) * TRADING_DAYS.sqrt();
    let sharpe = (ann_vol > 0.0).then(|| ann_return / ann_vol);

    let mut equity = Vec::with_capacity(n + 1);
    equity.push(1.0);
    for x in &r {
        equity.push(equity.last().unwrap() * (1.0 + x));
    }
    let final_equity = *equity.last().unwrap();
    let cagr = final_equity.powf(TRADING_DAYS / n as f64) - 1.0;
    let mdd = max_drawdown(&equity);

    let active: Vec<f64> = ledger
        .iter()
        .filter(|row| row.held_weight.abs() > ACTIVE_WEIGHT_THRESHOLD)
        .map(|row| row.net_return)
        .collect();
    let gains: Vec<f64> = active.iter().copied().filter(|&x| x > 0.0).collect();
    let losses: Vec<f64> = active.iter().copied().filter(|&x| x < 0.0).map(f64::abs).collect();
    let avg_gain = (!gains.is_empty()).then(|| mean(&gains) * 1e4);
    let avg_loss = (!losses.is_empty()).then(|| mean(&losses) * 1e4);

    let nonzero = r.iter().filter(|&&x| x != 0.0).count();
    let positive = r.iter().filter(|&&x| x > 0.0).count();
    let months = monthly_returns(&dates, &r);
    let (skewness, kurtosis) = moments(&r);
    let tail = tail_metrics(&dates, &r).ok();

    Ok(PerfSummary {
        days: n,
        ann_return,
        ann_vol,
        sharpe,
        total_return: final_equity - 1.0,
        cagr,
        max_drawdown: mdd,
        calmar: (mdd > 0.0).then(|| ann_return / mdd),
        hit_rate_calendar: positive as f64 / n as f64,
        hit_rate_nonzero: share(positive, nonzero),
        hit_rate_active: share(gains.len(), active.len()),
        up_month_share: share(months.iter().filter(|&&m| m > 0.0).count(), months.len()),
        skewness,
        kurtosis,
        var95: tail.map(|t| t.var95),
        cvar95: tail.map(|t| t.cvar95),
        worst_month: tail.map(|t| t.worst_month),
        avg_gain_bps: avg_gain,
        avg_loss_bps: avg_loss,
        payoff_ratio: avg_gain.zip(avg_loss).map(|(g, l)| g / l),
        ev_per_active_day_bps: (!active.is_empty()).then(|| mean(&active) * 1e4),
        entries: ledger.iter().filter(|row| row.entered).count(),
        active_days: active.len(),
        mean_abs_weight: ledger.iter().map(|row| row.held_weight.abs()).sum::<f64>() / n as f64,
        mean_abs_turnover: ledger.iter().map(|row| row.turnover).sum::<f64>() / n as f64,
    })
}

/// Rescales headline figures to a target annual volatility.
pub fn scale_to_target(
    sharpe: f64,
    ann_vol: f64,
    alpha_annual: f64,
    information_ratio: Option<f64>,
    target_vol: f64,
) -> Result<ScaledReport, AnalyticsError> {
    if ann_vol <= 0.0 {
        return Err(AnalyticsError::ZeroVol);
    }
    let scale = target_vol / ann_vol;
    Ok(ScaledReport {
        target_vol,
        scale,
        scaled_return: sharpe * target_vol,
        scaled_alpha: scale * alpha_annual,
        sharpe,
        information_ratio,
    })
}

pub fn vol_scaling(
    summary: &PerfSummary,
    regression: &RegressionResult,
    target_vol: f64,
) -> Result<ScaledReport, AnalyticsError> {
    let sharpe = summary.sharpe.ok_or(AnalyticsError::ZeroVol)?;
    scale_to_target(sharpe, summary.ann_vol, regression.alpha_annual, regression.information_ratio, target_vol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drawdown_single_dip() {
        assert_eq!(max_drawdown(&[1.0, 0.5, 1.0]), 0.5);
        assert_eq!(max_drawdown(&[1.0, 1.1, 1.2]), 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert!((quantile(&s, 0.1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn alternating_two_point_var() {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates: Vec<NaiveDate> = (0..40).map(|i| d0 + chrono::Days::new(i)).collect();
        let r: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1e-4 } else { -1e-4 }).collect();
        let t = tail_metrics(&dates, &r).unwrap();
        assert!((t.var95 - 1e-4).abs() < 1e-15);
        assert!((t.cvar95 - 1e-4).abs() < 1e-15);
        let pos = vec![1e-4; 40];
        assert_eq!(tail_metrics(&dates, &pos).unwrap().var95, 0.0);
        assert_eq!(tail_metrics(&dates[..5], &pos[..5]), Err(AnalyticsError::TooShort { needed: 20, got: 5 }));
    }

    #[test]
    fn identity_scaling() {
        let s = scale_to_target(2.0, 0.1, 0.03, Some(1.0), 0.1).unwrap();
        assert_eq!(s.scale, 1.0);
        assert_eq!(s.scaled_alpha, 0.03);
        assert_eq!(scale_to_target(2.0, 0.0, 0.03, None, 0.1), Err(AnalyticsError::ZeroVol));
    }
}
