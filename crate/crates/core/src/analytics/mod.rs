//! Performance, regression, resampling, significance and capacity statistics.

mod attribution;
mod bootstrap;
mod capacity;
mod perf;
mod regression;
mod spa;

use thiserror::Error;

pub use attribution::{attribution, yearly_summaries, Attribution, PeriodRow, RegimeRow};
pub use bootstrap::{block_bootstrap_sharpe, circular_block_indices, stationary_indices, stream_rng, BootstrapResult};
pub use capacity::{aum_mapping, capacity_curve, linear_grid, CapacityInputs, CapacityResult};
pub use perf::{
    annualized_sharpe, expectancy_annualized, max_drawdown, perf_summary, quantile, scale_to_target, tail_metrics,
    vol_scaling, PerfSummary, ScaledReport, TailMetrics, ACTIVE_WEIGHT_THRESHOLD,
};
pub use regression::{capm_regression, regress_hac, RegressionResult};
pub use spa::{spa_test, SpaResult};

/// Trading days per year used for annualization.
pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("empty input")]
    Empty,
    #[error("too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("zero volatility: ratio undefined")]
    ZeroVol,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("benchmark has zero variance")]
    DegenerateBenchmark,
    #[error("loss differential of candidate {0} has zero variance but nonzero mean")]
    DegenerateLoss(usize),
    #[error("no positive growth branch: mu_u = {mu_u} <= n*k = {drag}")]
    NoPositiveBranch { mu_u: f64, drag: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n − 1).
pub(crate) fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}
