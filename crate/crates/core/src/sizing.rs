//! Position sizing: EWMA volatility targeting, confidence shaping and the
//! friction-adjusted Kelly fraction.
//!
//! The growth objective is
//!
//! ```text
//! g(f) = μ f − ½ σ² f² − n k f − γ (n f)^{3/2}
//! ```
//!
//! Substituting `f = x²` turns the first-order condition into the quadratic
//! `2σ² x² + 3γ n^{3/2} x − 2(μ − n k) = 0`, whose nonnegative root gives `f* = x²`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SizingError {
    #[error("vol.theta must be in (0, 1), got {0}")]
    InvalidTheta(f64),
    #[error("{field} {reason}")]
    InvalidParam { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VolParams {
    pub theta: f64,
    pub target_vol_annual: f64,
    pub trading_days: f64,
    pub max_leverage: f64,
}

impl Default for VolParams {
    fn default() -> Self {
        Self { theta: 0.94, target_vol_annual: 0.15, trading_days: 252.0, max_leverage: 2.0 }
    }
}

impl VolParams {
    pub fn daily_target(&self) -> f64 {
        self.target_vol_annual / self.trading_days.sqrt()
    }

    pub fn validate(&self) -> Result<(), SizingError> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(SizingError::InvalidTheta(self.theta));
        }
        positive("vol.target_vol_annual", self.target_vol_annual)?;
        positive("vol.trading_days", self.trading_days)?;
        positive("vol.max_leverage", self.max_leverage)
    }
}

/// What the 25% fallback allocation is a share of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineBase {
    /// `baseline_fraction · w_conf`
    #[default]
    Confidence,
    /// `baseline_fraction · w_vol`
    Volatility,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KellyParams {
    /// Linear round-trip cost in return units (0.7 bp = 7e-5).
    pub k: f64,
    pub gamma: f64,
    /// Round trips per day.
    pub n: f64,
    pub lambda_kelly: f64,
    pub baseline_fraction: f64,
    pub f_star_epsilon: f64,
    pub baseline_base: BaselineBase,
}

impl Default for KellyParams {
    fn default() -> Self {
        Self {
            k: 7e-5,
            gamma: 0.02,
            n: 1.0,
            lambda_kelly: 0.40,
            baseline_fraction: 0.25,
            f_star_epsilon: 1e-6,
            baseline_base: BaselineBase::Confidence,
        }
    }
}

impl KellyParams {
    pub fn validate(&self) -> Result<(), SizingError> {
        nonnegative("kelly.k", self.k)?;
        nonnegative("kelly.gamma", self.gamma)?;
        positive("kelly.n", self.n)?;
        if !(self.lambda_kelly > 0.0 && self.lambda_kelly <= 1.0) {
            return Err(SizingError::InvalidParam {
                field: "kelly.lambda_kelly",
                reason: format!("must be in (0, 1], got {}", self.lambda_kelly),
            });
        }
        if !(0.0..=1.0).contains(&self.baseline_fraction) {
            return Err(SizingError::InvalidParam {
                field: "kelly.baseline_fraction",
                reason: format!("must be in [0, 1], got {}", self.baseline_fraction),
            });
        }
        nonnegative("kelly.f_star_epsilon", self.f_star_epsilon)
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), SizingError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SizingError::InvalidParam { field, reason: format!("must be positive, got {v}") })
    }
}

fn nonnegative(field: &'static str, v: f64) -> Result<(), SizingError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SizingError::InvalidParam { field, reason: format!("must be >= 0, got {v}") })
    }
}

/// Training-window moments of the unit-notional sleeve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainMoments {
    pub mu: f64,
    pub sigma: f64,
    pub mu_u: f64,
    pub sigma_u: f64,
}

/// One-step-ahead variance forecasts. `out[0]` is the seed; `out[t + 1]` is the
/// forecast made after observing `returns[t]`.
pub fn ewma_variance(returns: &[f64], theta: f64, seed_variance: f64) -> Result<Vec<f64>, SizingError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(SizingError::InvalidTheta(theta));
    }
    nonnegative("seed_variance", seed_variance)?;
    let mut out = Vec::with_capacity(returns.len() + 1);
    let mut v = seed_variance;
    out.push(v);
    for r in returns {
        v = theta * v + (1.0 - theta) * r * r;
        out.push(v);
    }
    Ok(out)
}

/// `min(W_max, σ*/σ̂)`; a zero forecast maps to the cap.
pub fn vol_target_weight(sigma_hat: f64, params: &VolParams) -> f64 {
    let target = params.daily_target();
    if sigma_hat <= 0.0 {
        return params.max_leverage;
    }
    (target / sigma_hat).min(params.max_leverage)
}

/// Long-only: the budget share `(p − 0.5)/0.5` is clamped at zero.
pub fn confidence_weight(w_vol: f64, p_bull: f64) -> f64 {
    w_vol * ((p_bull - 0.5) / 0.5).clamp(0.0, 1.0)
}

pub fn growth_rate(f: f64, mu: f64, sigma: f64, k: f64, gamma: f64, n: f64) -> f64 {
    mu * f - 0.5 * sigma * sigma * f * f - n * k * f - gamma * (n * f).powf(1.5)
}

/// Argmax over `f >= 0` of [`growth_rate`].
pub fn friction_kelly(mu: f64, sigma: f64, k: f64, gamma: f64, n: f64) -> f64 {
    let edge = mu - n * k;
    if !(edge > 0.0) {
        return 0.0;
    }
    let s2 = sigma * sigma;
    let b = 3.0 * gamma * n.powf(1.5);
    let disc = b * b + 16.0 * s2 * edge;
    // (−b + √D)/(4σ²) rewritten to avoid cancellation when b² ≫ 16σ²·edge
    let x = 4.0 * edge / (b + disc.sqrt());
    x * x
}

pub fn kelly_fraction(moments: &TrainMoments, params: &KellyParams) -> f64 {
    friction_kelly(moments.mu, moments.sigma, params.k, params.gamma, params.n)
}

/// Combines the layers into the executable weight magnitude.
///
/// With a usable Kelly estimate this is `min(W_max, λ_Kelly · f* · w_conf)`.
/// When `f*` is at or below `f_star_epsilon` and the entry gate is active, the
/// baseline allocation applies instead.
pub fn final_weight(f_star: f64, w_conf: f64, w_vol: f64, gate_active: bool, kelly: &KellyParams, vol: &VolParams) -> f64 {
    let w = if f_star <= kelly.f_star_epsilon {
        if !gate_active {
            0.0
        } else {
            match kelly.baseline_base {
                BaselineBase::Confidence => kelly.baseline_fraction * w_conf,
                BaselineBase::Volatility => kelly.baseline_fraction * w_vol,
            }
        }
    } else {
        kelly.lambda_kelly * f_star * w_conf
    };
    w.clamp(0.0, vol.max_leverage)
}
