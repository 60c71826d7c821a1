//! Regime signal: EMA-smoothed log price, standardized slope, clipped trend
//! probability and a K-day momentum bit blended into `p_bull`.
//!
//! Every value at day `t` depends only on closes up to `t`.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{log_prices, PriceSeries};

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("signal.lambda_ema must be in (0, 1), got {0}")]
    InvalidLambda(f64),
    #[error("signal.{field} {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("degenerate training window: slope standard deviation is zero")]
    DegenerateTraining,
    #[error("momentum undefined during warm-up")]
    UndefinedMomentum,
    #[error("empty input")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalParams {
    pub lambda_ema: f64,
    pub momentum_window: usize,
    pub omega: f64,
    pub clip_bound: f64,
    pub activation_threshold: f64,
}

impl Default for SignalParams {
    fn default() -> Self {
        Self { lambda_ema: 0.94, momentum_window: 50, omega: 0.6, clip_bound: 3.0, activation_threshold: 0.52 }
    }
}

impl SignalParams {
    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.lambda_ema > 0.0 && self.lambda_ema < 1.0) {
            return Err(SignalError::InvalidLambda(self.lambda_ema));
        }
        if self.momentum_window < 1 {
            return Err(SignalError::InvalidParam { field: "momentum_window", reason: "must be >= 1".into() });
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(SignalError::InvalidParam {
                field: "omega",
                reason: format!("must be in [0, 1], got {}", self.omega),
            });
        }
        if !(self.clip_bound > 0.0 && self.clip_bound.is_finite()) {
            return Err(SignalError::InvalidParam {
                field: "clip_bound",
                reason: format!("must be positive, got {}", self.clip_bound),
            });
        }
        if !(self.activation_threshold > 0.5 && self.activation_threshold <= 1.0) {
            return Err(SignalError::InvalidParam {
                field: "activation_threshold",
                reason: format!("must be in (0.5, 1], got {}", self.activation_threshold),
            });
        }
        Ok(())
    }
}

/// Slope moments from the training window. Population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub mu_train: f64,
    pub sigma_train: f64,
}

impl TrainStats {
    pub fn from_slopes(slopes: &[f64]) -> Result<Self, SignalError> {
        if slopes.is_empty() {
            return Err(SignalError::Empty);
        }
        let n = slopes.len() as f64;
        let mu = slopes.iter().sum::<f64>() / n;
        let var = slopes.iter().map(|s| (s - mu).powi(2)).sum::<f64>() / n;
        let sigma = var.sqrt();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(SignalError::DegenerateTraining);
        }
        Ok(Self { mu_train: mu, sigma_train: sigma })
    }

    /// Smooths the training closes with `lambda_ema` and takes moments of the
    /// one-step slopes.
    pub fn fit(train: &PriceSeries, lambda_ema: f64) -> Result<Self, SignalError> {
        let y: Vec<f64> = log_prices(train).into_iter().map(|(_, v)| v).collect();
        let smooth = ema_smooth(&y, lambda_ema)?;
        Self::from_slopes(&first_differences(&smooth))
    }
}

/// `s_t = λ s_{t-1} + (1-λ) y_t`, `s_0 = y_0`.
pub fn ema_smooth(y: &[f64], lambda_ema: f64) -> Result<Vec<f64>, SignalError> {
    if !(lambda_ema > 0.0 && lambda_ema < 1.0) {
        return Err(SignalError::InvalidLambda(lambda_ema));
    }
    let Some(&first) = y.first() else {
        return Err(SignalError::Empty);
    };
    let mut out = Vec::with_capacity(y.len());
    let mut s = first;
    out.push(s);
    for &v in &y[1..] {
        s = lambda_ema * s + (1.0 - lambda_ema) * v;
        out.push(s);
    }
    Ok(out)
}

pub fn first_differences(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn standardize_slope(slope: &[f64], stats: &TrainStats) -> Result<Vec<f64>, SignalError> {
    if !(stats.sigma_train > 0.0) {
        return Err(SignalError::DegenerateTraining);
    }
    Ok(slope.iter().map(|s| (s - stats.mu_train) / stats.sigma_train).collect())
}

/// Clip to [-3, 3] and map affinely onto [0, 1].
pub fn trend_probability(z: f64) -> f64 {
    clipped_probability(z, 3.0)
}

fn clipped_probability(z: f64, bound: f64) -> f64 {
    (z.clamp(-bound, bound) + bound) / (2.0 * bound)
}

/// `Some(P_t / P_{t-K} > 1)` for `t >= K`, `None` during warm-up.
pub fn momentum_indicator(series: &PriceSeries, k: usize) -> Vec<Option<bool>> {
    let closes = series.closes();
    (0..closes.len())
        .map(|t| (t >= k && k > 0).then(|| closes[t] / closes[t - k] > 1.0))
        .collect()
}

/// Returns `(p_bull, p_bear)`.
pub fn blend_regime(p_trend: f64, momentum: Option<bool>, omega: f64) -> Result<(f64, f64), SignalError> {
    let m = momentum.ok_or(SignalError::UndefinedMomentum)?;
    let p_bull = omega * p_trend + (1.0 - omega) * if m { 1.0 } else { 0.0 };
    Ok((p_bull, 1.0 - p_bull))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalDay {
    pub date: NaiveDate,
    pub y_tilde: f64,
    /// One-step change of the smoothed log price; 0 on the first day.
    pub slope: f64,
    pub z: f64,
    pub p_trend: f64,
    pub momentum: Option<bool>,
    pub p_bull: Option<f64>,
    /// False until both the slope and the momentum bit are defined.
    pub tradeable: bool,
}

impl SignalDay {
    pub fn p_bear(&self) -> Option<f64> {
        self.p_bull.map(|p| 1.0 - p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSeries {
    pub days: Vec<SignalDay>,
}

impl SignalSeries {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["date", "y_tilde", "slope", "z", "p_trend", "momentum", "p_bull", "p_bear", "tradeable"])?;
        for d in &self.days {
            wtr.write_record([
                d.date.to_string(),
                d.y_tilde.to_string(),
                d.slope.to_string(),
                d.z.to_string(),
                d.p_trend.to_string(),
                d.momentum.map(|m| (m as u8).to_string()).unwrap_or_default(),
                d.p_bull.map(|p| p.to_string()).unwrap_or_default(),
                d.p_bear().map(|p| p.to_string()).unwrap_or_default(),
                d.tradeable.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn build_signal(series: &PriceSeries, params: &SignalParams, stats: &TrainStats) -> Result<SignalSeries, SignalError> {
    params.validate()?;
    if !(stats.sigma_train > 0.0) {
        return Err(SignalError::DegenerateTraining);
    }
    let y: Vec<f64> = log_prices(series).into_iter().map(|(_, v)| v).collect();
    let smooth = ema_smooth(&y, params.lambda_ema)?;
    let momentum = momentum_indicator(series, params.momentum_window);
    let warmup = params.momentum_window.max(1);

    let days = series
        .bars()
        .iter()
        .enumerate()
        .map(|(t, bar)| {
            let slope = if t == 0 { 0.0 } else { smooth[t] - smooth[t - 1] };
            let z = (slope - stats.mu_train) / stats.sigma_train;
            let p_trend = clipped_probability(z, params.clip_bound);
            let p_bull = blend_regime(p_trend, momentum[t], params.omega).ok().map(|(b, _)| b);
            SignalDay {
                date: bar.date,
                y_tilde: smooth[t],
                slope,
                z,
                p_trend,
                momentum: momentum[t],
                p_bull,
                tradeable: t >= warmup && p_bull.is_some(),
            }
        })
        .collect();
    Ok(SignalSeries { days })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::Bar;
    use proptest::prelude::*;

    fn series(closes: &[f64]) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let bars = closes.iter().enumerate().map(|(i, p)| Bar::flat(start + chrono::Days::new(i as u64), *p)).collect();
        PriceSeries::new(bars, "x").unwrap()
    }

    #[test]
    fn ema_hand_recursion() {
        assert_eq!(ema_smooth(&[0.0, 1.0], 0.5).unwrap(), vec![0.0, 0.5]);
    }

    #[test]
    fn ema_constant_fixed_point_and_small_lambda() {
        assert!(ema_smooth(&[2.5; 10], 0.9).unwrap().iter().all(|v| *v == 2.5));
        let y = [1.0, 3.0, -2.0, 7.0];
        let s = ema_smooth(&y, 1e-12).unwrap();
        for (a, b) in s.iter().zip(y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn ema_rejects_bad_lambda() {
        assert_eq!(ema_smooth(&[1.0], 1.0), Err(SignalError::InvalidLambda(1.0)));
        assert_eq!(ema_smooth(&[1.0], 0.0), Err(SignalError::InvalidLambda(0.0)));
        assert_eq!(ema_smooth(&[], 0.5), Err(SignalError::Empty));
    }

    #[test]
    fn standardize_centering_and_guard() {
        let st = TrainStats { mu_train: 0.3, sigma_train: 2.0 };
        assert_eq!(standardize_slope(&[0.3], &st).unwrap(), vec![0.0]);
        let bad = TrainStats { mu_train: 0.0, sigma_train: 0.0 };
        assert_eq!(standardize_slope(&[1.0], &bad), Err(SignalError::DegenerateTraining));
        assert_eq!(TrainStats::from_slopes(&[1.0, 1.0]), Err(SignalError::DegenerateTraining));
    }

    #[test]
    fn standardize_matches_two_pass_moments() {
        let slopes: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64 - 50.0) * 1e-4).collect();
        let st = TrainStats::from_slopes(&slopes).unwrap();
        // independent: sum of squares expansion
        let n = slopes.len() as f64;
        let mean = slopes.iter().fold(0.0, |a, b| a + b) / n;
        let ss: f64 = slopes.iter().map(|x| x * x).sum::<f64>() / n - mean * mean;
        let z = standardize_slope(&slopes, &st).unwrap();
        for (zi, s) in z.iter().zip(&slopes) {
            assert!((zi - (s - mean) / ss.sqrt()).abs() < 1e-9);
        }
        let zbar = z.iter().sum::<f64>() / n;
        assert!(zbar.abs() < 1e-12);
    }

    #[test]
    fn trend_probability_points() {
        assert_eq!(trend_probability(0.0), 0.5);
        assert_eq!(trend_probability(3.0), 1.0);
        assert_eq!(trend_probability(-3.0), 0.0);
        assert_eq!(trend_probability(10.0), 1.0);
    }

    #[test]
    fn momentum_cases() {
        let mut closes = vec![100.0; 51];
        closes[50] = 101.0;
        let m = momentum_indicator(&series(&closes), 50);
        assert!(m[..50].iter().all(Option::is_none));
        assert_eq!(m[50], Some(true));
        closes[50] = 100.0;
        assert_eq!(momentum_indicator(&series(&closes), 50)[50], Some(false));
        let rising: Vec<f64> = (1..80).map(|i| i as f64).collect();
        assert!(momentum_indicator(&series(&rising), 10).iter().flatten().all(|m| *m));
    }

    #[test]
    fn blend_cases() {
        assert_eq!(blend_regime(1.0, Some(true), 0.37).unwrap().0, 1.0);
        let (b, r) = blend_regime(0.5, Some(false), 0.6).unwrap();
        assert!((b - 0.30).abs() < 1e-15);
        assert_eq!(b + r, 1.0);
        assert_eq!(blend_regime(0.5, None, 0.6), Err(SignalError::UndefinedMomentum));
    }

    #[test]
    fn flat_prices_give_constant_signal() {
        let st = TrainStats { mu_train: 1e-4, sigma_train: 1e-3 };
        let params = SignalParams { momentum_window: 5, ..Default::default() };
        let sig = build_signal(&series(&[50.0; 20]), &params, &st).unwrap();
        for d in &sig.days[1..] {
            assert!((d.z + 0.1).abs() < 1e-12);
        }
        assert!(sig.days[..5].iter().all(|d| d.momentum.is_none() && !d.tradeable));
        assert!(sig.days[5..].iter().all(|d| d.momentum == Some(false) && d.tradeable));
        let p = sig.days[5].p_bull.unwrap();
        assert!(sig.days[5..].iter().all(|d| d.p_bull == Some(p)));
    }

    #[test]
    fn ramp_slope_closed_form_and_limit() {
        // y_t = a t  =>  slope_t = a (1 - λ^t)
        let a = 0.002;
        let lambda = 0.9;
        let closes: Vec<f64> = (0..300).map(|t| (a * t as f64).exp()).collect();
        let st = TrainStats { mu_train: 0.0, sigma_train: 5e-4 };
        let params = SignalParams { lambda_ema: lambda, ..Default::default() };
        let sig = build_signal(&series(&closes), &params, &st).unwrap();
        for (t, d) in sig.days.iter().enumerate().skip(1) {
            let expected = a * (1.0 - lambda.powi(t as i32));
            assert!((d.slope - expected).abs() < 1e-12, "t={t}");
        }
        let last = sig.days.last().unwrap();
        assert!((last.p_bull.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn appending_days_leaves_prefix_identical() {
        let closes: Vec<f64> = (0..120).map(|i| 100.0 + ((i * 7919) % 13) as f64 - 6.0 + i as f64 * 0.1).collect();
        let st = TrainStats { mu_train: 0.0, sigma_train: 0.01 };
        let p = SignalParams::default();
        let full = build_signal(&series(&closes), &p, &st).unwrap();
        let part = build_signal(&series(&closes[..70]), &p, &st).unwrap();
        assert_eq!(&full.days[..70], &part.days[..]);
    }

    #[test]
    fn invalid_params_named() {
        let p = SignalParams { lambda_ema: 1.5, ..Default::default() };
        assert!(p.validate().unwrap_err().to_string().contains("lambda_ema"));
        let p = SignalParams { activation_threshold: 0.5, ..Default::default() };
        assert!(p.validate().unwrap_err().to_string().contains("activation_threshold"));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let st = TrainStats { mu_train: 0.0, sigma_train: 1.0 };
        let sig = build_signal(&series(&[1.0, 2.0, 3.0]), &SignalParams { momentum_window: 1, ..Default::default() }, &st).unwrap();
        let mut buf = Vec::new();
        sig.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("date,y_tilde"));
    }

    proptest! {
        #[test]
        fn probabilities_bounded_and_monotone(z1 in -50.0f64..50.0, z2 in -50.0f64..50.0, w in 0.0f64..=1.0, m in any::<bool>()) {
            let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
            let (pl, ph) = (trend_probability(lo), trend_probability(hi));
            prop_assert!(pl <= ph);
            prop_assert!((0.0..=1.0).contains(&pl) && (0.0..=1.0).contains(&ph));
            let (bl, _) = blend_regime(pl, Some(m), w).unwrap();
            let (bh, bear) = blend_regime(ph, Some(m), w).unwrap();
            prop_assert!(bl <= bh + 1e-15);
            prop_assert!((0.0..=1.0).contains(&bh) && (0.0..=1.0).contains(&bear));
            let (b0, _) = blend_regime(ph, Some(false), w).unwrap();
            let (b1, _) = blend_regime(ph, Some(true), w).unwrap();
            prop_assert!(b0 <= b1);
        }

        #[test]
        fn prefix_causality(steps in prop::collection::vec(-0.03f64..0.03, 60..150), cut in 1usize..60) {
            let mut p = 100.0;
            let closes: Vec<f64> = steps.iter().map(|s| { p *= 1.0 + s; p }).collect();
            let st = TrainStats { mu_train: 0.0, sigma_train: 0.004 };
            let params = SignalParams { momentum_window: 20, ..Default::default() };
            let full = build_signal(&series(&closes), &params, &st).unwrap();
            let part = build_signal(&series(&closes[..cut]), &params, &st).unwrap();
            prop_assert_eq!(&full.days[..cut], &part.days[..]);
        }
    }
}
