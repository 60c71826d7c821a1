//! OLS of strategy returns on a benchmark with Newey-West (Bartlett) standard errors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{mean, sample_std, AnalyticsError, TRADING_DAYS};

const MIN_OBS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub n: usize,
    pub alpha_daily: f64,
    pub alpha_annual: f64,
    pub beta: f64,
    /// Loading on the optional second regressor.
    pub extra_beta: Option<f64>,
    pub se_alpha: f64,
    pub se_beta: f64,
    /// `None` when the standard error is exactly zero.
    pub t_alpha: Option<f64>,
    pub t_beta: Option<f64>,
    pub t_extra: Option<f64>,
    pub p_alpha: Option<f64>,
    pub p_beta: Option<f64>,
    pub r_squared: f64,
    /// Annualized residual volatility.
    pub tracking_error: f64,
    pub information_ratio: Option<f64>,
    pub hac_lags: usize,
}

/// Single-factor regression `strategy = alpha + beta * benchmark + e`.
pub fn capm_regression(strategy: &[f64], benchmark: &[f64], hac_lags: usize) -> Result<RegressionResult, AnalyticsError> {
    regress_hac(strategy, benchmark, None, hac_lags)
}

/// Same as [`capm_regression`] with one optional extra regressor.
pub fn regress_hac(
    strategy: &[f64],
    benchmark: &[f64],
    extra: Option<&[f64]>,
    hac_lags: usize,
) -> Result<RegressionResult, AnalyticsError> {
    let n = strategy.len();
    if benchmark.len() != n {
        return Err(AnalyticsError::LengthMismatch(n, benchmark.len()));
    }
    if let Some(x) = extra {
        if x.len() != n {
            return Err(AnalyticsError::LengthMismatch(n, x.len()));
        }
    }
    if n < MIN_OBS {
        return Err(AnalyticsError::TooShort { needed: MIN_OBS, got: n });
    }
    if sample_std(benchmark) == 0.0 {
        return Err(AnalyticsError::DegenerateBenchmark);
    }

    let mut cols: Vec<&[f64]> = vec![benchmark];
    cols.extend(extra);
    let k = cols.len();

    // slopes from centered normal equations, intercept from the means
    let y_bar = mean(strategy);
    let x_bar: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let xc = DMatrix::from_fn(n, k, |t, j| cols[j][t] - x_bar[j]);
    let yc = DVector::from_fn(n, |t, _| strategy[t] - y_bar);
    let slopes = (xc.transpose() * &xc)
        .lu()
        .solve(&(xc.transpose() * yc))
        .ok_or(AnalyticsError::DegenerateBenchmark)?;
    let alpha = y_bar - (0..k).map(|j| slopes[j] * x_bar[j]).sum::<f64>();

    let x = DMatrix::from_fn(n, k + 1, |t, j| if j == 0 { 1.0 } else { cols[j - 1][t] });
    let resid: Vec<f64> = (0..n)
        .map(|t| strategy[t] - alpha - (0..k).map(|j| slopes[j] * cols[j][t]).sum::<f64>())
        .collect();

    let xtx_inv = (x.transpose() * &x).try_inverse().ok_or(AnalyticsError::DegenerateBenchmark)?;
    let scores: Vec<DVector<f64>> = (0..n).map(|t| x.row(t).transpose() * resid[t]).collect();
    let mut s = DMatrix::zeros(k + 1, k + 1);
    for g in &scores {
        s += g * g.transpose();
    }
    for l in 1..=hac_lags.min(n - 1) {
        let w = 1.0 - l as f64 / (hac_lags as f64 + 1.0);
        let mut gamma = DMatrix::zeros(k + 1, k + 1);
        for t in l..n {
            gamma += &scores[t] * scores[t - l].transpose();
        }
        s += (&gamma + gamma.transpose()) * w;
    }
    let cov = &xtx_inv * s * &xtx_inv;
    let se: Vec<f64> = (0..=k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let coef: Vec<f64> = std::iter::once(alpha).chain(slopes.iter().copied()).collect();
    let t: Vec<Option<f64>> = (0..=k).map(|j| (se[j] > 0.0).then(|| coef[j] / se[j])).collect();
    let normal = Normal::standard();
    let p = |t: Option<f64>| t.map(|v| 2.0 * (1.0 - normal.cdf(v.abs())));

    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let sst: f64 = strategy.iter().map(|v| (v - y_bar).powi(2)).sum();
    let tracking_error = sample_std(&resid) * TRADING_DAYS.sqrt();
    let alpha_annual = alpha * TRADING_DAYS;

    Ok(RegressionResult {
        n,
        alpha_daily: alpha,
        alpha_annual,
        beta: slopes[0],
        extra_beta: (k > 1).then(|| slopes[1]),
        se_alpha: se[0],
        se_beta: se[1],
        t_alpha: t[0],
        t_beta: t[1],
        t_extra: if k > 1 { t[2] } else { None },
        p_alpha: p(t[0]),
        p_beta: p(t[1]),
        r_squared: if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 },
        tracking_error,
        information_ratio: (tracking_error > 0.0).then(|| alpha_annual / tracking_error),
        hac_lags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_recovered() {
        let b: Vec<f64> = (0..100).map(|i| ((i * 37 % 17) as f64 - 8.0) * 1e-3).collect();
        let s: Vec<f64> = b.iter().map(|x| 1e-4 + 0.5 * x).collect();
        let r = capm_regression(&s, &b, 5).unwrap();
        assert!((r.alpha_daily - 1e-4).abs() < 1e-12);
        assert!((r.beta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = vec![0.0; 40];
        assert_eq!(capm_regression(&s, &vec![1.0; 40], 5), Err(AnalyticsError::DegenerateBenchmark));
        assert_eq!(capm_regression(&s[..10], &s[..10], 5), Err(AnalyticsError::TooShort { needed: 30, got: 10 }));
        assert_eq!(capm_regression(&s, &s[..35], 5), Err(AnalyticsError::LengthMismatch(40, 35)));
    }

    #[test]
    fn zero_lags_is_white() {
        let b: Vec<f64> = (0..60).map(|i| ((i * 13 % 7) as f64 - 3.0) * 1e-3).collect();
        let s: Vec<f64> = (0..60).map(|i| b[i] * 0.2 + ((i * 5 % 11) as f64 - 5.0) * 1e-4).collect();
        let r = capm_regression(&s, &b, 0).unwrap();
        // White's estimator for the intercept with a single regressor, computed by hand
        let e: Vec<f64> = (0..60).map(|i| s[i] - r.alpha_daily - r.beta * b[i]).collect();
        let n = 60.0;
        let (sx, sxx) = (b.iter().sum::<f64>(), b.iter().map(|x| x * x).sum::<f64>());
        let det = n * sxx - sx * sx;
        let a = [sxx / det, -sx / det];
        let var: f64 = (0..60).map(|i| (a[0] + a[1] * b[i]).powi(2) * e[i] * e[i]).sum();
        assert!((r.se_alpha - var.sqrt()).abs() < 1e-12 * var.sqrt().max(1e-300) + 1e-18);
    }
}
