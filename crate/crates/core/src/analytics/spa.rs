//! Hansen's test for superior predictive ability over a grid of candidates.
//!
//! Performance differentials are `candidate − benchmark` daily returns, so a
//! larger mean is better. Variances come from the stationary bootstrap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stationary_indices, stream_rng, AnalyticsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaResult {
    /// Consistent p-value.
    pub p_value: f64,
    pub p_lower: f64,
    pub p_upper: f64,
    pub statistic: f64,
    pub statistic_type: String,
    pub num_configs: usize,
    /// Candidates dropped because they never differ from the benchmark.
    pub num_excluded: usize,
    /// Candidate with the largest studentized mean differential.
    pub best_config: Option<usize>,
    pub resamples: usize,
    pub block_length: f64,
    pub seed: u64,
}

pub fn spa_test(
    candidates: &[Vec<f64>],
    benchmark: &[f64],
    resamples: usize,
    block_length: f64,
    seed: u64,
) -> Result<SpaResult, AnalyticsError> {
    if candidates.len() < 2 {
        return Err(AnalyticsError::Invalid(format!("need at least 2 candidate configs, got {}", candidates.len())));
    }
    if resamples == 0 || block_length < 1.0 {
        return Err(AnalyticsError::Invalid("resamples must be positive and block_length >= 1".into()));
    }
    let n = benchmark.len();
    if n < 3 {
        return Err(AnalyticsError::TooShort { needed: 3, got: n });
    }
    let mut diffs: Vec<(usize, Vec<f64>)> = Vec::new();
    for (k, c) in candidates.iter().enumerate() {
        if c.len() != n {
            return Err(AnalyticsError::LengthMismatch(c.len(), n));
        }
        let d: Vec<f64> = c.iter().zip(benchmark).map(|(a, b)| a - b).collect();
        if d.iter().all(|&x| x == d[0]) {
            if d[0] != 0.0 {
                return Err(AnalyticsError::DegenerateLoss(k));
            }
            continue;
        }
        diffs.push((k, d));
    }
    let base = SpaResult {
        p_value: 1.0,
        p_lower: 1.0,
        p_upper: 1.0,
        statistic: 0.0,
        statistic_type: "studentized".into(),
        num_configs: candidates.len(),
        num_excluded: candidates.len() - diffs.len(),
        best_config: None,
        resamples,
        block_length,
        seed,
    };
    if diffs.is_empty() {
        return Ok(base);
    }

    let nf = n as f64;
    let d_bar: Vec<f64> = diffs.iter().map(|(_, d)| d.iter().sum::<f64>() / nf).collect();
    let boot: Vec<Vec<f64>> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let idx = stationary_indices(n, block_length, &mut rng);
            diffs.iter().map(|(_, d)| idx.iter().map(|&t| d[t]).sum::<f64>() / nf).collect()
        })
        .collect();

    let omega: Vec<f64> = (0..diffs.len())
        .map(|k| (nf * boot.iter().map(|m| (m[k] - d_bar[k]).powi(2)).sum::<f64>() / resamples as f64).sqrt())
        .collect();
    let stud: Vec<f64> = (0..diffs.len())
        .map(|k| if omega[k] > 0.0 { nf.sqrt() * d_bar[k] / omega[k] } else { 0.0 })
        .collect();
    let (best, best_t) = stud.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (k, &t)| if t > acc.1 { (k, t) } else { acc });
    let statistic = best_t.max(0.0);

    let threshold = -(2.0 * nf.ln().ln()).sqrt();
    let recenter = |k: usize, kind: u8| match kind {
        0 => d_bar[k].max(0.0),
        1 => {
            if stud[k] >= threshold {
                d_bar[k]
            } else {
                0.0
            }
        }
        _ => d_bar[k],
    };
    let p_for = |kind: u8| {
        let centers: Vec<f64> = (0..diffs.len()).map(|k| recenter(k, kind)).collect();
        let hits = boot
            .iter()
            .filter(|m| {
                let t_star = (0..diffs.len())
                    .filter(|&k| omega[k] > 0.0)
                    .map(|k| nf.sqrt() * (m[k] - centers[k]) / omega[k])
                    .fold(0.0_f64, f64::max);
                t_star >= statistic
            })
            .count();
        hits as f64 / resamples as f64
    };

    Ok(SpaResult {
        p_value: p_for(1),
        p_lower: p_for(0),
        p_upper: p_for(2),
        statistic,
        best_config: Some(diffs[best].0),
        ..base
    })
}
