//! Growth-versus-participation curve, zero-growth capacity and the AUM mapping.

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::sizing::{friction_kelly, growth_rate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityInputs {
    pub mu_u: f64,
    pub sigma_u: f64,
    pub k: f64,
    pub gamma: f64,
    pub n: f64,
}

impl CapacityInputs {
    pub fn growth(&self, l: f64) -> f64 {
        growth_rate(l, self.mu_u, self.sigma_u, self.k, self.gamma, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub inputs: CapacityInputs,
    pub l_star: f64,
    pub g_star: f64,
    pub l_max: f64,
    /// `(L, g(L))` pairs starting at the origin.
    pub curve: Vec<(f64, f64)>,
    pub adv_dollars: Option<f64>,
    pub mean_abs_turnover: Option<f64>,
    pub aum_max: Option<f64>,
    pub reference_l_max: Option<f64>,
    pub divergence_note: Option<String>,
}

impl CapacityResult {
    pub fn with_aum(mut self, adv_dollars: f64, mean_abs_turnover: f64) -> Result<Self, AnalyticsError> {
        self.aum_max = Some(aum_mapping(self.l_max, adv_dollars, mean_abs_turnover)?);
        self.adv_dollars = Some(adv_dollars);
        self.mean_abs_turnover = Some(mean_abs_turnover);
        Ok(self)
    }

    /// Records an externally quoted root and a note when it disagrees by more than 1%.
    pub fn with_reference(mut self, reference_l_max: f64) -> Self {
        let rel = (reference_l_max - self.l_max) / self.l_max;
        self.reference_l_max = Some(reference_l_max);
        self.divergence_note = (rel.abs() > 0.01).then(|| {
            format!(
                "computed zero-growth root {:.4e} differs from reference {:.4e} by {:+.1}%",
                self.l_max,
                reference_l_max,
                rel * 100.0
            )
        });
        self
    }
}

/// Evaluates `g(L)` on `grid` and solves for the growth-optimal and zero-growth points.
pub fn capacity_curve(inputs: CapacityInputs, grid: &[f64]) -> Result<CapacityResult, AnalyticsError> {
    if !(inputs.sigma_u > 0.0) || inputs.k < 0.0 || inputs.gamma < 0.0 || !(inputs.n > 0.0) {
        return Err(AnalyticsError::Invalid("sigma_u and n must be positive; k and gamma nonnegative".into()));
    }
    if grid.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(AnalyticsError::Invalid("participation grid must be finite and nonnegative".into()));
    }
    let drag = inputs.n * inputs.k;
    if inputs.mu_u <= drag {
        return Err(AnalyticsError::NoPositiveBranch { mu_u: inputs.mu_u, drag });
    }
    let l_star = friction_kelly(inputs.mu_u, inputs.sigma_u, inputs.k, inputs.gamma, inputs.n);

    let mut lo = l_star;
    let mut hi = 2.0 * l_star;
    while inputs.growth(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if inputs.growth(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l_max = if inputs.growth(lo).abs() <= inputs.growth(hi).abs() { lo } else { hi };

    let mut curve = vec![(0.0, 0.0)];
    curve.extend(grid.iter().filter(|&&l| l > 0.0).map(|&l| (l, inputs.growth(l))));
    Ok(CapacityResult {
        inputs,
        l_star,
        g_star: inputs.growth(l_star),
        l_max,
        curve,
        adv_dollars: None,
        mean_abs_turnover: None,
        aum_max: None,
        reference_l_max: None,
        divergence_note: None,
    })
}

/// Evenly spaced participation grid on `[0, upper]`.
pub fn linear_grid(upper: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| upper * i as f64 / (points - 1).max(1) as f64).collect()
}

/// Dollar capacity implied by a participation limit.
pub fn aum_mapping(l_max: f64, adv_dollars: f64, mean_abs_turnover: f64) -> Result<f64, AnalyticsError> {
    if !(l_max > 0.0 && adv_dollars > 0.0 && mean_abs_turnover > 0.0) {
        return Err(AnalyticsError::Invalid("l_max, adv_dollars and mean_abs_turnover must be positive".into()));
    }
    Ok(l_max * adv_dollars / mean_abs_turnover)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: CapacityInputs = CapacityInputs { mu_u: 1e-4, sigma_u: 5.7e-4, k: 7e-5, gamma: 0.02, n: 1.0 };

    #[test]
    fn root_and_origin() {
        let r = capacity_curve(BASE, &linear_grid(4e-6, 9)).unwrap();
        assert_eq!(r.curve[0], (0.0, 0.0));
        assert!(r.l_max >= r.l_star);
        assert!(BASE.growth(r.l_max).abs() <= 1e-12 * BASE.mu_u * r.l_max);
        assert!(r.l_max > 2.0e-6 && r.l_max < 3.5e-6);
    }

    #[test]
    fn no_edge() {
        let inputs = CapacityInputs { mu_u: 7e-5, ..BASE };
        assert!(matches!(capacity_curve(inputs, &[1e-6]), Err(AnalyticsError::NoPositiveBranch { .. })));
    }

    #[test]
    fn aum_linear() {
        assert!((aum_mapping(1e-3, 5e10, 0.066).unwrap() - 7.5758e8).abs() < 1e5);
        assert_eq!(aum_mapping(2e-6, 1e9, 1.0).unwrap(), 2e-6 * 1e9);
        assert_eq!(aum_mapping(2e-6, 2e9, 0.5).unwrap(), 2.0 * aum_mapping(2e-6, 1e9, 0.5).unwrap());
    }
}
