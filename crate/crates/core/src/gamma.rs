//! Method-of-moments gamma calibration and the survival probability.
//!
//! Parameterized by shape `alpha` and scale `beta`, so that
//! `alpha * beta` is the mean and `alpha * beta^2` the variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::incomplete_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!(
                "gamma parameters must be positive and finite (alpha={alpha}, beta={beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha * self.beta
    }

    pub fn variance(&self) -> f64 {
        self.alpha * self.beta * self.beta
    }
}

/// Shape and scale matching a given mean and variance:
/// `alpha = mean² / variance`, `beta = variance / mean`.
pub fn gamma_from_moments(mean: f64, variance: f64) -> Result<GammaParams> {
    if !(mean > 0.0 && mean.is_finite()) || !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::Domain(format!(
            "moments must be strictly positive (mean={mean}, variance={variance})"
        )));
    }
    GammaParams::new(mean * mean / variance, variance / mean)
}

/// Pr(W ≥ threshold) for W ~ Gamma(alpha, beta).
pub fn gamma_survival(threshold: f64, params: GammaParams) -> Result<f64> {
    if threshold.is_nan() {
        return Err(Error::Domain("survival threshold is NaN".into()));
    }
    if threshold <= 0.0 {
        return Ok(1.0);
    }
    let (_, q) = incomplete_gamma(params.alpha, threshold / params.beta)?;
    Ok(q.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_to_params() {
        let g = gamma_from_moments(300.0, 22_500.0).unwrap();
        assert_eq!((g.alpha, g.beta), (4.0, 75.0));
        let g = gamma_from_moments(7.5, 7.5).unwrap();
        assert!((g.alpha - 7.5).abs() < 1e-15 && (g.beta - 1.0).abs() < 1e-15);
        let g = gamma_from_moments(2.0, 2.0).unwrap();
        assert_eq!((g.alpha, g.beta), (2.0, 1.0));
        assert_eq!(g.mean(), 2.0);
        assert!(gamma_from_moments(0.0, 1.0).is_err());
        assert!(gamma_from_moments(1.0, -1.0).is_err());
    }

    #[test]
    fn survival_fixed_points() {
        let exp1 = GammaParams::new(1.0, 1.0).unwrap();
        assert_eq!(gamma_survival(0.0, exp1).unwrap(), 1.0);
        assert!((gamma_survival(2f64.ln(), exp1).unwrap() - 0.5).abs() < 1e-15);
        let g2 = GammaParams::new(2.0, 1.0).unwrap();
        assert!((gamma_survival(1.0, g2).unwrap() - 0.735_759).abs() < 1e-6);
        assert!(gamma_survival(1e-300, g2).unwrap() > 1.0 - 1e-12);
    }
}
