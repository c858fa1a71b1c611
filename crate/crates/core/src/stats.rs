//! Survey-weighted summary statistics.
//!
//! All quantiles in the crate share one convention: sort the distinct
//! values, accumulate normalized weight, and return the midpoint between
//! the two distinct values that straddle the target cumulative share when
//! the target falls exactly on a boundary; when the target falls strictly
//! inside a value's mass, return that value.

use crate::error::{Error, Result};

/// Relative tolerance for deciding that a cumulative share hits a target.
pub const CUMULATIVE_TOL: f64 = 1e-12;

pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (v, w) in values.iter().zip(weights) {
        num += w * v;
        den += w;
    }
    (den > 0.0).then(|| num / den)
}

/// Weighted population variance (normalized by total weight).
pub fn weighted_variance(values: &[f64], weights: &[f64]) -> Option<f64> {
    let mean = weighted_mean(values, weights)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (v, w) in values.iter().zip(weights) {
        num += w * (v - mean).powi(2);
        den += w;
    }
    Some(num / den)
}

pub fn weighted_sd(values: &[f64], weights: &[f64]) -> Option<f64> {
    weighted_variance(values, weights).map(f64::sqrt)
}

/// Distinct sorted values with their normalized cumulative weight shares.
fn cumulative_masses(values: &[f64], weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.is_empty() {
        return Err(Error::Domain("quantile of an empty sample".into()));
    }
    if values.len() != weights.len() {
        return Err(Error::Domain("values and weights differ in length".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in quantile input".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Domain("weights must be finite and nonnegative".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Domain("total weight is zero".into()));
    }
    let mut distinct = Vec::new();
    let mut cumulative = Vec::new();
    let mut running = 0.0;
    for i in order {
        running += weights[i];
        if distinct.last() == Some(&values[i]) {
            *cumulative.last_mut().unwrap() = running / total;
        } else {
            distinct.push(values[i]);
            cumulative.push(running / total);
        }
    }
    *cumulative.last_mut().unwrap() = 1.0;
    Ok((distinct, cumulative))
}

/// Weighted quantile under the midpoint convention described in the module
/// docs. With `target = 1` the result lies strictly above the maximum, so a
/// strict `value < q` test selects everything.
pub fn weighted_quantile(values: &[f64], weights: &[f64], target: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::Domain(format!("quantile target {target} outside [0, 1]")));
    }
    let (distinct, cumulative) = cumulative_masses(values, weights)?;
    let k = distinct.len();
    let j = cumulative
        .iter()
        .position(|c| *c >= target - CUMULATIVE_TOL)
        .unwrap_or(k - 1);
    let on_boundary = (cumulative[j] - target).abs() <= CUMULATIVE_TOL && target > 0.0;
    if !on_boundary {
        return Ok(distinct[j]);
    }
    if j + 1 < k {
        Ok(0.5 * (distinct[j] + distinct[j + 1]))
    } else {
        let top = distinct[k - 1];
        Ok(if top < 1.0 { 0.5 * (top + 1.0) } else { top + top.abs().max(1.0) * f64::EPSILON * 4.0 })
    }
}

/// Weighted share of observations strictly below `cutoff`.
pub fn share_below(values: &[f64], weights: &[f64], cutoff: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let below: f64 = values
        .iter()
        .zip(weights)
        .filter(|(v, _)| **v < cutoff)
        .map(|(_, w)| *w)
        .sum();
    below / total
}

/// Unweighted Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Box-plot statistics with Tukey whiskers: the whiskers end at the most
/// extreme observations within 1.5 IQR of the quartiles.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct BoxStats {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub n_outliers: usize,
}

pub fn box_stats(values: &[f64], weights: &[f64]) -> Result<BoxStats> {
    let q1 = weighted_quantile(values, weights, 0.25)?;
    let median = weighted_quantile(values, weights, 0.5)?;
    let q3 = weighted_quantile(values, weights, 0.75)?;
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let mut whisker_low = f64::INFINITY;
    let mut whisker_high = f64::NEG_INFINITY;
    let mut n_outliers = 0;
    for &v in values {
        if v < lo_fence || v > hi_fence {
            n_outliers += 1;
        } else {
            whisker_low = whisker_low.min(v);
            whisker_high = whisker_high.max(v);
        }
    }
    Ok(BoxStats { n: values.len(), q1, median, q3, whisker_low, whisker_high, n_outliers })
}
