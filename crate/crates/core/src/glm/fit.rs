use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance below which a column counts as linearly dependent on
/// the columns before it.
pub const RANK_TOL: f64 = 1e-10;
pub const MAX_IRLS_ITER: usize = 100;
pub const BETA_TOL: f64 = 1e-10;
pub const DEVIANCE_TOL: f64 = 1e-12;
const MAX_ETA: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Log,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub coefficients: Vec<Coefficient>,
    pub dropped_columns: Vec<String>,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    pub link: Link,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r_squared: Option<f64>,
    /// Largest weighted quasi-score component, with each column scaled to
    /// unit maximum magnitude and the sum normalized by total weight.
    pub max_score: f64,
}

impl FittedModel {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients.iter().find(|c| c.name == name).map(|c| c.estimate)
    }

    pub fn names(&self) -> Vec<String> {
        self.coefficients.iter().map(|c| c.name.clone()).collect()
    }

    pub fn beta(&self) -> DVector<f64> {
        DVector::from_iterator(self.coefficients.len(), self.coefficients.iter().map(|c| c.estimate))
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, names: &[String]) -> Result<()> {
    if x.nrows() != y.len() || y.len() != w.len() {
        return Err(Error::Schema(format!(
            "design has {} rows, response {}, weights {}",
            x.nrows(),
            y.len(),
            w.len()
        )));
    }
    if names.len() != x.ncols() {
        return Err(Error::Schema(format!("{} column names for {} columns", names.len(), x.ncols())));
    }
    if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain("weights must be finite and nonnegative".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("design or response contains non-finite values".into()));
    }
    Ok(())
}

/// Indices of columns to keep. Columns are visited in order and a column
/// is dropped when its weighted component orthogonal to the kept columns is
/// below [`RANK_TOL`] relative to its own norm.
pub fn independent_columns(x: &DMatrix<f64>, w: &DVector<f64>) -> Vec<usize> {
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..x.ncols() {
        let mut v = DVector::from_iterator(x.nrows(), x.column(j).iter().zip(&sw).map(|(a, s)| a * s));
        let norm0 = v.norm();
        if norm0 == 0.0 {
            continue;
        }
        v /= norm0;
        // two passes of modified Gram-Schmidt for stability
        for _ in 0..2 {
            for q in &basis {
                let d = q.dot(&v);
                v.axpy(-d, q, 1.0);
            }
        }
        let r = v.norm();
        if r > RANK_TOL {
            basis.push(v / r);
            keep.push(j);
        }
    }
    keep
}

struct Reduced {
    x: DMatrix<f64>,
    scale: Vec<f64>,
    names: Vec<String>,
    dropped: Vec<String>,
}

fn reduce(x: &DMatrix<f64>, w: &DVector<f64>, names: &[String]) -> Reduced {
    let keep = independent_columns(x, w);
    let dropped = (0..x.ncols()).filter(|j| !keep.contains(j)).map(|j| names[j].clone()).collect();
    let mut xr = x.select_columns(keep.iter());
    let mut scale = Vec::with_capacity(keep.len());
    for mut col in xr.column_iter_mut() {
        let s = col.amax();
        let s = if s > 0.0 { s } else { 1.0 };
        col /= s;
        scale.push(s);
    }
    Reduced { x: xr, scale, names: keep.iter().map(|&j| names[j].clone()).collect(), dropped }
}

/// Solve (XᵀDX) b = XᵀD z.
fn weighted_solve(x: &DMatrix<f64>, d: &DVector<f64>, z: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut dx = x.clone();
    for (mut col, _) in dx.column_iter_mut().zip(0..) {
        col.component_mul_assign(d);
    }
    let xtdx = x.tr_mul(&dx);
    let rhs = dx.tr_mul(z);
    let chol = xtdx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("weighted normal equations are not positive definite".into()))?;
    Ok((chol.solve(&rhs), chol.inverse()))
}

fn poisson_deviance(y: &DVector<f64>, mu: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let mut d = 0.0;
    for i in 0..y.len() {
        let yi = y[i];
        let term = if yi > 0.0 { yi * (yi / mu[i]).ln() } else { 0.0 };
        d += w[i] * (term - (yi - mu[i]));
    }
    2.0 * d
}

fn exp_eta(x: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    (x * b).map(|e| e.min(MAX_ETA).exp())
}

/// Heteroskedasticity-robust standard errors of a Poisson quasi-MLE:
/// square roots of the diagonal of `A⁻¹ B A⁻¹` with `A = X'diag(wμ)X` and
/// `B = X'diag(w²(y-μ)²)X`.
fn sandwich_se(x: &DMatrix<f64>, y: &DVector<f64>, mu: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    let (_, a_inv) = weighted_solve(x, &w.component_mul(mu), &DVector::zeros(y.len()))?;
    let u = (y - mu).component_mul(w);
    let mut ux = x.clone();
    for mut col in ux.column_iter_mut() {
        col.component_mul_assign(&u);
    }
    let b = ux.tr_mul(&ux);
    let v = &a_inv * b * &a_inv;
    Ok(DVector::from_iterator(v.nrows(), (0..v.nrows()).map(|j| v[(j, j)].max(0.0).sqrt())))
}

/// Weighted Poisson quasi-maximum likelihood with log link, fit by
/// iteratively reweighted least squares.
///
/// Non-convergence is not an error: the model comes back with
/// `converged = false` and its diagnostics.
pub fn fit_poisson_qmle(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, names: &[String]) -> Result<FittedModel> {
    check_inputs(x, y, w, names)?;
    if y.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain("Poisson quasi-likelihood needs a nonnegative response".into()));
    }
    let total_w: f64 = w.sum();
    if total_w <= 0.0 {
        return Err(Error::Domain("total weight is zero".into()));
    }
    let red = reduce(x, w, names);
    let xs = &red.x;
    let p = xs.ncols();

    let ybar = w.dot(y) / total_w;
    let mut mu = y.map(|v| (v + ybar) / 2.0).map(|v| if v > 0.0 { v } else { 1e-8_f64.max(ybar * 1e-3) });
    let eta0 = mu.map(f64::ln);
    let (mut beta, _) = weighted_solve(xs, &w.component_mul(&mu), &(eta0 + (y - &mu).component_div(&mu)))?;
    mu = exp_eta(xs, &beta);
    let mut dev = poisson_deviance(y, &mu, w);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_IRLS_ITER {
        iterations += 1;
        let eta = xs * &beta;
        let z = &eta + (y - &mu).component_div(&mu);
        let (target, _) = weighted_solve(xs, &w.component_mul(&mu), &z)?;
        let mut step = &target - &beta;
        let mut new_beta = &beta + &step;
        let mut new_mu = exp_eta(xs, &new_beta);
        let mut new_dev = poisson_deviance(y, &new_mu, w);
        let mut halvings = 0;
        while !(new_dev.is_finite() && new_dev <= dev + 1e-12 * dev.abs().max(1.0)) && halvings < 40 {
            step /= 2.0;
            new_beta = &beta + &step;
            new_mu = exp_eta(xs, &new_beta);
            new_dev = poisson_deviance(y, &new_mu, w);
            halvings += 1;
        }
        let max_step = step.amax();
        let rel_dev = (dev - new_dev).abs() / new_dev.abs().max(1e-300);
        beta = new_beta;
        mu = new_mu;
        let old_dev = dev;
        dev = new_dev;
        if max_step < BETA_TOL || (rel_dev < DEVIANCE_TOL && old_dev.is_finite()) {
            converged = true;
            break;
        }
    }
    let score = xs.tr_mul(&w.component_mul(&(y - &mu))) / total_w;
    let se = if p > 0 { sandwich_se(xs, y, &mu, w).ok() } else { None };
    let coefficients = red
        .names
        .iter()
        .enumerate()
        .map(|(j, n)| Coefficient {
            name: n.clone(),
            estimate: beta[j] / red.scale[j],
            std_error: se.as_ref().map(|s| s[j] / red.scale[j]).filter(|v| v.is_finite()),
        })
        .collect();
    if p == 0 {
        converged = true;
    }
    Ok(FittedModel {
        coefficients,
        dropped_columns: red.dropped,
        n_obs: y.len(),
        converged,
        iterations,
        deviance: dev,
        link: Link::Log,
        r_squared: None,
        max_score: score.amax(),
    })
}

/// Weighted least squares with classic standard errors and R².
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, names: &[String]) -> Result<FittedModel> {
    check_inputs(x, y, w, names)?;
    let total_w: f64 = w.sum();
    if total_w <= 0.0 {
        return Err(Error::Domain("total weight is zero".into()));
    }
    let red = reduce(x, w, names);
    let xs = &red.x;
    let p = xs.ncols();
    let (beta, inv) = if p > 0 {
        weighted_solve(xs, w, y)?
    } else {
        (DVector::zeros(0), DMatrix::zeros(0, 0))
    };
    // one refinement step on the residual tightens exact fits
    let beta = if p > 0 {
        let r = y - xs * &beta;
        beta + weighted_solve(xs, w, &r)?.0
    } else {
        beta
    };
    let resid = y - xs * &beta;
    let ssr: f64 = resid.iter().zip(w.iter()).map(|(r, wi)| wi * r * r).sum();
    let ybar = w.dot(y) / total_w;
    let has_intercept = red.names.iter().any(|n| n == super::design::INTERCEPT);
    let sst: f64 = y
        .iter()
        .zip(w.iter())
        .map(|(v, wi)| {
            let c = if has_intercept { v - ybar } else { *v };
            wi * c * c
        })
        .sum();
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 0.0 };
    let n_pos = w.iter().filter(|&&v| v > 0.0).count();
    let sigma2 = if n_pos > p { ssr / (n_pos - p) as f64 } else { f64::NAN };
    let score = xs.tr_mul(&w.component_mul(&resid)) / total_w;
    let coefficients = red
        .names
        .iter()
        .enumerate()
        .map(|(j, n)| Coefficient {
            name: n.clone(),
            estimate: beta[j] / red.scale[j],
            std_error: Some((sigma2 * inv[(j, j)]).sqrt() / red.scale[j]).filter(|v| v.is_finite()),
        })
        .collect();
    Ok(FittedModel {
        coefficients,
        dropped_columns: red.dropped,
        n_obs: y.len(),
        converged: true,
        iterations: 1,
        deviance: ssr,
        link: Link::Identity,
        r_squared: Some(r_squared),
        max_score: score.amax(),
    })
}

/// Predictions for `x`, whose columns are named by `columns`. Columns the
/// model dropped are ignored; every remaining name must match the model's
/// coefficients in order.
pub fn predict(model: &FittedModel, x: &DMatrix<f64>, columns: &[String]) -> Result<DVector<f64>> {
    if columns.len() != x.ncols() {
        return Err(Error::Schema(format!("{} column names for {} columns", columns.len(), x.ncols())));
    }
    let keep: Vec<usize> = (0..columns.len()).filter(|&j| !model.dropped_columns.contains(&columns[j])).collect();
    let names: Vec<&String> = keep.iter().map(|&j| &columns[j]).collect();
    let expected: Vec<&String> = model.coefficients.iter().map(|c| &c.name).collect();
    if names != expected {
        return Err(Error::Schema(format!(
            "prediction columns {:?} do not match model coefficients {:?}",
            names, expected
        )));
    }
    let eta = x.select_columns(keep.iter()) * model.beta();
    Ok(match model.link {
        Link::Identity => eta,
        Link::Log => eta.map(|e| e.min(MAX_ETA).exp()),
    })
}
