//! Brute-force reference computations, written independently of the
//! production code paths they check.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::dynamics::Status;
use crate::error::{Error, Result};
use crate::gamma::GammaParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub probability: f64,
    /// Binomial standard error of the estimate.
    pub std_error: f64,
    pub n_draws: usize,
}

const MC_CHUNK: usize = 1 << 16;

/// Share of `n_draws` gamma draws at or above `threshold`.
pub fn oracle_survival_mc(params: GammaParams, threshold: f64, n_draws: usize, seed: u64) -> Result<McEstimate> {
    if n_draws < 10_000 {
        return Err(Error::Domain(format!("Monte Carlo survival needs at least 10^4 draws, got {n_draws}")));
    }
    let dist = Gamma::new(params.alpha, params.beta).map_err(|e| Error::Domain(format!("gamma sampler: {e}")))?;
    let chunks = n_draws.div_ceil(MC_CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = MC_CHUNK.min(n_draws - c * MC_CHUNK);
            (0..n).filter(|_| dist.sample(&mut rng) >= threshold).count()
        })
        .sum();
    let p = hits as f64 / n_draws as f64;
    Ok(McEstimate { probability: p, std_error: (p * (1.0 - p) / n_draws as f64).sqrt(), n_draws })
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point
/// Gauss rule.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss-Kronrod quadrature: keep bisecting the interval
/// with the largest error estimate until the total estimate is below `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (v, e) = gk15(f, a, b);
    let mut parts = vec![(a, b, v, e)];
    for _ in 0..5000 {
        let total_err: f64 = parts.iter().map(|p| p.3).sum();
        if total_err <= tol {
            return Ok(parts.iter().map(|p| p.2).sum());
        }
        let (i, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("at least one interval");
        let (lo, hi, _, _) = parts.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    Err(Error::NotConverged(format!("quadrature on [{a}, {b}] did not reach tolerance {tol:e}")))
}

/// Pr(W ≥ threshold) by integrating the gamma density numerically. The
/// lower tail is integrated when the threshold is below the mean, the upper
/// tail otherwise. For shape below one the lower integral substitutes
/// `u = x^alpha`, which removes the singularity at zero.
pub fn oracle_survival_quadrature(params: GammaParams, threshold: f64) -> Result<f64> {
    let (a, b) = (params.alpha, params.beta);
    if threshold <= 0.0 {
        return Ok(1.0);
    }
    let log_norm = ln_gamma(a) + a * b.ln();
    let density = move |x: f64| -> f64 {
        if x <= 0.0 {
            return if a == 1.0 { 1.0 / b } else { 0.0 };
        }
        ((a - 1.0) * x.ln() - x / b - log_norm).exp()
    };
    let tol = 1e-13;
    if threshold <= params.mean() {
        let lower = if a < 1.0 {
            let log_norm1 = ln_gamma(a + 1.0) + a * b.ln();
            let g = move |u: f64| (-u.powf(1.0 / a) / b - log_norm1).exp();
            integrate(&g, 0.0, threshold.powf(a), tol)?
        } else {
            integrate(&density, 0.0, threshold, tol)?
        };
        Ok(1.0 - lower)
    } else {
        let s = a.sqrt() * b;
        let g = move |t: f64| {
            if t >= 1.0 {
                return 0.0;
            }
            let x = threshold + s * t / (1.0 - t);
            density(x) * s / ((1.0 - t) * (1.0 - t))
        };
        integrate(&g, 0.0, 1.0, tol)
    }
}

/// Weighted Poisson quasi-log-likelihood, scaled by total weight.
fn poisson_qll(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, beta: &[f64]) -> f64 {
    let wsum: f64 = w.iter().sum();
    let mut ll = 0.0;
    for i in 0..x.nrows() {
        let eta: f64 = (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum();
        if eta > 700.0 {
            return f64::NEG_INFINITY;
        }
        ll += w[i] * (y[i] * eta - eta.exp());
    }
    ll / wsum
}

/// Nelder-Mead minimization from `start` with initial edge `step`.
/// Returns the best vertex, its value and whether the simplex collapsed
/// below `xtol` within `max_iter` iterations.
pub fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    step: f64,
    xtol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, bool) {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for j in 0..n {
        let mut v = start.to_vec();
        v[j] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < xtol {
            return (simplex[0].clone(), values[0], true);
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = along(-0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let v: Vec<f64> = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    values[i] = f(&v);
                    simplex[i] = v;
                }
            }
        }
    }
    let best = (0..=n).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
    (simplex[best].clone(), values[best], false)
}

/// Maximize the weighted Poisson quasi-log-likelihood by derivative-free
/// search. Desk scale only: at most 3 coefficients and 50 rows. Restarts
/// from the best point with shrinking simplices until a restart no longer
/// moves it.
pub fn oracle_qmle_search(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    if p == 0 || p > 3 || n == 0 || n > 50 {
        return Err(Error::Domain(format!("QMLE search handles 1-3 coefficients and 1-50 rows, got {p} and {n}")));
    }
    if y.len() != n || w.len() != n {
        return Err(Error::Domain("row counts of X, y and w differ".into()));
    }
    if y.iter().any(|v| *v < 0.0) || w.iter().any(|v| *v < 0.0) || w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Domain("responses and weights must be non-negative with positive total weight".into()));
    }
    let f = |b: &[f64]| -poisson_qll(x, y, w, b);
    let mut best = vec![0.0; p];
    let mut step = 1.0;
    for _ in 0..40 {
        let (cand, _, ok) = nelder_mead(&f, &best, step, 1e-12, 20_000);
        if !ok {
            return Err(Error::NotConverged("Nelder-Mead hit its iteration limit".into()));
        }
        let moved = cand.iter().zip(&best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        best = cand;
        if moved < 1e-10 {
            return Ok(best);
        }
        step = (moved * 10.0).clamp(1e-6, 1.0);
    }
    Err(Error::NotConverged("QMLE search restarts kept moving the optimum".into()))
}

/// Whether an insecure wave continues a run from the previous wave, starts
/// a new one after a secure wave, or follows an unobserved wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Onset {
    Still,
    Newly,
    PriorUnknown,
}

/// Spells as `(first index, last index, left censored, right censored)`.
pub type EnumSpell = (usize, usize, bool, bool);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnumeratedDynamics {
    pub spells: Vec<EnumSpell>,
    /// Counts of adjacent known pairs: `[from][to]` with 0 = secure,
    /// 1 = insecure.
    pub transitions: [[usize; 2]; 2],
    /// Two adjacent insecure waves anywhere in the sequence.
    pub chronic: bool,
    /// Per wave; `None` unless the wave is insecure.
    pub onsets: Vec<Option<Onset>>,
}

/// Enumerate spells, transitions, chronic flag and onsets of a status
/// sequence directly from their definitions. Sequences longer than 8 are
/// rejected.
pub fn oracle_dynamics_enum(seq: &[Status]) -> Result<EnumeratedDynamics> {
    use Status::*;
    let n = seq.len();
    if n > 8 {
        return Err(Error::Domain(format!("dynamics enumeration handles at most 8 waves, got {n}")));
    }
    let mut spells = Vec::new();
    for i in 0..n {
        for j in i..n {
            let all_insecure = seq[i..=j].iter().all(|s| *s == Insecure);
            let starts = i == 0 || seq[i - 1] != Insecure;
            let ends = j == n - 1 || seq[j + 1] != Insecure;
            if all_insecure && starts && ends {
                let left = i == 0 || seq[i - 1] == Unknown;
                let right = j == n - 1 || seq[j + 1] == Unknown;
                spells.push((i, j, left, right));
            }
        }
    }
    let mut transitions = [[0usize; 2]; 2];
    let code = |s: Status| match s {
        Secure => Some(0),
        Insecure => Some(1),
        Unknown => None,
    };
    for t in 1..n {
        if let (Some(a), Some(b)) = (code(seq[t - 1]), code(seq[t])) {
            transitions[a][b] += 1;
        }
    }
    let chronic = transitions[1][1] > 0;
    let onsets = (0..n)
        .map(|t| {
            (seq[t] == Insecure).then(|| match t.checked_sub(1).map(|p| seq[p]) {
                Some(Insecure) => Onset::Still,
                Some(Secure) => Onset::Newly,
                _ => Onset::PriorUnknown,
            })
        })
        .collect();
    Ok(EnumeratedDynamics { spells, transitions, chronic, onsets })
}
