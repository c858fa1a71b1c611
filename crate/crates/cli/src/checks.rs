//! Oracle checks shared by `pfs validate` and the acceptance suite.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, Gamma};

use pfs_core::dynamics::{
    chronic_in, newly_still_decomposition, spells_in, transition_matrix, GroupLabels, Grouping, PersonSeries, Status,
};
use pfs_core::glm::{fit_poisson_qmle, INTERCEPT};
use pfs_core::pfs::{read_pfs, PfsRecord};
use pfs_core::stats::share_below;
use pfs_core::synth::oracle::{oracle_dynamics_enum, oracle_qmle_search, oracle_survival_mc, oracle_survival_quadrature, Onset};
use pfs_core::threshold::{by_year, calibrate_cutoff, read_cutoffs, Provenance};
use pfs_core::{gamma_survival, GammaParams, WaveCalendar};

use crate::error::Result;
use crate::manifest;
use crate::table::{real, Table};

pub const SHAPES: [f64; 6] = [0.5, 1.0, 2.0, 5.0, 10.0, 50.0];
pub const SCALES: [f64; 3] = [0.5, 1.0, 75.0];
pub const PERCENTILES: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];
pub const QUADRATURE_TOL: f64 = 1e-9;
pub const MC_DRAWS: usize = 1_000_000;
pub const MC_SEED: u64 = 42;
pub const MC_SE_BOUND: f64 = 3.0;
pub const QMLE_TOL: f64 = 1e-6;
pub const QMLE_INSTANCES: usize = 50;
pub const TRUTH_MAD_TOL: f64 = 0.05;

/// One check outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

pub fn to_table(checks: &[Check]) -> Table {
    let mut t = Table::new("validation", &["check", "result", "detail"]);
    for c in checks {
        t.push(vec![c.name.clone(), if c.passed { "pass" } else { "fail" }.into(), c.detail.clone()]);
    }
    t
}

#[derive(Debug, Clone, Copy)]
pub struct GammaGrid {
    pub cells: usize,
    pub max_quadrature_error: f64,
    /// Largest |production - Monte Carlo| in Monte Carlo standard errors.
    pub max_mc_z: f64,
    pub seconds: f64,
}

/// Survival at every grid percentile against quadrature and Monte Carlo.
pub fn gamma_grid(mc_draws: usize) -> Result<GammaGrid> {
    let start = Instant::now();
    let mut max_q: f64 = 0.0;
    let mut max_z: f64 = 0.0;
    let mut cells = 0;
    for &alpha in &SHAPES {
        for &beta in &SCALES {
            let params = GammaParams::new(alpha, beta)?;
            let dist = Gamma::new(alpha, 1.0 / beta).map_err(|e| pfs_core::Error::Domain(e.to_string()))?;
            for &p in &PERCENTILES {
                let w = dist.inverse_cdf(p);
                let s = gamma_survival(w, params)?;
                max_q = max_q.max((s - oracle_survival_quadrature(params, w)?).abs());
                let mc = oracle_survival_mc(params, w, mc_draws, MC_SEED)?;
                let z = (s - mc.probability).abs() / mc.std_error.max(f64::MIN_POSITIVE);
                max_z = max_z.max(z);
                cells += 1;
            }
        }
    }
    Ok(GammaGrid { cells, max_quadrature_error: max_q, max_mc_z: max_z, seconds: start.elapsed().as_secs_f64() })
}

fn qmle_instance(rng: &mut ChaCha20Rng, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let x = DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
    let beta: Vec<f64> = (0..p).map(|j| if j == 0 { 1.0 } else { rng.random_range(-0.8..0.8) }).collect();
    let y = DVector::from_fn(n, |i, _| {
        let mu: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>().exp();
        mu * rng.random_range(0.3..1.7)
    });
    let w = DVector::from_fn(n, |_, _| rng.random_range(0.5..3.0));
    (x, y, w)
}

/// Largest coefficient gap between the QMLE and a direct search of the
/// quasi-likelihood over random small designs.
pub fn qmle_vs_search(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let n = rng.random_range(10..=50);
        let p = 1 + k % 3;
        let (x, y, w) = qmle_instance(&mut rng, n, p);
        let names: Vec<String> =
            std::iter::once(INTERCEPT.to_string()).chain((1..p).map(|j| format!("x{j}"))).collect();
        let fit = fit_poisson_qmle(&x, &y, &w, &names)?;
        let want = oracle_qmle_search(&x, &y, &w)?;
        for (c, b) in fit.coefficients.iter().zip(&want) {
            worst = worst.max((c.estimate - b).abs());
        }
    }
    Ok(worst)
}

const STATUSES: [Status; 3] = [Status::Secure, Status::Insecure, Status::Unknown];

/// Every secure/insecure/unknown sequence of six waves through spells,
/// transitions, chronic status and onsets. Returns the mismatching sequences.
pub fn dynamics_enumeration() -> Result<Vec<String>> {
    let cal = WaveCalendar::annual(2001, 2006);
    let mut bad = Vec::new();
    for code in 0..729usize {
        let mut c = code;
        let seq: Vec<Status> = (0..6)
            .map(|_| {
                let s = STATUSES[c % 3];
                c /= 3;
                s
            })
            .collect();
        let want = oracle_dynamics_enum(&seq)?;
        let spells: Vec<_> =
            spells_in(&seq, false).iter().map(|s| (s.start, s.end, s.left_censored, s.right_censored)).collect();
        let series = PersonSeries {
            person_id: "p".into(),
            statuses: seq.clone(),
            weights: seq.iter().map(|s| if s.known() { 1.0 } else { 0.0 }).collect(),
            labels: vec![GroupLabels::default(); 6],
        };
        let one = std::slice::from_ref(&series);
        let t = transition_matrix(one, &cal, Grouping::Total, &[]).get("total").copied().unwrap_or_default();
        let tr = want.transitions;
        let transitions_ok = t.secure_both == tr[0][0] as f64
            && t.insecure_second_only == tr[0][1] as f64
            && t.insecure_first_only == tr[1][0] as f64
            && t.insecure_both == tr[1][1] as f64;
        let onsets_ok = newly_still_decomposition(one, &cal).iter().zip(&want.onsets).all(|(row, o)| {
            let expect = match o {
                None => (0.0, 0.0, 0.0),
                Some(Onset::Still) => (1.0, 0.0, 0.0),
                Some(Onset::Newly) => (0.0, 1.0, 0.0),
                Some(Onset::PriorUnknown) => (0.0, 0.0, 1.0),
            };
            (row.still, row.newly, row.prior_unknown) == expect
        });
        if spells != want.spells || !transitions_ok || chronic_in(&seq, 0, 5) != want.chronic || !onsets_ok {
            bad.push(format!("{seq:?}"));
        }
    }
    Ok(bad)
}

/// Per anchored year: |achieved - target| against the one-weight bound.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationGap {
    pub year: i32,
    pub target: f64,
    pub achieved: f64,
    pub bound: f64,
}

impl CalibrationGap {
    pub fn ok(&self) -> bool {
        (self.achieved - self.target).abs() <= self.bound + 1e-12
    }
}

pub fn calibration_gaps(pfs: &[PfsRecord], targets: &BTreeMap<i32, f64>) -> Result<Vec<CalibrationGap>> {
    let mut out = Vec::new();
    for (year, (v, w)) in by_year(pfs) {
        let Some(&target) = targets.get(&year) else { continue };
        let cutoff = calibrate_cutoff(&v, &w, target)?;
        let total: f64 = w.iter().sum();
        let max_w = w.iter().copied().fold(0.0, f64::max);
        out.push(CalibrationGap { year, target, achieved: share_below(&v, &w, cutoff), bound: max_w / total });
    }
    Ok(out)
}

/// Unweighted mean absolute gap between estimated and true PFS over the
/// person-years present in both.
pub fn truth_mad(pfs: &[PfsRecord], truth_csv: &Path) -> Result<(f64, usize)> {
    let table = Table::read_csv("truth", truth_csv)?;
    let col = |n: &str| table.column(n).ok_or_else(|| pfs_core::Error::Schema(format!("truth file lacks {n}")));
    let (pid, year, tp) = (col("person_id")?, col("year")?, col("true_pfs")?);
    let truth: HashMap<(&str, i32), f64> = table
        .rows
        .iter()
        .filter_map(|r| Some(((r[pid].as_str(), r[year].parse().ok()?), r[tp].parse().ok()?)))
        .collect();
    let gaps: Vec<f64> =
        pfs.iter().filter_map(|r| truth.get(&(r.person_id.as_str(), r.year)).map(|t| (r.pfs - t).abs())).collect();
    if gaps.is_empty() {
        return Err(pfs_core::Error::Join("no estimated person-year matches the truth file".into()).into());
    }
    Ok((gaps.iter().sum::<f64>() / gaps.len() as f64, gaps.len()))
}

/// All checks. Run-dependent ones are skipped when their inputs are absent.
pub fn run_all(out: &Path, targets: Option<&BTreeMap<i32, f64>>) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let g = gamma_grid(MC_DRAWS)?;
    checks.push(Check::new(
        "gamma_quadrature",
        g.max_quadrature_error <= QUADRATURE_TOL,
        format!("{} cells, max error {:.3e} (tol {QUADRATURE_TOL:e})", g.cells, g.max_quadrature_error),
    ));
    checks.push(Check::new(
        "gamma_monte_carlo",
        g.max_mc_z <= MC_SE_BOUND,
        format!("{} cells, {MC_DRAWS} draws, max {:.2} SE (bound {MC_SE_BOUND})", g.cells, g.max_mc_z),
    ));

    let worst = qmle_vs_search(QMLE_INSTANCES, 2024)?;
    checks.push(Check::new(
        "qmle_search_oracle",
        worst <= QMLE_TOL,
        format!("{QMLE_INSTANCES} instances, max gap {worst:.3e} (tol {QMLE_TOL:e})"),
    ));

    let bad = dynamics_enumeration()?;
    checks.push(Check::new(
        "dynamics_enumeration",
        bad.is_empty(),
        if bad.is_empty() { "729 sequences agree".into() } else { format!("{} mismatches, first {}", bad.len(), bad[0]) },
    ));

    let pfs_path = out.join("estimate").join("pfs.csv");
    let pfs = if pfs_path.is_file() { Some(read_pfs(File::open(&pfs_path)?)?) } else { None };

    if let (Some(pfs), Some(targets)) = (&pfs, targets) {
        let gaps = calibration_gaps(pfs, targets)?;
        let failing: Vec<i32> = gaps.iter().filter(|g| !g.ok()).map(|g| g.year).collect();
        let mut detail = format!("{} anchored years, failing {failing:?}", gaps.len());
        let cutoffs_path = out.join("calibrate").join("cutoffs.csv");
        let mut passed = failing.is_empty();
        if cutoffs_path.is_file() {
            let written = read_cutoffs(&cutoffs_path)?;
            let by = by_year(pfs);
            let mut worst: f64 = 0.0;
            for (year, (cut, prov)) in &written {
                if *prov != Provenance::Anchored {
                    continue;
                }
                if let (Some((v, w)), Some(t)) = (by.get(year), targets.get(year)) {
                    worst = worst.max((calibrate_cutoff(v, w, *t)? - cut).abs());
                }
            }
            // cutoffs on disk carry six decimals
            passed &= worst <= 1e-6;
            detail.push_str(&format!(", written cutoffs within {} of recomputed", real(worst)));
        }
        checks.push(Check::new("calibration_bound", passed, detail));
    }

    if let Some(pfs) = &pfs {
        let truth = out.join("synth").join("truth_person_years.csv");
        if truth.is_file() {
            let (mad, n) = truth_mad(pfs, &truth)?;
            checks.push(Check::new(
                "truth_recovery",
                mad <= TRUTH_MAD_TOL,
                format!("mean |pfs - true| {mad:.4} over {n} person-years (tol {TRUTH_MAD_TOL})"),
            ));
        }
    }

    if let Some(m) = manifest::read(out)? {
        let problems = manifest::verify(out, &m)?;
        checks.push(Check::new(
            "manifest",
            problems.is_empty(),
            if problems.is_empty() { format!("{} files verified", m.files.len()) } else { problems.join("; ") },
        ));
    }
    Ok(checks)
}
