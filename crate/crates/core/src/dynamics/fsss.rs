//! Comparison of PFS classifications with the food security scale.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::pearson;

/// One person-year with both classifications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Paired {
    pub year: i32,
    pub pfs_insecure: bool,
    pub fsss_insecure: bool,
    pub weight: f64,
}

/// Cell shares in the order secure/secure, insecure/insecure,
/// PFS-insecure/FSSS-secure, PFS-secure/FSSS-insecure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Crosstab {
    pub n: usize,
    pub secure_secure: f64,
    pub insecure_insecure: f64,
    pub pfs_insecure_fsss_secure: f64,
    pub pfs_secure_fsss_insecure: f64,
}

impl Crosstab {
    pub fn match_rate(&self) -> f64 {
        self.secure_secure + self.insecure_insecure
    }

    fn add(&mut self, p: &Paired) {
        self.n += 1;
        match (p.pfs_insecure, p.fsss_insecure) {
            (false, false) => self.secure_secure += p.weight,
            (true, true) => self.insecure_insecure += p.weight,
            (true, false) => self.pfs_insecure_fsss_secure += p.weight,
            (false, true) => self.pfs_secure_fsss_insecure += p.weight,
        }
    }

    fn normalize(mut self) -> Self {
        let t = self.secure_secure + self.insecure_insecure + self.pfs_insecure_fsss_secure + self.pfs_secure_fsss_insecure;
        if t > 0.0 {
            self.secure_secure /= t;
            self.insecure_insecure /= t;
            self.pfs_insecure_fsss_secure /= t;
            self.pfs_secure_fsss_insecure /= t;
        }
        self
    }
}

/// Per-year and pooled weighted shares. The pooled table is keyed `None`.
pub fn crosstab_pfs_fsss(pairs: &[Paired]) -> Result<BTreeMap<Option<i32>, Crosstab>> {
    if pairs.is_empty() {
        return Err(Error::Domain("no person-year carries both a PFS and an FSSS status".into()));
    }
    let mut out: BTreeMap<Option<i32>, Crosstab> = BTreeMap::new();
    for p in pairs {
        out.entry(Some(p.year)).or_default().add(p);
        out.entry(None).or_default().add(p);
    }
    Ok(out.into_iter().map(|(k, v)| (k, v.normalize())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FsssEntry {
    pub person_id: String,
    pub year: i32,
    pub score: u8,
    pub pfs: f64,
    pub weight: f64,
}

/// Re-derive FSSS status by rank: within each year, persons ordered by
/// score (highest first), then PFS (lowest first), then person_id are
/// marked insecure while the cumulative weight stays within the target
/// share. Returns flags aligned with `entries`. Years without a target are
/// left secure.
pub fn reclassify_fsss_by_rank(entries: &[FsssEntry], targets: &BTreeMap<i32, f64>) -> Vec<bool> {
    let mut out = vec![false; entries.len()];
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        by_year.entry(e.year).or_default().push(i);
    }
    for (year, mut idx) in by_year {
        let Some(&target) = targets.get(&year) else { continue };
        idx.sort_by(|&a, &b| {
            let (x, y) = (&entries[a], &entries[b]);
            y.score
                .cmp(&x.score)
                .then(x.pfs.total_cmp(&y.pfs))
                .then_with(|| x.person_id.cmp(&y.person_id))
        });
        let total: f64 = idx.iter().map(|&i| entries[i].weight).sum();
        let budget = target * total;
        let tol = 1e-12 * total.max(1.0);
        let mut used = 0.0;
        for i in idx {
            let w = entries[i].weight;
            if used + w > budget + tol {
                break;
            }
            used += w;
            out[i] = true;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    Spearman,
    KendallTauB,
}

/// Coefficient, or the reason it is undefined.
pub type RankCorrelation = std::result::Result<f64, String>;

/// Average (mid) ranks, 1-based.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for k in 1..sorted.len() {
        if sorted[k] == sorted[k - 1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort counting inversions (strictly decreasing pairs).
fn sort_count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count_swaps(&mut v[..mid], &mut buf[..mid]) + sort_count_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

fn kendall_tau_b(x: &[f64], y: &[f64]) -> RankCorrelation {
    let n = x.len() as u64;
    let n0 = n * (n - 1) / 2;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let n1 = tied_pairs(&xs);
    // pairs tied in both
    let mut n3 = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[j + 1] == xs[i] && ys[j + 1] == ys[i] {
            j += 1;
        }
        let run = (j - i + 1) as u64;
        n3 += run * (run - 1) / 2;
        i = j + 1;
    }
    let mut buf = vec![0.0; ys.len()];
    let swaps = sort_count_swaps(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    if denom == 0.0 {
        return Err("a series is constant".into());
    }
    let s = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    Ok(s / denom)
}

/// Unweighted rank correlation of paired values.
pub fn rank_correlation(x: &[f64], y: &[f64], method: RankMethod) -> RankCorrelation {
    if x.len() != y.len() {
        return Err("series differ in length".into());
    }
    if x.len() < 2 {
        return Err("fewer than two pairs".into());
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err("non-finite value".into());
    }
    match method {
        RankMethod::Spearman => pearson(&mid_ranks(x), &mid_ranks(y)).ok_or_else(|| "a series is constant".to_string()),
        RankMethod::KendallTauB => kendall_tau_b(x, y),
    }
}

/// Quadratic reference implementation of tau-b.
pub fn kendall_tau_b_naive(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let a = x[i].partial_cmp(&x[j]).unwrap();
            let b = y[i].partial_cmp(&y[j]).unwrap();
            match (a, b) {
                (Ordering::Equal, Ordering::Equal) => {}
                (Ordering::Equal, _) => tx += 1,
                (_, Ordering::Equal) => ty += 1,
                _ if a == b => c += 1,
                _ => d += 1,
            }
        }
    }
    let den = (((c + d + tx) * (c + d + ty)) as f64).sqrt();
    (den > 0.0).then(|| (c - d) as f64 / den)
}
