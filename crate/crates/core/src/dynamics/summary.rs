//! Weighted summaries by PFS/FSSS classification cell and PFS box
//! statistics by demographic group.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;
use crate::stats::{box_stats, weighted_mean, weighted_sd, BoxStats};

/// Classification cells in the order: secure under both, secure by PFS
/// only, insecure by PFS only, insecure under both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    SecureBoth,
    PfsSecureFsssInsecure,
    PfsInsecureFsssSecure,
    InsecureBoth,
}

impl Cell {
    pub const ALL: [Cell; 4] =
        [Cell::SecureBoth, Cell::PfsSecureFsssInsecure, Cell::PfsInsecureFsssSecure, Cell::InsecureBoth];

    pub fn of(pfs_insecure: bool, fsss_insecure: bool) -> Cell {
        match (pfs_insecure, fsss_insecure) {
            (false, false) => Cell::SecureBoth,
            (false, true) => Cell::PfsSecureFsssInsecure,
            (true, false) => Cell::PfsInsecureFsssSecure,
            (true, true) => Cell::InsecureBoth,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One person-year with both classifications and the characteristics
/// summarized in the comparison tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRecord {
    pub cell: Cell,
    pub weight: f64,
    pub female_rp: Option<bool>,
    pub nonwhite_rp: Option<bool>,
    pub married_rp: Option<bool>,
    pub disabled_rp: Option<bool>,
    pub less_hs_rp: Option<bool>,
    pub college_rp: Option<bool>,
    pub rp_age: Option<f64>,
    pub family_size: f64,
    pub ln_income_pc: Option<f64>,
    pub food_exp_pc: f64,
    pub pfs: f64,
    pub fsss_raw: Option<f64>,
}

/// Panel (a) row: cell shares among records matching a characteristic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareRow {
    pub label: String,
    pub n: usize,
    pub shares: [f64; 4],
}

fn share_row(label: &str, recs: &[&SummaryRecord]) -> ShareRow {
    let mut mass = [0.0; 4];
    for r in recs {
        mass[r.cell.index()] += r.weight;
    }
    let t: f64 = mass.iter().sum();
    let shares = if t > 0.0 { mass.map(|m| m / t) } else { [0.0; 4] };
    ShareRow { label: label.to_string(), n: recs.len(), shares }
}

pub fn classification_by_characteristic(records: &[SummaryRecord]) -> Vec<ShareRow> {
    type Pick = fn(&SummaryRecord) -> Option<bool>;
    let rows: [(&str, Pick, bool); 10] = [
        ("male_rp", |r| r.female_rp, false),
        ("female_rp", |r| r.female_rp, true),
        ("white_rp", |r| r.nonwhite_rp, false),
        ("nonwhite_rp", |r| r.nonwhite_rp, true),
        ("not_married_rp", |r| r.married_rp, false),
        ("married_rp", |r| r.married_rp, true),
        ("not_disabled_rp", |r| r.disabled_rp, false),
        ("disabled_rp", |r| r.disabled_rp, true),
        ("less_hs_rp", |r| r.less_hs_rp, true),
        ("college_rp", |r| r.college_rp, true),
    ];
    let all: Vec<&SummaryRecord> = records.iter().collect();
    let mut out = vec![share_row("total", &all)];
    for (label, pick, want) in rows {
        let sub: Vec<&SummaryRecord> = records.iter().filter(|r| pick(r) == Some(want)).collect();
        out.push(share_row(label, &sub));
    }
    out
}

/// Mean and standard deviation (or share, for indicators) of one variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moment {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

/// Panel (b) column for one classification cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub n: usize,
    pub female_rp: Moment,
    pub rp_age: Moment,
    pub nonwhite_rp: Moment,
    pub married_rp: Moment,
    pub disabled_rp: Moment,
    pub less_hs_rp: Moment,
    pub family_size: Moment,
    pub ln_income_pc: Moment,
    pub food_exp_pc: Moment,
    pub pfs: Moment,
    pub fsss_raw: Moment,
}

fn moment(recs: &[&SummaryRecord], f: impl Fn(&SummaryRecord) -> Option<f64>) -> Moment {
    let (v, w): (Vec<f64>, Vec<f64>) = recs.iter().filter_map(|r| f(r).map(|x| (x, r.weight))).unzip();
    Moment { mean: weighted_mean(&v, &w), sd: weighted_sd(&v, &w) }
}

fn ind(b: Option<bool>) -> Option<f64> {
    b.map(|b| if b { 1.0 } else { 0.0 })
}

/// Weighted means and standard deviations per classification cell; empty
/// cells yield a row with n = 0.
pub fn group_summary(records: &[SummaryRecord]) -> Vec<CellSummary> {
    Cell::ALL
        .iter()
        .map(|&cell| {
            let recs: Vec<&SummaryRecord> = records.iter().filter(|r| r.cell == cell).collect();
            CellSummary {
                cell,
                n: recs.len(),
                female_rp: moment(&recs, |r| ind(r.female_rp)),
                rp_age: moment(&recs, |r| r.rp_age),
                nonwhite_rp: moment(&recs, |r| ind(r.nonwhite_rp)),
                married_rp: moment(&recs, |r| ind(r.married_rp)),
                disabled_rp: moment(&recs, |r| ind(r.disabled_rp)),
                less_hs_rp: moment(&recs, |r| ind(r.less_hs_rp)),
                family_size: moment(&recs, |r| Some(r.family_size)),
                ln_income_pc: moment(&recs, |r| r.ln_income_pc),
                food_exp_pc: moment(&recs, |r| Some(r.food_exp_pc)),
                pfs: moment(&recs, |r| Some(r.pfs)),
                fsss_raw: moment(&recs, |r| r.fsss_raw),
            }
        })
        .collect()
}

/// Box statistics of weighted values per group label, in label order.
/// Groups with no observations are omitted.
pub fn box_by_group(values: &[f64], weights: &[f64], labels: &[String]) -> Result<BTreeMap<String, BoxStats>> {
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((v, w), l) in values.iter().zip(weights).zip(labels) {
        let e = groups.entry(l).or_default();
        e.0.push(*v);
        e.1.push(*w);
    }
    groups
        .into_iter()
        .map(|(l, (v, w))| Ok((l.to_string(), box_stats(&v, &w)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(cell: Cell, pfs: f64) -> SummaryRecord {
        SummaryRecord {
            cell,
            weight: 1.0,
            female_rp: Some(false),
            nonwhite_rp: None,
            married_rp: None,
            disabled_rp: None,
            less_hs_rp: None,
            college_rp: None,
            rp_age: None,
            family_size: 2.0,
            ln_income_pc: None,
            food_exp_pc: 100.0,
            pfs,
            fsss_raw: None,
        }
    }

    #[test]
    fn quartiles_of_one_group() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let labels = vec!["g".to_string(); 4];
        let b = &box_by_group(&v, &[1.0; 4], &labels).unwrap()["g"];
        assert_eq!((b.q1, b.median, b.q3), (1.5, 2.5, 3.5));
        assert!(b.whisker_low >= 1.0 && b.whisker_high <= 4.0);
    }

    #[test]
    fn empty_cells_still_reported() {
        let rows = group_summary(&[rec(Cell::SecureBoth, 0.9), rec(Cell::SecureBoth, 0.8)]);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].n, 2);
        assert!((rows[0].pfs.mean.unwrap() - 0.85).abs() < 1e-15);
        assert_eq!(rows[3].n, 0);
        assert_eq!(rows[3].pfs.mean, None);
        let shares = classification_by_characteristic(&[rec(Cell::SecureBoth, 0.9), rec(Cell::InsecureBoth, 0.1)]);
        assert_eq!(shares[0].shares, [0.5, 0.0, 0.0, 0.5]);
        assert_eq!(shares[1].label, "male_rp");
    }
}
