//! The longitudinal linkage example of Table A1, cell by cell.

use std::collections::HashMap;

use pfs_core::dynasty::{build_study_panel, select_study_individuals, ExclusionReason, Window};
use pfs_core::ingest::{HarmonizedRecord, Role, SampleFlag};

const YEARS: [i32; 7] = [1968, 1977, 1978, 1979, 1980, 1981, 1982];

/// (pid, in PSID sample, cells per year in YEARS order)
const TABLE: [(&str, bool, [&str; 7]); 9] = [
    ("1", true, ["RP-10", "RP-20", "RP-30", "RP-40", "RP-50", "RP-60", "RP-70"]),
    ("2", true, ["SP-10", "SP-20", "SP-30", "SP-40", "SP-50", "SP-60", "SP-70"]),
    ("3", true, ["CH-10", "RP-21", "RP-31", "RP-41", "RP-51", "RP-61", "RP-71"]),
    ("6", true, ["CH-10", "SP-24", "SP-34", "RP-43", "RP-53", "SP-63", "SP-73"]),
    ("170", false, ["x", "RP-24", "RP-34", "x", "x", "x", "x"]),
    ("8", true, ["CH-10", "CH-20", "CH-30", "CH-40", "RP-54", "RP-64", "RP-74"]),
    ("37", true, ["x", "x", "x", "x", "x", "CH-64", "CH-74"]),
    ("30", true, ["CH-10", "CH-20", "CH-30", "x", "x", "x", "x"]),
    ("100", true, ["RP-11", "x", "x", "x", "x", "x", "x"]),
];

fn records() -> Vec<HarmonizedRecord> {
    let mut out = Vec::new();
    for (pid, sample, cells) in TABLE {
        for (year, cell) in YEARS.iter().zip(cells) {
            let Some((role, hid)) = cell.split_once('-') else { continue };
            let mut r = HarmonizedRecord::new(pid, *year, hid);
            r.role = match role {
                "RP" => Role::Rp,
                "SP" => Role::Sp,
                _ => Role::Ch,
            };
            r.sample_flag = match (sample, pid) {
                (false, _) => SampleFlag::Nonsample,
                (true, "1" | "2" | "100") => SampleFlag::Original1968,
                _ => SampleFlag::LinealDescendant,
            };
            r.individual_weight = if sample { 30.0 } else { 0.0 };
            r.food_exp_pc_month = 100.0;
            r.zero_expenditure = false;
            out.push(r);
        }
    }
    out
}

#[test]
fn study_sample_column() {
    let s = select_study_individuals(&records(), Window::default());
    let included: Vec<&str> = s.included.iter().map(String::as_str).collect();
    let mut want = vec!["1", "2", "3", "6", "8"];
    want.sort();
    assert_eq!(included, want);
    assert_eq!(s.excluded["170"], ExclusionReason::Nonsample);
    assert_eq!(s.excluded["100"], ExclusionReason::NotSurveyedInWindow);
    assert_eq!(s.excluded["37"], ExclusionReason::NeverRpOrSp);
    assert_eq!(s.excluded["30"], ExclusionReason::NeverRpOrSp);
    assert_eq!(s.included.len() + s.excluded.len(), TABLE.len());
}

#[test]
fn rp_changes_and_weights() {
    let panel = build_study_panel(&records(), Window::default()).unwrap();
    let rows: HashMap<(&str, i32), _> = panel.person_years.iter().map(|p| ((p.person_id(), p.year()), p)).collect();
    assert!(rows.keys().all(|(_, y)| *y >= 1977));

    // PID 6: spouse of 170 in 1978, RP of her own household in 1979.
    assert!(!rows[&("6", 1978)].rp_changed);
    assert!(rows[&("6", 1979)].rp_changed);
    assert!(!rows[&("6", 1980)].rp_changed);
    // PID 8 leaves the parental household to head household 54.
    assert!(rows[&("8", 1980)].rp_changed);
    assert!(!rows[&("8", 1981)].rp_changed);
    for pid in ["1", "2", "3", "6", "8"] {
        assert!(!rows[&(pid, 1977)].rp_changed, "{pid}: first observation is never a change");
    }
    assert!(!rows[&("1", 1982)].rp_changed);

    // Household 20 in 1977 holds 1, 2, 8 (and excluded 30): weight split three ways.
    for pid in ["1", "2", "8"] {
        let p = rows[&(pid, 1977)];
        assert_eq!(p.co_resident_count, 3);
        assert!((p.adjusted_weight - 10.0).abs() < 1e-12);
    }
    // PID 6 shares household 24 only with nonsample 170 in 1977.
    assert_eq!(rows[&("6", 1977)].co_resident_count, 1);
    assert_eq!(rows[&("6", 1977)].adjusted_weight, 30.0);
    // PID 3 heads a household alone.
    assert_eq!(rows[&("3", 1979)].adjusted_weight, 30.0);
}

#[test]
fn window_start_1979_keeps_the_same_people() {
    let s = select_study_individuals(&records(), Window::new(1979, 2019));
    let included: Vec<&str> = s.included.iter().map(String::as_str).collect();
    assert_eq!(included, vec!["1", "2", "3", "6", "8"]);
    assert_eq!(s.excluded["170"], ExclusionReason::Nonsample);
}
