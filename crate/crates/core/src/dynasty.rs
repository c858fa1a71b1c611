//! Study-sample selection, household linkage and weight adjustment.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::geo::{residence, Residence};
use crate::ingest::{fmt_real, HarmonizedRecord, Race, Role, SampleFlag, Sex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Nonsample,
    SupplementalSample,
    NotSurveyedInWindow,
    NeverRpOrSp,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::Nonsample => "nonsample",
            ExclusionReason::SupplementalSample => "supplemental_sample",
            ExclusionReason::NotSurveyedInWindow => "not_surveyed_in_window",
            ExclusionReason::NeverRpOrSp => "never_rp_or_sp",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudySample {
    pub included: BTreeSet<String>,
    pub excluded: BTreeMap<String, ExclusionReason>,
}

impl StudySample {
    pub fn reason_counts(&self) -> BTreeMap<ExclusionReason, usize> {
        let mut out = BTreeMap::new();
        for r in self.excluded.values() {
            *out.entry(*r).or_insert(0) += 1;
        }
        out
    }
}

/// Inclusive year range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub start: i32,
    pub end: i32,
}

impl Window {
    pub fn new(start: i32, end: i32) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }
}

impl Default for Window {
    fn default() -> Self {
        Self { start: 1977, end: 2019 }
    }
}

/// Select the study sample. Each person gets exactly one outcome; the first
/// matching exclusion in the order nonsample, supplemental, not surveyed,
/// never RP/SP wins.
pub fn select_study_individuals(records: &[HarmonizedRecord], window: Window) -> StudySample {
    #[derive(Default)]
    struct Seen {
        nonsample: bool,
        supplemental: bool,
        in_window: bool,
        rp_or_sp: bool,
    }
    let mut people: BTreeMap<&str, Seen> = BTreeMap::new();
    for r in records {
        let s = people.entry(&r.person_id).or_default();
        match r.sample_flag {
            SampleFlag::Nonsample => s.nonsample = true,
            SampleFlag::LatinoSupplement | SampleFlag::ImmigrantRefresher => s.supplemental = true,
            SampleFlag::Original1968 | SampleFlag::LinealDescendant => {}
        }
        if window.contains(r.year) {
            s.in_window = true;
            if matches!(r.role, Role::Rp | Role::Sp) {
                s.rp_or_sp = true;
            }
        }
    }
    let mut out = StudySample::default();
    for (pid, s) in people {
        let reason = if s.nonsample {
            Some(ExclusionReason::Nonsample)
        } else if s.supplemental {
            Some(ExclusionReason::SupplementalSample)
        } else if !s.in_window {
            Some(ExclusionReason::NotSurveyedInWindow)
        } else if !s.rp_or_sp {
            Some(ExclusionReason::NeverRpOrSp)
        } else {
            None
        };
        match reason {
            Some(r) => {
                out.excluded.insert(pid.to_string(), r);
            }
            None => {
                out.included.insert(pid.to_string());
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct GeoFiltered {
    pub kept: Vec<HarmonizedRecord>,
    pub dropped: usize,
}

/// Drop person-years outside the 48 contiguous states and DC.
pub fn apply_geography_filter(records: Vec<HarmonizedRecord>) -> Result<GeoFiltered> {
    let unknown: Vec<String> = records
        .iter()
        .filter(|r| residence(&r.state).is_none())
        .map(|r| format!("{}/{} `{}`", r.person_id, r.year, r.state))
        .collect();
    if !unknown.is_empty() {
        let shown: Vec<_> = unknown.iter().take(10).cloned().collect();
        return Err(Error::Data(format!(
            "{} person-years with unknown state codes: {}{}",
            unknown.len(),
            shown.join(", "),
            if unknown.len() > 10 { ", ..." } else { "" }
        )));
    }
    let n = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| matches!(residence(&r.state), Some(Residence::Contiguous(_))))
        .collect();
    Ok(GeoFiltered { dropped: n - kept.len(), kept })
}

/// A study individual observed in one wave, carrying the household's data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersonYear {
    pub record: HarmonizedRecord,
    pub adjusted_weight: f64,
    pub co_resident_count: u32,
    pub rp_changed: bool,
}

impl PersonYear {
    pub fn new(record: HarmonizedRecord) -> Self {
        let w = record.individual_weight;
        Self { record, adjusted_weight: w, co_resident_count: 1, rp_changed: false }
    }

    pub fn person_id(&self) -> &str {
        &self.record.person_id
    }

    pub fn year(&self) -> i32 {
        self.record.year
    }
}

/// Split each survey weight among the study individuals sharing its
/// household-year.
pub fn adjust_weights(person_years: &mut [PersonYear]) {
    let mut counts: HashMap<(&str, i32), u32> = HashMap::new();
    for p in person_years.iter() {
        *counts.entry((p.record.household_id.as_str(), p.record.year)).or_insert(0) += 1;
    }
    let counts: HashMap<(String, i32), u32> = counts.into_iter().map(|((h, y), c)| ((h.to_string(), y), c)).collect();
    for p in person_years.iter_mut() {
        let c = counts[&(p.record.household_id.clone(), p.record.year)];
        p.co_resident_count = c;
        p.adjusted_weight = p.record.individual_weight / c as f64;
    }
}

/// RP person id of every household-year, from all records including
/// excluded persons.
pub fn household_rp_ids(records: &[HarmonizedRecord]) -> HashMap<(String, i32), String> {
    records
        .iter()
        .filter(|r| r.role == Role::Rp)
        .map(|r| ((r.household_id.clone(), r.year), r.person_id.clone()))
        .collect()
}

/// Flag person-years whose household RP differs from the RP of the person's
/// household at their previous observation. `person_years` must be sorted
/// by (person_id, year).
pub fn flag_rp_changes(person_years: &mut [PersonYear], rp_ids: &HashMap<(String, i32), String>) {
    let mut prev: Option<(String, Option<String>)> = None;
    for p in person_years.iter_mut() {
        let rp = rp_ids.get(&(p.record.household_id.clone(), p.record.year)).cloned();
        p.rp_changed = match &prev {
            Some((pid, prev_rp)) if *pid == p.record.person_id => {
                matches!((prev_rp, &rp), (Some(a), Some(b)) if a != b)
            }
            _ => false,
        };
        prev = Some((p.record.person_id.clone(), rp));
    }
}

#[derive(Debug, Clone, Default)]
pub struct StudyPanel {
    /// Sorted by (person_id, year).
    pub person_years: Vec<PersonYear>,
    pub sample: StudySample,
    pub dropped_outside_window: usize,
    pub dropped_geography: usize,
}

/// Full linkage: selection, window and geography restriction, weight
/// adjustment and RP-change flags.
pub fn build_study_panel(records: &[HarmonizedRecord], window: Window) -> Result<StudyPanel> {
    let sample = select_study_individuals(records, window);
    let rp_ids = household_rp_ids(records);
    let members: Vec<HarmonizedRecord> =
        records.iter().filter(|r| sample.included.contains(&r.person_id)).cloned().collect();
    let n_members = members.len();
    let in_window: Vec<HarmonizedRecord> = members.into_iter().filter(|r| window.contains(r.year)).collect();
    let dropped_outside_window = n_members - in_window.len();
    let geo = apply_geography_filter(in_window)?;
    let mut person_years: Vec<PersonYear> = geo.kept.into_iter().map(PersonYear::new).collect();
    person_years.sort_by(|a, b| (a.person_id(), a.year()).cmp(&(b.person_id(), b.year())));
    adjust_weights(&mut person_years);
    flag_rp_changes(&mut person_years, &rp_ids);
    Ok(StudyPanel { person_years, sample, dropped_outside_window, dropped_geography: geo.dropped })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RosterRow {
    pub person_id: String,
    pub first_wave: i32,
    pub last_wave: i32,
    pub n_waves: usize,
    pub inclusion: String,
}

/// One row per input person, in person_id order.
pub fn roster(records: &[HarmonizedRecord], sample: &StudySample) -> Vec<RosterRow> {
    let mut waves: BTreeMap<&str, BTreeSet<i32>> = BTreeMap::new();
    for r in records {
        waves.entry(&r.person_id).or_default().insert(r.year);
    }
    waves
        .into_iter()
        .map(|(pid, ys)| RosterRow {
            person_id: pid.to_string(),
            first_wave: *ys.first().unwrap(),
            last_wave: *ys.last().unwrap(),
            n_waves: ys.len(),
            inclusion: match sample.excluded.get(pid) {
                Some(r) => r.as_str().to_string(),
                None => "included".to_string(),
            },
        })
        .collect()
}

pub fn write_roster<W: Write>(out: W, rows: &[RosterRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["person_id", "first_wave", "last_wave", "n_waves", "inclusion"])?;
    for r in rows {
        w.write_record([
            r.person_id.clone(),
            r.first_wave.to_string(),
            r.last_wave.to_string(),
            r.n_waves.to_string(),
            r.inclusion.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// External composition series for comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceComposition {
    pub year: i32,
    pub female_share: f64,
    pub nonwhite_share: f64,
}

pub fn read_reference_composition(path: &std::path::Path) -> Result<Vec<ReferenceComposition>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("reference composition missing column `{name}`")))
    };
    let (iy, iff, inw) = (col("year")?, col("female_share")?, col("nonwhite_share")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |k: usize| -> Result<f64> {
            rec.get(k)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("reference composition row {}: bad value", i + 1)))
        };
        out.push(ReferenceComposition { year: get(iy)? as i32, female_share: get(iff)?, nonwhite_share: get(inw)? });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionRow {
    pub year: i32,
    pub female_rp_share: Option<f64>,
    pub nonwhite_rp_share: Option<f64>,
    pub reference_female_share: Option<f64>,
    pub reference_nonwhite_share: Option<f64>,
}

/// Weighted shares of person-years living with a female or non-White RP.
pub fn representativeness_report(
    person_years: &[PersonYear],
    reference: Option<&[ReferenceComposition]>,
) -> Vec<CompositionRow> {
    let mut acc: BTreeMap<i32, [f64; 4]> = BTreeMap::new();
    for p in person_years {
        let a = acc.entry(p.year()).or_default();
        let w = p.adjusted_weight;
        if let Some(sex) = p.record.rp.sex {
            a[1] += w;
            if sex == Sex::Female {
                a[0] += w;
            }
        }
        if let Some(race) = p.record.rp.race {
            a[3] += w;
            if race == Race::NonWhite {
                a[2] += w;
            }
        }
    }
    let refs: BTreeMap<i32, ReferenceComposition> =
        reference.unwrap_or(&[]).iter().map(|r| (r.year, *r)).collect();
    acc.into_iter()
        .map(|(year, a)| CompositionRow {
            year,
            female_rp_share: (a[1] > 0.0).then(|| a[0] / a[1]),
            nonwhite_rp_share: (a[3] > 0.0).then(|| a[2] / a[3]),
            reference_female_share: refs.get(&year).map(|r| r.female_share),
            reference_nonwhite_share: refs.get(&year).map(|r| r.nonwhite_share),
        })
        .collect()
}

pub fn write_composition<W: Write>(out: W, rows: &[CompositionRow], with_reference: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["year", "female_rp_share", "nonwhite_rp_share"];
    if with_reference {
        header.extend(["reference_female_share", "reference_nonwhite_share"]);
    }
    w.write_record(&header)?;
    let f = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    for r in rows {
        let mut row = vec![r.year.to_string(), f(r.female_rp_share), f(r.nonwhite_rp_share)];
        if with_reference {
            row.extend([f(r.reference_female_share), f(r.reference_nonwhite_share)]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
