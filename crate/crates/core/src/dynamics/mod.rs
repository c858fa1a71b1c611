//! Longitudinal food-security dynamics: spells, transitions, chronic
//! insecurity and the newly/still decomposition, plus PFS-FSSS comparison.

pub mod fsss;
pub mod summary;

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::calendar::WaveCalendar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Secure,
    Insecure,
    Unknown,
}

impl Status {
    pub fn known(self) -> bool {
        self != Status::Unknown
    }
}

/// Labels of one person-wave under each demographic grouping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GroupLabels {
    pub sex: Option<String>,
    pub race: Option<String>,
    pub education: Option<String>,
}

/// One person's statuses aligned to every calendar wave (gap years
/// included, as unknown).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersonSeries {
    pub person_id: String,
    pub statuses: Vec<Status>,
    /// Adjusted weight per wave; 0 where the status is unknown.
    pub weights: Vec<f64>,
    pub labels: Vec<GroupLabels>,
}

/// A classified person-wave used to assemble series.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub person_id: String,
    pub year: i32,
    pub insecure: bool,
    pub weight: f64,
    pub labels: GroupLabels,
}

/// Align observations to the calendar. Observations in years off the
/// calendar are rejected. Output is sorted by person_id.
pub fn build_series(observations: &[Observation], calendar: &WaveCalendar) -> Result<Vec<PersonSeries>> {
    let n = calendar.len();
    let mut by_person: BTreeMap<&str, PersonSeries> = BTreeMap::new();
    for o in observations {
        let idx = calendar
            .index_of(o.year)
            .ok_or_else(|| Error::Range(format!("{} is not a calendar wave", o.year)))?;
        let s = by_person.entry(&o.person_id).or_insert_with(|| PersonSeries {
            person_id: o.person_id.clone(),
            statuses: vec![Status::Unknown; n],
            weights: vec![0.0; n],
            labels: vec![GroupLabels::default(); n],
        });
        if s.statuses[idx].known() {
            return Err(Error::Integrity(format!("person {} has two statuses in {}", o.person_id, o.year)));
        }
        s.statuses[idx] = if o.insecure { Status::Insecure } else { Status::Secure };
        s.weights[idx] = o.weight;
        s.labels[idx] = o.labels.clone();
    }
    Ok(by_person.into_values().collect())
}

/// A spell located within a status sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SpellShape {
    pub start: usize,
    /// Index of the last insecure wave.
    pub end: usize,
    /// Insecure waves in the spell.
    pub length: usize,
    pub left_censored: bool,
    pub right_censored: bool,
}

/// Maximal runs of insecure waves. An unknown wave ends a run; with
/// `bridge_gaps`, a single unknown wave between two insecure waves is
/// treated as continuing the spell (and is not counted in its length).
pub fn spells_in(statuses: &[Status], bridge_gaps: bool) -> Vec<SpellShape> {
    use Status::*;
    let n = statuses.len();
    let continues = |i: usize| -> Option<usize> {
        if i + 1 < n && statuses[i + 1] == Insecure {
            Some(i + 1)
        } else if bridge_gaps && i + 2 < n && statuses[i + 1] == Unknown && statuses[i + 2] == Insecure {
            Some(i + 2)
        } else {
            None
        }
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if statuses[i] != Insecure {
            i += 1;
            continue;
        }
        let start = i;
        let mut length = 1;
        while let Some(next) = continues(i) {
            i = next;
            length += 1;
        }
        out.push(SpellShape {
            start,
            end: i,
            length,
            left_censored: start == 0 || statuses[start - 1] == Unknown,
            right_censored: i + 1 == n || statuses[i + 1] == Unknown,
        });
        i += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spell {
    pub person_id: String,
    pub start_wave: i32,
    pub length: usize,
    pub left_censored: bool,
    pub right_censored: bool,
    /// Person weight at the first wave of the spell.
    pub weight: f64,
}

pub fn compute_spells(series: &[PersonSeries], calendar: &WaveCalendar, bridge_gaps: bool) -> Vec<Spell> {
    let waves = calendar.waves();
    series
        .iter()
        .flat_map(|s| {
            spells_in(&s.statuses, bridge_gaps).into_iter().map(move |sp| Spell {
                person_id: s.person_id.clone(),
                start_wave: waves[sp.start],
                length: sp.length,
                left_censored: sp.left_censored,
                right_censored: sp.right_censored,
                weight: s.weights[sp.start],
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpellLengthShare {
    pub length: usize,
    pub n_spells: usize,
    pub weighted_share: f64,
    pub unweighted_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpellDistribution {
    pub n_spells: usize,
    pub by_length: Vec<SpellLengthShare>,
    /// Share of spells lasting at most two waves.
    pub transitory_weighted: f64,
    pub transitory_unweighted: f64,
    pub persistent_weighted: f64,
    pub persistent_unweighted: f64,
    pub mean_length_weighted: f64,
    pub mean_length_unweighted: f64,
}

pub fn spell_distribution(spells: &[Spell]) -> SpellDistribution {
    let mut by: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    let total_w: f64 = spells.iter().map(|s| s.weight).sum();
    let n = spells.len();
    for s in spells {
        let e = by.entry(s.length).or_default();
        e.0 += 1;
        e.1 += s.weight;
    }
    let share = |x: f64, t: f64| if t > 0.0 { x / t } else { 0.0 };
    let by_length: Vec<SpellLengthShare> = by
        .iter()
        .map(|(&length, &(count, w))| SpellLengthShare {
            length,
            n_spells: count,
            weighted_share: share(w, total_w),
            unweighted_share: share(count as f64, n as f64),
        })
        .collect();
    let tw: f64 = by_length.iter().filter(|b| b.length <= 2).map(|b| b.weighted_share).sum();
    let tu: f64 = by_length.iter().filter(|b| b.length <= 2).map(|b| b.unweighted_share).sum();
    let has = n > 0;
    SpellDistribution {
        n_spells: n,
        transitory_weighted: tw,
        transitory_unweighted: tu,
        persistent_weighted: if has { 1.0 - tw } else { 0.0 },
        persistent_unweighted: if has { 1.0 - tu } else { 0.0 },
        mean_length_weighted: share(spells.iter().map(|s| s.weight * s.length as f64).sum(), total_w),
        mean_length_unweighted: share(spells.iter().map(|s| s.length as f64).sum(), n as f64),
        by_length,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Total,
    Period,
    Sex,
    Race,
    Education,
}

impl Grouping {
    pub const ALL: [Grouping; 5] = [Grouping::Total, Grouping::Period, Grouping::Sex, Grouping::Race, Grouping::Education];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "total" => Ok(Grouping::Total),
            "period" => Ok(Grouping::Period),
            "sex" => Ok(Grouping::Sex),
            "race" => Ok(Grouping::Race),
            "education" => Ok(Grouping::Education),
            other => Err(Error::Domain(format!("unknown grouping `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Total => "total",
            Grouping::Period => "period",
            Grouping::Sex => "sex",
            Grouping::Race => "race",
            Grouping::Education => "education",
        }
    }
}

/// Inclusive year range with a display label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Period {
    pub start: i32,
    pub end: i32,
}

impl Period {
    pub fn label(&self) -> String {
        format!("{}-{}", self.start, self.end)
    }

    pub fn contains(&self, y: i32) -> bool {
        (self.start..=self.end).contains(&y)
    }
}

pub fn default_periods() -> Vec<Period> {
    [(1981, 1990), (1991, 2000), (2001, 2010), (2011, 2019)]
        .into_iter()
        .map(|(start, end)| Period { start, end })
        .collect()
}

fn label_for(g: Grouping, labels: &GroupLabels, year: i32, periods: &[Period]) -> Option<String> {
    match g {
        Grouping::Total => Some("total".into()),
        Grouping::Period => periods.iter().find(|p| p.contains(year)).map(Period::label),
        Grouping::Sex => labels.sex.clone(),
        Grouping::Race => labels.race.clone(),
        Grouping::Education => labels.education.clone(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TransitionCounts {
    pub n_pairs: usize,
    pub insecure_both: f64,
    pub insecure_first_only: f64,
    pub insecure_second_only: f64,
    pub secure_both: f64,
}

impl TransitionCounts {
    pub fn total(&self) -> f64 {
        self.insecure_both + self.insecure_first_only + self.insecure_second_only + self.secure_both
    }

    fn add(&mut self, a: Status, b: Status, w: f64) {
        self.n_pairs += 1;
        match (a, b) {
            (Status::Insecure, Status::Insecure) => self.insecure_both += w,
            (Status::Insecure, _) => self.insecure_first_only += w,
            (_, Status::Insecure) => self.insecure_second_only += w,
            _ => self.secure_both += w,
        }
    }

    /// Cell masses divided by their total.
    pub fn shares(&self) -> TransitionCounts {
        let t = self.total();
        if t <= 0.0 {
            return TransitionCounts { n_pairs: self.n_pairs, ..Default::default() };
        }
        TransitionCounts {
            n_pairs: self.n_pairs,
            insecure_both: self.insecure_both / t,
            insecure_first_only: self.insecure_first_only / t,
            insecure_second_only: self.insecure_second_only / t,
            secure_both: self.secure_both / t,
        }
    }
}

/// Weighted transition cells over adjacent calendar-wave pairs with both
/// statuses known, grouped by the second wave's label. Pair weight is the
/// second wave's weight.
pub fn transition_matrix(
    series: &[PersonSeries],
    calendar: &WaveCalendar,
    grouping: Grouping,
    periods: &[Period],
) -> BTreeMap<String, TransitionCounts> {
    let waves = calendar.waves();
    let mut out: BTreeMap<String, TransitionCounts> = BTreeMap::new();
    for s in series {
        for t in 1..s.statuses.len() {
            let (a, b) = (s.statuses[t - 1], s.statuses[t]);
            if !(a.known() && b.known()) {
                continue;
            }
            if let Some(label) = label_for(grouping, &s.labels[t], waves[t], periods) {
                out.entry(label).or_default().add(a, b, s.weights[t]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ChronicCounts {
    pub n_persons: usize,
    pub chronic_weight: f64,
    pub total_weight: f64,
}

impl ChronicCounts {
    pub fn share(&self) -> f64 {
        if self.total_weight > 0.0 {
            self.chronic_weight / self.total_weight
        } else {
            0.0
        }
    }
}

/// True when two adjacent calendar waves inside the index range
/// `[lo, hi]` are both insecure.
pub fn chronic_in(statuses: &[Status], lo: usize, hi: usize) -> bool {
    (lo + 1..=hi).any(|t| statuses[t - 1] == Status::Insecure && statuses[t] == Status::Insecure)
}

/// Weighted share of persons insecure in at least two adjacent waves
/// within each window. The denominator is every person with a known status
/// in the window, weighted by their mean weight over known waves there;
/// the group label is taken from the person's last known wave in the window.
pub fn chronic_prevalence(
    series: &[PersonSeries],
    calendar: &WaveCalendar,
    windows: &[Period],
    grouping: Grouping,
) -> BTreeMap<(String, String), ChronicCounts> {
    let waves = calendar.waves();
    let mut out: BTreeMap<(String, String), ChronicCounts> = BTreeMap::new();
    for win in windows {
        let idx: Vec<usize> = (0..waves.len()).filter(|&i| win.contains(waves[i])).collect();
        let (Some(&lo), Some(&hi)) = (idx.first(), idx.last()) else { continue };
        for s in series {
            let known: Vec<usize> = (lo..=hi).filter(|&i| s.statuses[i].known()).collect();
            let Some(&last) = known.last() else { continue };
            let label = match grouping {
                Grouping::Period => Some(win.label()),
                g => label_for(g, &s.labels[last], waves[last], &[]),
            };
            let Some(label) = label else { continue };
            let w = known.iter().map(|&i| s.weights[i]).sum::<f64>() / known.len() as f64;
            let e = out.entry((win.label(), label)).or_default();
            e.n_persons += 1;
            e.total_weight += w;
            if chronic_in(&s.statuses, lo, hi) {
                e.chronic_weight += w;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct NewlyStill {
    pub year: i32,
    pub still: f64,
    pub newly: f64,
    pub prior_unknown: f64,
    /// Weight of every person with a known status in this wave.
    pub population: f64,
}

impl NewlyStill {
    pub fn insecure(&self) -> f64 {
        self.still + self.newly + self.prior_unknown
    }
}

/// Per data wave, weighted insecure mass split by the prior calendar
/// wave's status.
pub fn newly_still_decomposition(series: &[PersonSeries], calendar: &WaveCalendar) -> Vec<NewlyStill> {
    let waves = calendar.waves();
    let mut rows: Vec<NewlyStill> = waves.iter().map(|&year| NewlyStill { year, ..Default::default() }).collect();
    for s in series {
        for t in 0..waves.len() {
            let w = s.weights[t];
            match s.statuses[t] {
                Status::Unknown => continue,
                Status::Secure => rows[t].population += w,
                Status::Insecure => {
                    rows[t].population += w;
                    let prior = if t == 0 { Status::Unknown } else { s.statuses[t - 1] };
                    match prior {
                        Status::Insecure => rows[t].still += w,
                        Status::Secure => rows[t].newly += w,
                        Status::Unknown => rows[t].prior_unknown += w,
                    }
                }
            }
        }
    }
    rows.into_iter().filter(|r| !calendar.is_gap(r.year)).collect()
}

/// Observed person-waves, keyed for joining with other tables.
pub fn person_wave_index(series: &[PersonSeries], calendar: &WaveCalendar) -> HashMap<(String, i32), Status> {
    let waves = calendar.waves();
    let mut out = HashMap::new();
    for s in series {
        for (t, st) in s.statuses.iter().enumerate() {
            if st.known() {
                out.insert((s.person_id.clone(), waves[t]), *st);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::Status::*;
    use super::*;

    fn series(st: &[Status]) -> PersonSeries {
        PersonSeries {
            person_id: "p".into(),
            statuses: st.to_vec(),
            weights: st.iter().map(|s| if s.known() { 1.0 } else { 0.0 }).collect(),
            labels: vec![GroupLabels::default(); st.len()],
        }
    }

    #[test]
    fn spells_read_directly() {
        let sp = spells_in(&[Secure, Insecure, Insecure, Secure, Insecure], false);
        assert_eq!(sp.len(), 2);
        assert_eq!((sp[0].length, sp[0].left_censored, sp[0].right_censored), (2, false, false));
        assert_eq!((sp[1].length, sp[1].left_censored, sp[1].right_censored), (1, false, true));
        assert!(spells_in(&[Secure; 4], false).is_empty());
        let all = spells_in(&[Insecure; 26], false);
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].length, 26);
        assert!(all[0].left_censored && all[0].right_censored);
    }

    #[test]
    fn gap_breaks_spells_unless_bridged() {
        let st = [Secure, Insecure, Unknown, Insecure, Secure];
        let sp = spells_in(&st, false);
        assert_eq!(sp.len(), 2);
        assert!(sp[0].right_censored && sp[1].left_censored);
        let bridged = spells_in(&st, true);
        assert_eq!(bridged.len(), 1);
        assert_eq!(bridged[0].length, 2);
        assert!(!bridged[0].left_censored && !bridged[0].right_censored);
    }

    #[test]
    fn spell_shares() {
        let spells: Vec<Spell> = [1, 1, 2, 4]
            .iter()
            .map(|&length| Spell {
                person_id: "p".into(),
                start_wave: 1990,
                length,
                left_censored: false,
                right_censored: false,
                weight: 1.0,
            })
            .collect();
        let d = spell_distribution(&spells);
        let shares: Vec<(usize, f64)> = d.by_length.iter().map(|b| (b.length, b.weighted_share)).collect();
        assert_eq!(shares, vec![(1, 0.5), (2, 0.25), (4, 0.25)]);
        assert_eq!(d.transitory_weighted, 0.75);
        let d = spell_distribution(&spells[3..]);
        assert_eq!(d.persistent_weighted, 1.0);
        assert_eq!(spell_distribution(&[]).n_spells, 0);
    }

    #[test]
    fn simple_transitions() {
        let cal = WaveCalendar::annual(2000, 2002);
        let t = transition_matrix(&[series(&[Secure, Insecure, Secure])], &cal, Grouping::Total, &[]);
        let s = t["total"].shares();
        assert_eq!((s.insecure_second_only, s.insecure_first_only, s.n_pairs), (0.5, 0.5, 2));
        let t = transition_matrix(&[series(&[Secure; 3])], &cal, Grouping::Total, &[]);
        assert_eq!(t["total"].shares().secure_both, 1.0);
    }

    #[test]
    fn chronic_needs_adjacent_waves() {
        let cal = WaveCalendar::psid();
        let idx = |y| cal.index_of(y).unwrap();
        let mut st = vec![Unknown; cal.len()];
        st[idx(1983)] = Insecure;
        st[idx(1984)] = Insecure;
        let win = [Period { start: 1981, end: 1990 }];
        let c = chronic_prevalence(&[series(&st)], &cal, &win, Grouping::Total);
        assert_eq!(c[&("1981-1990".to_string(), "total".to_string())].share(), 1.0);
        st[idx(1984)] = Secure;
        st[idx(1985)] = Insecure;
        let c = chronic_prevalence(&[series(&st)], &cal, &win, Grouping::Total);
        assert_eq!(c[&("1981-1990".to_string(), "total".to_string())].share(), 0.0);
        let mut st = vec![Unknown; cal.len()];
        st[idx(1987)] = Insecure;
        st[idx(1992)] = Insecure;
        let win = [Period { start: 1981, end: 1999 }];
        let c = chronic_prevalence(&[series(&st)], &cal, &win, Grouping::Total);
        assert_eq!(c[&("1981-1999".to_string(), "total".to_string())].share(), 0.0);
    }

    #[test]
    fn newly_and_still() {
        let cal = WaveCalendar::annual(2000, 2002);
        let rows = newly_still_decomposition(&[series(&[Secure, Insecure, Insecure])], &cal);
        assert_eq!((rows[1].newly, rows[2].still), (1.0, 1.0));
        let rows = newly_still_decomposition(&[series(&[Insecure, Secure, Secure])], &cal);
        assert_eq!(rows[0].prior_unknown, 1.0);
    }
}
