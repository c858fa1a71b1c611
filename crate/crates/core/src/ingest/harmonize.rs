//! Harmonization of SNAP status, benefit amounts and food expenditure across
//! the changing questionnaire regimes, followed by deflation to
//! January 2019 dollars.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use super::cpi::CpiTable;
use super::geo::{residence, Region, Residence};
use super::impute::{impute_race_education, ImputationSummary};
use super::parse::Warning;
use super::record::*;
use crate::error::{Error, Result};

/// How SNAP receipt was asked in a given year.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapRegime {
    /// Number of household members who received benefits last month.
    MemberCount,
    /// Direct yes/no question about last month.
    YesNo,
    /// Twelve monthly receipt flags.
    MonthlyFlags,
}

pub fn snap_regime(year: i32) -> SnapRegime {
    match year {
        ..=1993 => SnapRegime::MemberCount,
        1999..=2007 => SnapRegime::MonthlyFlags,
        _ => SnapRegime::YesNo,
    }
}

/// Food expenditure before 1994 is two annual totals; afterwards it is
/// component-wise with a recall period per component.
pub fn is_annual_food_regime(year: i32) -> bool {
    year < 1994
}

/// Household SNAP receipt in the month before the interview.
pub fn harmonize_snap_status(raw: &RawRecord) -> Result<bool> {
    let cell = raw.snap_raw.as_deref().map(str::trim);
    match snap_regime(raw.year) {
        SnapRegime::MemberCount => Ok(cell.and_then(|s| s.parse::<f64>().ok()).is_some_and(|n| n >= 1.0)),
        SnapRegime::YesNo => Ok(cell.is_some_and(|s| s.eq_ignore_ascii_case("yes"))),
        SnapRegime::MonthlyFlags => {
            let month = raw.interview_month.ok_or_else(|| {
                Error::Harmonization(format!(
                    "person {} year {}: monthly SNAP flags need an interview month",
                    raw.person_id, raw.year
                ))
            })?;
            let flags = cell.unwrap_or("");
            if flags.len() != 12 || !flags.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(Error::Data(format!(
                    "person {} year {}: expected 12 monthly 0/1 SNAP flags, got `{flags}`",
                    raw.person_id, raw.year
                )));
            }
            // prior month; January interviews look at December
            let idx = if month == 1 { 11 } else { month as usize - 2 };
            Ok(flags.as_bytes()[idx] == b'1')
        }
    }
}

/// Monthly nominal benefit. Non-recipients get `None`; unknown recall
/// periods or non-responses take the year's mean monthly benefit.
pub fn harmonize_benefit(raw: &RawRecord, snap_status: bool, year_mean_monthly: Option<f64>) -> Result<Option<f64>> {
    if let Some(v) = raw.snap_benefit_raw {
        if v < 0.0 {
            return Err(Error::Data(format!(
                "person {} year {}: negative SNAP benefit {v}",
                raw.person_id, raw.year
            )));
        }
    }
    if !snap_status {
        return Ok(None);
    }
    match (raw.snap_benefit_raw, raw.benefit_recall.monthly_factor()) {
        (Some(v), Some(f)) => Ok(Some(v * f)),
        _ => Ok(year_mean_monthly),
    }
}

/// Year-level monthly means used to fill unusable recall periods.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct YearMeans {
    pub benefit: Option<f64>,
    pub home: Option<f64>,
    pub delivered: Option<f64>,
    pub eaten_out: Option<f64>,
}

fn component_monthly(c: Component, year: i32) -> Option<f64> {
    let recall = match c.recall {
        Recall::Missing if is_annual_food_regime(year) => Recall::Year,
        r => r,
    };
    Some(c.amount? * recall.monthly_factor()?)
}

/// Per-year means over distinct households with a usable report.
pub fn year_means(records: &[RawRecord]) -> Result<BTreeMap<i32, YearMeans>> {
    #[derive(Default)]
    struct Acc {
        sums: [f64; 4],
        counts: [usize; 4],
    }
    let mut seen = HashSet::new();
    let mut acc: BTreeMap<i32, Acc> = BTreeMap::new();
    for r in records {
        if !seen.insert((r.year, r.household_id.as_str())) {
            continue;
        }
        let a = acc.entry(r.year).or_default();
        let snap = harmonize_snap_status(r)?;
        let benefit = if snap {
            r.snap_benefit_raw.zip(r.benefit_recall.monthly_factor()).map(|(v, f)| v * f)
        } else {
            None
        };
        let values = [
            benefit,
            component_monthly(r.food.home, r.year),
            component_monthly(r.food.delivered, r.year),
            component_monthly(r.food.eaten_out, r.year),
        ];
        for (k, v) in values.into_iter().enumerate() {
            if let Some(v) = v {
                a.sums[k] += v;
                a.counts[k] += 1;
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|(y, a)| {
            let mean = |k: usize| (a.counts[k] > 0).then(|| a.sums[k] / a.counts[k] as f64);
            (y, YearMeans { benefit: mean(0), home: mean(1), delivered: mean(2), eaten_out: mean(3) })
        })
        .collect())
}

/// Household food expenditure for one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoodExpenditure {
    /// Monthly household total including SNAP benefits, nominal dollars.
    pub household_month: f64,
    /// Monthly per-capita amount, nominal dollars.
    pub per_capita_month: f64,
    pub zero: bool,
}

/// Monthly per-capita food expenditure including SNAP benefits, or `None`
/// when no component was reported at all.
pub fn harmonize_food_expenditure(
    raw: &RawRecord,
    benefit_month: Option<f64>,
    means: &YearMeans,
) -> Result<Option<FoodExpenditure>> {
    if raw.food.all_missing() {
        return Ok(None);
    }
    let fill = |c: Component, mean: Option<f64>| -> Result<f64> {
        if let Some(v) = c.amount {
            if v < 0.0 {
                return Err(Error::Data(format!(
                    "person {} year {}: negative food expenditure {v}",
                    raw.person_id, raw.year
                )));
            }
        }
        Ok(match c.amount {
            None if c.recall != Recall::Other => 0.0,
            _ => component_monthly(c, raw.year).or(mean).unwrap_or(0.0),
        })
    };
    let home = fill(raw.food.home, means.home)?;
    let delivered = fill(raw.food.delivered, means.delivered)?;
    let eaten_out = fill(raw.food.eaten_out, means.eaten_out)?;
    let total = benefit_month.unwrap_or(0.0) + home + delivered + eaten_out;
    Ok(Some(FoodExpenditure {
        household_month: total,
        per_capita_month: total / raw.family_size as f64,
        zero: total == 0.0,
    }))
}

/// A person-year with every regime-dependent field resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonizedRecord {
    pub person_id: String,
    pub year: i32,
    pub household_id: String,
    pub role: Role,
    pub interview_month: Option<u8>,
    pub individual_weight: f64,
    pub state: String,
    pub region: Option<Region>,
    pub sample_flag: SampleFlag,
    pub snap_status: bool,
    /// January 2019 dollars; `None` for non-recipients.
    pub snap_benefit_month: Option<f64>,
    /// Monthly per-capita food expenditure including SNAP, January 2019 dollars.
    pub food_exp_pc_month: f64,
    pub zero_expenditure: bool,
    pub family_size: u32,
    pub n_children: u32,
    pub child_ratio: f64,
    /// Annual family income per capita, January 2019 dollars.
    pub income_pc: Option<f64>,
    pub tfp_cost_pc_real: f64,
    pub fsss_raw: Option<u8>,
    pub fsss_status: Option<FoodStatus>,
    pub rp: RpDemographics,
    pub person: PersonDemographics,
}

impl HarmonizedRecord {
    /// A record with neutral defaults, convenient for building fixtures.
    pub fn new(person_id: &str, year: i32, household_id: &str) -> Self {
        Self {
            person_id: person_id.into(),
            year,
            household_id: household_id.into(),
            role: Role::Rp,
            interview_month: None,
            individual_weight: 1.0,
            state: "OH".into(),
            region: Some(Region::Midwest),
            sample_flag: SampleFlag::Original1968,
            snap_status: false,
            snap_benefit_month: None,
            food_exp_pc_month: 0.0,
            zero_expenditure: true,
            family_size: 1,
            n_children: 0,
            child_ratio: 0.0,
            income_pc: None,
            tfp_cost_pc_real: 1.0,
            fsss_raw: None,
            fsss_status: None,
            rp: RpDemographics::default(),
            person: PersonDemographics::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestExclusion {
    NoFoodExpenditure,
}

impl IngestExclusion {
    pub fn as_str(self) -> &'static str {
        match self {
            IngestExclusion::NoFoodExpenditure => "no_food_expenditure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedRow {
    pub person_id: String,
    pub year: i32,
    pub reason: IngestExclusion,
}

#[derive(Debug, Clone, Default)]
pub struct HarmonizedPanel {
    pub records: Vec<HarmonizedRecord>,
    pub excluded: Vec<ExcludedRow>,
    pub warnings: Vec<Warning>,
    pub imputation: ImputationSummary,
}

/// Harmonize every record. Rows with no food-expenditure report are
/// excluded with a reason; every input row ends up in exactly one of
/// `records` or `excluded`. Output is sorted by (person_id, year).
pub fn harmonize_panel(raw: &[RawRecord], cpi: &CpiTable) -> Result<HarmonizedPanel> {
    let means = year_means(raw)?;
    let mut out = HarmonizedPanel::default();
    for r in raw {
        let m = means.get(&r.year).copied().unwrap_or_default();
        let snap = harmonize_snap_status(r)?;
        let benefit = harmonize_benefit(r, snap, m.benefit)?;
        if snap && benefit.is_none() {
            out.warnings.push(Warning {
                row: 0,
                column: "snap_benefit".into(),
                value: format!("{}/{}", r.person_id, r.year),
                message: "recipient with no benefit amount and no same-year mean".into(),
            });
        }
        let Some(food) = harmonize_food_expenditure(r, benefit, &m)? else {
            out.excluded.push(ExcludedRow {
                person_id: r.person_id.clone(),
                year: r.year,
                reason: IngestExclusion::NoFoodExpenditure,
            });
            continue;
        };
        let deflate = |x: f64| cpi.deflate(x, r.year, r.interview_month);
        let region = match residence(&r.state) {
            Some(Residence::Contiguous(region)) => Some(region),
            _ => None,
        };
        out.records.push(HarmonizedRecord {
            person_id: r.person_id.clone(),
            year: r.year,
            household_id: r.household_id.clone(),
            role: r.role,
            interview_month: r.interview_month,
            individual_weight: r.individual_weight,
            state: r.state.clone(),
            region,
            sample_flag: r.sample_flag,
            snap_status: snap,
            snap_benefit_month: benefit.map(deflate).transpose()?,
            food_exp_pc_month: deflate(food.per_capita_month)?,
            zero_expenditure: food.zero,
            family_size: r.family_size,
            n_children: r.n_children,
            child_ratio: r.n_children as f64 / r.family_size as f64,
            income_pc: r.income_annual.map(|v| deflate(v / r.family_size as f64)).transpose()?,
            tfp_cost_pc_real: deflate(r.tfp_cost_pc)?,
            fsss_raw: r.fsss_raw,
            fsss_status: r.fsss_status,
            rp: r.rp.clone(),
            person: r.person.clone(),
        });
    }
    out.records.sort_by(|a, b| (a.person_id.as_str(), a.year).cmp(&(b.person_id.as_str(), b.year)));
    out.imputation = impute_all(&mut out.records);
    Ok(out)
}

fn impute_all(records: &mut [HarmonizedRecord]) -> ImputationSummary {
    let mut summary = ImputationSummary::default();
    let mut start = 0;
    while start < records.len() {
        let pid = records[start].person_id.clone();
        let end = start + records[start..].iter().take_while(|r| r.person_id == pid).count();
        summary.merge(impute_race_education(&mut records[start..end]));
        start = end;
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn base(year: i32) -> RawRecord {
        RawRecord {
            person_id: "1".into(),
            year,
            household_id: "h".into(),
            role: Role::Rp,
            interview_month: Some(4),
            individual_weight: 1.0,
            state: "NY".into(),
            sample_flag: SampleFlag::Original1968,
            snap_raw: None,
            snap_benefit_raw: None,
            benefit_recall: Recall::Missing,
            food: FoodComponents::default(),
            family_size: 1,
            n_children: 0,
            income_annual: None,
            tfp_cost_pc: 150.0,
            fsss_raw: None,
            fsss_status: None,
            rp: RpDemographics::default(),
            person: PersonDemographics::default(),
        }
    }

    fn comp(amount: f64, recall: Recall) -> Component {
        Component { amount: Some(amount), recall }
    }

    #[test]
    fn member_count_regime() {
        let mut r = base(1985);
        r.snap_raw = Some("2".into());
        assert!(harmonize_snap_status(&r).unwrap());
        r.snap_raw = Some("0".into());
        assert!(!harmonize_snap_status(&r).unwrap());
        r.snap_raw = None;
        assert!(!harmonize_snap_status(&r).unwrap());
    }

    #[test]
    fn yes_no_regime_treats_everything_else_as_no() {
        let mut r = base(1995);
        for (answer, expect) in [("yes", true), ("YES", true), ("no", false), ("don't know", false), ("na", false)] {
            r.snap_raw = Some(answer.into());
            assert_eq!(harmonize_snap_status(&r).unwrap(), expect, "{answer}");
        }
        r.snap_raw = None;
        assert!(!harmonize_snap_status(&r).unwrap());
        r.year = 2011;
        r.snap_raw = Some("yes".into());
        assert!(harmonize_snap_status(&r).unwrap());
    }

    #[test]
    fn monthly_flags_look_at_prior_month() {
        // Hand-built lookup: for every interview month, set only the flag of
        // the month before and check it is the one consulted.
        let prior = [12, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];
        for interview in 1..=12u8 {
            for flagged in 1..=12usize {
                let mut flags = vec![b'0'; 12];
                flags[flagged - 1] = b'1';
                let mut r = base(2003);
                r.interview_month = Some(interview);
                r.snap_raw = Some(String::from_utf8(flags).unwrap());
                let expect = prior[interview as usize - 1] == flagged;
                assert_eq!(harmonize_snap_status(&r).unwrap(), expect, "interview {interview}, flag {flagged}");
            }
        }
        let mut r = base(2003);
        r.interview_month = Some(4);
        r.snap_raw = Some("001000000000".into());
        assert!(harmonize_snap_status(&r).unwrap());
    }

    #[test]
    fn monthly_flags_without_interview_month_fail() {
        let mut r = base(2001);
        r.interview_month = None;
        r.snap_raw = Some("000000000000".into());
        assert!(matches!(harmonize_snap_status(&r), Err(Error::Harmonization(_))));
    }

    #[test]
    fn benefit_recall_conversion() {
        let mut r = base(1999);
        r.snap_benefit_raw = Some(60.0);
        r.benefit_recall = Recall::Week;
        assert_eq!(harmonize_benefit(&r, true, None).unwrap(), Some(260.0));
        r.snap_benefit_raw = Some(1200.0);
        r.benefit_recall = Recall::Year;
        assert_eq!(harmonize_benefit(&r, true, None).unwrap(), Some(100.0));
        r.benefit_recall = Recall::Other;
        assert_eq!(harmonize_benefit(&r, true, Some(98.82)).unwrap(), Some(98.82));
        assert_eq!(harmonize_benefit(&r, false, Some(98.82)).unwrap(), None);
        r.snap_benefit_raw = Some(-1.0);
        assert!(harmonize_benefit(&r, true, None).is_err());
    }

    #[test]
    fn recall_factors_compose() {
        let month = 137.25;
        let week = month / Recall::Week.monthly_factor().unwrap();
        let back = week * Recall::Week.monthly_factor().unwrap();
        let year = back / Recall::Year.monthly_factor().unwrap();
        let again = year * Recall::Year.monthly_factor().unwrap();
        assert!(((again - month) / month).abs() < 1e-9);
    }

    #[test]
    fn annual_regime_expenditure() {
        let mut r = base(1985);
        r.family_size = 2;
        r.food.home = comp(2400.0, Recall::Missing);
        r.food.eaten_out = comp(600.0, Recall::Year);
        let f = harmonize_food_expenditure(&r, Some(50.0), &YearMeans::default()).unwrap().unwrap();
        assert_eq!(f.per_capita_month, 150.0);
    }

    #[test]
    fn component_regime_non_participant() {
        let mut r = base(1999);
        r.family_size = 3;
        r.food.home = comp(300.0, Recall::Month);
        r.food.delivered = comp(0.0, Recall::Month);
        r.food.eaten_out = comp(60.0, Recall::Month);
        let f = harmonize_food_expenditure(&r, None, &YearMeans::default()).unwrap().unwrap();
        assert_eq!(f.per_capita_month, 120.0);
    }

    #[test]
    fn component_regime_participant_adds_benefit() {
        let mut r = base(2005);
        r.family_size = 2;
        r.food.home = comp(50.0, Recall::Month);
        r.food.eaten_out = comp(10.0, Recall::Week);
        let f = harmonize_food_expenditure(&r, Some(200.0), &YearMeans::default()).unwrap().unwrap();
        let expect = (200.0 + 50.0 + 10.0 * 52.0 / 12.0) / 2.0;
        assert!((f.per_capita_month - expect).abs() < 1e-12);
        assert!(f.per_capita_month >= 200.0 / 2.0);
    }

    #[test]
    fn other_recall_uses_year_mean() {
        let mut r = base(2005);
        r.food.home = Component { amount: None, recall: Recall::Other };
        r.food.eaten_out = comp(20.0, Recall::Month);
        let means = YearMeans { home: Some(250.0), ..Default::default() };
        let f = harmonize_food_expenditure(&r, None, &means).unwrap().unwrap();
        assert_eq!(f.per_capita_month, 270.0);
    }

    #[test]
    fn zero_and_missing_expenditure() {
        let mut r = base(1999);
        r.food.home = comp(0.0, Recall::Month);
        r.food.delivered = comp(0.0, Recall::Month);
        r.food.eaten_out = comp(0.0, Recall::Month);
        let f = harmonize_food_expenditure(&r, None, &YearMeans::default()).unwrap().unwrap();
        assert!(f.zero && f.per_capita_month == 0.0);
        assert!(harmonize_food_expenditure(&base(1989), None, &YearMeans::default()).unwrap().is_none());
    }
}
