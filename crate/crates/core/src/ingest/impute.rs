//! Fill-in of individual race and education.

use serde::Serialize;

use super::harmonize::HarmonizedRecord;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ImputationSummary {
    pub race_filled: usize,
    pub education_filled: usize,
    pub race_missing: usize,
    pub education_missing: usize,
}

impl ImputationSummary {
    pub fn merge(&mut self, other: ImputationSummary) {
        self.race_filled += other.race_filled;
        self.education_filled += other.education_filled;
        self.race_missing += other.race_missing;
        self.education_missing += other.education_missing;
    }
}

/// Impute over one person's records, sorted by year.
///
/// Race is time-invariant: every wave takes the value from the earliest
/// wave where it was observed. Children under 16 with no education take the
/// reference person's education.
pub fn impute_race_education(records: &mut [HarmonizedRecord]) -> ImputationSummary {
    let mut s = ImputationSummary::default();
    let race = records.iter().find_map(|r| r.person.race);
    for r in records.iter_mut() {
        if let Some(race) = race {
            if r.person.race != Some(race) {
                if r.person.race.is_none() {
                    s.race_filled += 1;
                }
                r.person.race = Some(race);
            }
        } else {
            s.race_missing += 1;
        }
        if r.person.education.is_none() {
            if r.person.age.is_some_and(|a| a < 16.0) && r.rp.education.is_some() {
                r.person.education = r.rp.education;
                s.education_filled += 1;
            } else {
                s.education_missing += 1;
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::record::*;

    fn rec(year: i32, age: f64, race: Option<Race>, edu: Option<Education>) -> HarmonizedRecord {
        HarmonizedRecord {
            person_id: "7".into(),
            year,
            household_id: "h".into(),
            role: Role::Ch,
            interview_month: Some(3),
            individual_weight: 1.0,
            state: "OH".into(),
            region: None,
            sample_flag: SampleFlag::LinealDescendant,
            snap_status: false,
            snap_benefit_month: None,
            food_exp_pc_month: 100.0,
            zero_expenditure: false,
            family_size: 3,
            n_children: 1,
            child_ratio: 1.0 / 3.0,
            income_pc: None,
            tfp_cost_pc_real: 150.0,
            fsss_raw: None,
            fsss_status: None,
            rp: RpDemographics { education: Some(Education::College), ..Default::default() },
            person: PersonDemographics { age: Some(age), sex: None, race, education: edu },
        }
    }

    #[test]
    fn race_from_earliest_wave() {
        let mut rs = vec![
            rec(1990, 10.0, None, None),
            rec(1992, 12.0, Some(Race::NonWhite), None),
            rec(1994, 14.0, Some(Race::White), None),
        ];
        let s = impute_race_education(&mut rs);
        assert!(rs.iter().all(|r| r.person.race == Some(Race::NonWhite)));
        assert_eq!(s.race_filled, 1);
    }

    #[test]
    fn young_children_take_rp_education() {
        let mut rs = vec![rec(1990, 10.0, None, None), rec(2005, 25.0, None, None)];
        let s = impute_race_education(&mut rs);
        assert_eq!(rs[0].person.education, Some(Education::College));
        assert_eq!(rs[1].person.education, None);
        assert_eq!(s.education_filled, 1);
        assert_eq!(s.education_missing, 1);
        assert_eq!(s.race_missing, 2);
    }
}
