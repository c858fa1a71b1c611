//! Survey wave calendar.
//!
//! The calendar lists every survey year in order, including years in which
//! the survey ran but collected no food-expenditure data ("gap years").
//! Adjacency between waves is defined on this list, so a gap year sitting
//! between two data years breaks every lag and every consecutive-wave pair.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveCalendar {
    waves: Vec<i32>,
    gap_years: BTreeSet<i32>,
}

impl WaveCalendar {
    pub fn new(waves: Vec<i32>, gap_years: impl IntoIterator<Item = i32>) -> Result<Self> {
        if waves.is_empty() {
            return Err(Error::Config("calendar has no waves".into()));
        }
        if waves.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("calendar waves must be strictly increasing".into()));
        }
        let gap_years: BTreeSet<i32> = gap_years.into_iter().collect();
        if let Some(g) = gap_years.iter().find(|g| waves.binary_search(g).is_err()) {
            return Err(Error::Config(format!("gap year {g} is not a calendar wave")));
        }
        Ok(Self { waves, gap_years })
    }

    /// Annual waves through 1997, biennial from 1999, with 1988–1991 as gap
    /// years (no food-expenditure data).
    pub fn psid() -> Self {
        Self::psid_from(1977)
    }

    /// The standard schedule starting at `start` (must be ≤ 1997).
    pub fn psid_from(start: i32) -> Self {
        let mut waves: Vec<i32> = (start..=1997).collect();
        waves.extend((1999..=2019).step_by(2));
        let gaps = (1988..=1991).filter(|y| *y >= start);
        Self::new(waves, gaps).expect("static calendar is valid")
    }

    /// Consecutive annual waves with no gap years.
    pub fn annual(start: i32, end: i32) -> Self {
        Self::new((start..=end).collect(), std::iter::empty()).expect("annual calendar is valid")
    }

    pub fn waves(&self) -> &[i32] {
        &self.waves
    }

    pub fn gap_years(&self) -> &BTreeSet<i32> {
        &self.gap_years
    }

    pub fn len(&self) -> usize {
        self.waves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waves.is_empty()
    }

    pub fn is_gap(&self, year: i32) -> bool {
        self.gap_years.contains(&year)
    }

    pub fn contains(&self, year: i32) -> bool {
        self.index_of(year).is_some()
    }

    pub fn index_of(&self, year: i32) -> Option<usize> {
        self.waves.binary_search(&year).ok()
    }

    /// Waves on which food expenditure is observed.
    pub fn data_waves(&self) -> Vec<i32> {
        self.waves.iter().copied().filter(|y| !self.is_gap(*y)).collect()
    }

    /// The wave immediately preceding `year` on the calendar, if any.
    /// Gap years are returned as-is: callers that need data must check.
    pub fn prior_wave(&self, year: i32) -> Option<i32> {
        let i = self.index_of(year)?;
        i.checked_sub(1).map(|j| self.waves[j])
    }

    /// The prior wave, but only when it carries data.
    pub fn prior_data_wave(&self, year: i32) -> Option<i32> {
        self.prior_wave(year).filter(|p| !self.is_gap(*p))
    }

    /// True when `later` is the calendar successor of `earlier`.
    pub fn adjacent(&self, earlier: i32, later: i32) -> bool {
        self.prior_wave(later) == Some(earlier)
    }
}

impl Default for WaveCalendar {
    fn default() -> Self {
        Self::psid()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_calendar_has_26_data_waves_from_1979() {
        let cal = WaveCalendar::psid_from(1979);
        assert_eq!(cal.data_waves().len(), 26);
        assert_eq!(cal.gap_years().len(), 4);
        let full = WaveCalendar::psid();
        assert_eq!(full.waves().first(), Some(&1977));
        assert_eq!(full.data_waves().len(), 28);
    }

    #[test]
    fn adjacency_follows_the_schedule() {
        let cal = WaveCalendar::psid();
        assert_eq!(cal.prior_wave(1996), Some(1995));
        assert_eq!(cal.prior_wave(1999), Some(1997));
        assert_eq!(cal.prior_wave(2019), Some(2017));
        assert_eq!(cal.prior_wave(1977), None);
        // 1992's predecessor is a gap year
        assert_eq!(cal.prior_wave(1992), Some(1991));
        assert_eq!(cal.prior_data_wave(1992), None);
        assert!(!cal.adjacent(1987, 1992));
        assert_eq!(cal.prior_wave(1998), None);
    }

    #[test]
    fn rejects_unsorted_waves() {
        assert!(WaveCalendar::new(vec![1980, 1979], []).is_err());
        assert!(WaveCalendar::new(vec![1979, 1980], [1985]).is_err());
    }
}
