//! Synthetic panels drawn from a fully known data-generating process, and
//! brute-force oracles for checking the estimators against it.
//!
//! Every founding household evolves over the data waves of the calendar:
//! ageing, employment and disability transitions, an income process, SNAP
//! take-up, marriage, divorce, births, split-offs and attrition. Each wave
//! the household's per-capita food expenditure is one gamma draw whose mean
//! and variance are log-linear in exactly the regressors the estimator
//! uses, with the lag taken from the household's previous data wave.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`), which produces the same
//! stream for the same seed on every platform. Stream 0 drives the
//! population-level series; founding household `d` (1-based) uses stream
//! `d`, so parallel and serial generation give identical output.

pub mod oracle;

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::calendar::WaveCalendar;
use crate::dynasty::ReferenceComposition;
use crate::error::{Error, Result};
use crate::gamma::{gamma_from_moments, gamma_survival, GammaParams};
use crate::ingest::geo::contiguous_codes;
use crate::ingest::{
    residence, Component, CpiTable, Education, FoodComponents, FoodStatus, PersonDemographics, Race, RawRecord,
    Recall, Residence, Role, RpDemographics, SampleFlag, Sex, FSSS_WAVES,
};
use crate::threshold::MacroRow;

/// Regressors of the mean and variance equations, named as the estimator
/// names its design columns. State and year effects come on top.
pub const TERMS: [&str; 18] = [
    "(intercept)",
    "lag_food_exp_pc",
    "lag_food_exp_pc^2",
    "rp_age",
    "rp_age_sq_k",
    "rp_race[nonwhite]",
    "rp_married[married]",
    "rp_sex[female]",
    "rp_education[less_hs]",
    "rp_education[some_college]",
    "rp_education[college]",
    "rp_employed[employed]",
    "rp_disabled[disabled]",
    "family_size",
    "child_ratio",
    "rp_changed",
    "ln_income_pc",
    "snap",
];

/// Terms whose regressor is a 0/1 contrast.
pub fn is_categorical_term(term: &str) -> bool {
    term.contains('[') || term == "rp_changed" || term == "snap"
}

mod year_keys {
    use super::*;

    pub fn serialize<S: Serializer>(m: &BTreeMap<i32, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_map(m.iter().map(|(k, v)| (k.to_string(), v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<i32, f64>, D::Error> {
        use serde::de::Error as _;
        BTreeMap::<String, f64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| k.trim().parse().map(|y| (y, v)).map_err(D::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Demographics {
    /// Share of founding households headed by a married couple.
    pub married: f64,
    /// Share of unmarried reference persons who are female.
    pub female_single_rp: f64,
    pub nonwhite: f64,
    /// Less than high school, high school, some college, college.
    pub education: [f64; 4],
    pub employed: f64,
    pub disabled: f64,
    /// Probability that employment or disability keeps its previous value
    /// rather than being redrawn from the stationary share.
    pub persistence: f64,
    pub rp_age_min: u32,
    pub rp_age_max: u32,
    pub max_children: u32,
}

impl Default for Demographics {
    fn default() -> Self {
        Self {
            married: 0.55,
            female_single_rp: 0.55,
            nonwhite: 0.2,
            education: [0.15, 0.32, 0.28, 0.25],
            employed: 0.72,
            disabled: 0.15,
            persistence: 0.8,
            rp_age_min: 20,
            rp_age_max: 75,
            max_children: 3,
        }
    }
}

/// Log annual per-capita income in base-period dollars:
/// `mu + education shift + employment shift + permanent + AR(1) transitory`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncomeParams {
    pub mu: f64,
    pub education_shift: [f64; 4],
    pub employed_shift: f64,
    pub sigma_permanent: f64,
    pub sigma_transitory: f64,
    pub rho: f64,
}

impl Default for IncomeParams {
    fn default() -> Self {
        Self {
            mu: 9.7,
            education_shift: [-0.35, 0.0, 0.15, 0.45],
            employed_shift: 0.3,
            sigma_permanent: 0.45,
            sigma_transitory: 0.3,
            rho: 0.6,
        }
    }
}

/// SNAP receipt: `logit p = intercept + income_slope * (ln income - 10)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapParams {
    pub intercept: f64,
    pub income_slope: f64,
}

impl Default for SnapParams {
    fn default() -> Self {
        Self { intercept: -2.6, income_slope: -1.6 }
    }
}

/// Raw scale score ~ Binomial(18, p) with
/// `p = min(0.95, base + slope * (1 - pfs)^power)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsssParams {
    pub base: f64,
    pub slope: f64,
    pub power: f64,
    /// Scores at or above this are classified insecure.
    pub insecure_at: u8,
}

impl Default for FsssParams {
    fn default() -> Self {
        Self { base: 0.005, slope: 0.6, power: 2.0, insecure_at: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    /// Founding households, each headed by a sample reference person.
    pub n_persons: usize,
    pub seed: u64,
    pub calendar: WaveCalendar,
    pub first_year: i32,
    pub last_year: i32,
    /// Coefficients of ln E[W | x], keyed by term name; absent terms are 0.
    pub mean_coefficients: BTreeMap<String, f64>,
    /// Coefficients of ln Var[W | x].
    pub variance_coefficients: BTreeMap<String, f64>,
    pub state_effect_sd: f64,
    /// Year effects are linear: trend per decade from 2000.
    pub mean_year_trend: f64,
    pub variance_year_trend: f64,
    pub states: Vec<String>,
    pub demographics: Demographics,
    pub income: IncomeParams,
    pub snap: SnapParams,
    pub fsss: FsssParams,
    pub attrition_rate: f64,
    pub split_off_rate: f64,
    pub marriage_rate: f64,
    pub divorce_rate: f64,
    pub birth_rate: f64,
    /// Probability that a spouse present at founding appears as a row.
    pub spouse_row_rate: f64,
    /// Probability that a child appears as a row while living at home.
    pub child_row_rate: f64,
    pub supplemental_share: f64,
    pub noncontiguous_share: f64,
    pub weight_median: f64,
    pub weight_sigma: f64,
    /// Expenditure at the wave before a household's first wave.
    pub initial_lag_mean: f64,
    pub initial_lag_sd: f64,
    /// Per-capita monthly TFP cost of a four-person household, base-period
    /// dollars, by year.
    #[serde(with = "year_keys")]
    pub tfp_schedule: BTreeMap<i32, f64>,
    /// Upper bound on any conditional mean; exceeding it is a config error.
    pub mean_cap: f64,
    /// First year with a published prevalence target.
    pub targets_from: i32,
}

pub fn default_mean_coefficients() -> BTreeMap<String, f64> {
    let v = [
        3.1, 0.0012, -1.0e-6, 0.012, -0.10, -0.08, 0.05, -0.03, -0.10, 0.05, 0.12, 0.06, -0.07, -0.06, -0.15,
        -0.04, 0.20, 0.05,
    ];
    TERMS.iter().zip(v).map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn default_variance_coefficients() -> BTreeMap<String, f64> {
    let v = [
        5.2, 0.003, -1.5e-6, 0.01, -0.08, 0.10, 0.05, 0.05, 0.10, 0.0, -0.05, -0.05, 0.10, -0.10, 0.10, 0.10,
        0.30, 0.10,
    ];
    TERMS.iter().zip(v).map(|(k, v)| (k.to_string(), v)).collect()
}

/// A gently varying real TFP cost around $165 per person per month.
pub fn default_tfp_schedule() -> BTreeMap<i32, f64> {
    (1970..=2030)
        .map(|y| {
            let t = (y - 1970) as f64;
            (y, ((165.0 + 6.0 * (t / 7.0).sin() - 0.1 * t) * 100.0).round() / 100.0)
        })
        .collect()
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n_persons: 2000,
            seed: 1,
            calendar: WaveCalendar::psid(),
            first_year: 1977,
            last_year: 2019,
            mean_coefficients: default_mean_coefficients(),
            variance_coefficients: default_variance_coefficients(),
            state_effect_sd: 0.05,
            mean_year_trend: 0.02,
            variance_year_trend: 0.04,
            states: contiguous_codes().into_iter().map(String::from).collect(),
            demographics: Demographics::default(),
            income: IncomeParams::default(),
            snap: SnapParams::default(),
            fsss: FsssParams::default(),
            attrition_rate: 0.02,
            split_off_rate: 0.08,
            marriage_rate: 0.06,
            divorce_rate: 0.03,
            birth_rate: 0.08,
            spouse_row_rate: 0.9,
            child_row_rate: 0.9,
            supplemental_share: 0.03,
            noncontiguous_share: 0.01,
            weight_median: 1500.0,
            weight_sigma: 0.5,
            initial_lag_mean: 260.0,
            initial_lag_sd: 100.0,
            tfp_schedule: default_tfp_schedule(),
            mean_cap: 5000.0,
            targets_from: 1995,
        }
    }
}

impl DgpConfig {
    /// Data waves inside `[first_year, last_year]`.
    pub fn data_waves(&self) -> Vec<i32> {
        self.calendar
            .data_waves()
            .into_iter()
            .filter(|y| (self.first_year..=self.last_year).contains(y))
            .collect()
    }

    fn coefficient_vector(map: &BTreeMap<String, f64>, which: &str) -> Result<[f64; 18]> {
        if let Some(k) = map.keys().find(|k| !TERMS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown {which} coefficient `{k}`")));
        }
        Ok(TERMS.map(|t| map.get(t).copied().unwrap_or(0.0)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        WaveCalendar::new(self.calendar.waves().to_vec(), self.calendar.gap_years().iter().copied())?;
        if self.n_persons == 0 {
            return bad("n_persons must be positive".into());
        }
        if self.first_year > self.last_year {
            return bad(format!("first_year {} is after last_year {}", self.first_year, self.last_year));
        }
        let waves = self.data_waves();
        if waves.is_empty() {
            return bad("no data wave between first_year and last_year".into());
        }
        let d = &self.demographics;
        let rates = [
            ("attrition_rate", self.attrition_rate),
            ("split_off_rate", self.split_off_rate),
            ("marriage_rate", self.marriage_rate),
            ("divorce_rate", self.divorce_rate),
            ("birth_rate", self.birth_rate),
            ("spouse_row_rate", self.spouse_row_rate),
            ("child_row_rate", self.child_row_rate),
            ("supplemental_share", self.supplemental_share),
            ("noncontiguous_share", self.noncontiguous_share),
            ("demographics.married", d.married),
            ("demographics.female_single_rp", d.female_single_rp),
            ("demographics.nonwhite", d.nonwhite),
            ("demographics.employed", d.employed),
            ("demographics.disabled", d.disabled),
            ("demographics.persistence", d.persistence),
        ];
        for (name, v) in rates.into_iter().chain(d.education.iter().map(|&v| ("demographics.education", v))) {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if (d.education.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("demographics.education shares must sum to 1".into());
        }
        if d.rp_age_min < 16 || d.rp_age_min > d.rp_age_max {
            return bad("reference-person age range must satisfy 16 <= min <= max".into());
        }
        let positive = [
            ("mean_cap", self.mean_cap),
            ("weight_median", self.weight_median),
            ("initial_lag_mean", self.initial_lag_mean),
            ("initial_lag_sd", self.initial_lag_sd),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        let nonneg = [
            ("weight_sigma", self.weight_sigma),
            ("state_effect_sd", self.state_effect_sd),
            ("income.sigma_permanent", self.income.sigma_permanent),
            ("income.sigma_transitory", self.income.sigma_transitory),
            ("fsss.base", self.fsss.base),
            ("fsss.slope", self.fsss.slope),
            ("fsss.power", self.fsss.power),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative"));
            }
        }
        if !(-1.0..=1.0).contains(&self.income.rho) {
            return bad("income.rho must lie in [-1, 1]".into());
        }
        if self.fsss.insecure_at > 18 {
            return bad("fsss.insecure_at must be at most 18".into());
        }
        if self.states.is_empty() {
            return bad("states must not be empty".into());
        }
        for s in &self.states {
            if !matches!(residence(s), Some(Residence::Contiguous(_))) {
                return bad(format!("state `{s}` is not a contiguous-state code"));
            }
        }
        for y in &waves {
            match self.tfp_schedule.get(y) {
                Some(c) if *c > 0.0 => {}
                _ => return bad(format!("tfp_schedule has no positive cost for {y}")),
            }
        }
        Self::coefficient_vector(&self.mean_coefficients, "mean")?;
        Self::coefficient_vector(&self.variance_coefficients, "variance")?;
        Ok(())
    }
}

/// Hidden truth for one emitted person-year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub person_id: String,
    pub year: i32,
    pub household_id: String,
    pub true_mean: f64,
    pub true_variance: f64,
    pub true_pfs: f64,
    /// The drawn monthly per-capita expenditure, base-period dollars.
    pub expenditure_pc: f64,
    pub tfp_cost_pc: f64,
    /// Lag the process used (the pre-sample draw at a household's first wave).
    pub lag: f64,
    pub rp_changed: bool,
}

/// Counts kept alongside the panel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SynthSummary {
    pub households: usize,
    pub persons: usize,
    pub rows: usize,
    pub split_offs: usize,
    pub attrited: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub records: Vec<RawRecord>,
    pub truth: Vec<TruthRow>,
    /// `(year, month, index)` rows of the CPI table used to inflate.
    pub cpi_rows: Vec<(i32, u8, f64)>,
    pub macro_rows: Vec<MacroRow>,
    pub targets: BTreeMap<i32, f64>,
    pub reference: Vec<ReferenceComposition>,
    /// Mean and variance effect of each state.
    pub state_effects: BTreeMap<String, (f64, f64)>,
    pub summary: SynthSummary,
}

impl SyntheticPanel {
    pub fn cpi(&self) -> Result<CpiTable> {
        CpiTable::from_rows(self.cpi_rows.iter().map(|&(y, m, v)| (y, Some(m), v)))
    }
}

/// Monthly CPI rising about 3.5% a year, January 2019 = 251.712, rounded
/// to three decimals.
pub fn synthetic_cpi_rows(first_year: i32, last_year: i32) -> Vec<(i32, u8, f64)> {
    let mut out = Vec::new();
    for y in first_year..=last_year.max(CpiTable::BASE_YEAR) {
        for m in 1..=12u8 {
            let t = (y - CpiTable::BASE_YEAR) as f64 + (m as f64 - 1.0) / 12.0;
            let v = 251.712 * (0.0348 * t).exp();
            out.push((y, m, (v * 1000.0).round() / 1000.0));
        }
    }
    out
}

/// One draw from Gamma(mean²/var, var/mean), with the parameters used.
pub fn draw_expenditure<R: Rng + ?Sized>(rng: &mut R, mean: f64, variance: f64) -> Result<(GammaParams, f64)> {
    let params = gamma_from_moments(mean, variance)?;
    let w = Gamma::new(params.alpha, params.beta)
        .map_err(|e| Error::Numeric(format!("gamma sampler: {e}")))?
        .sample(rng);
    Ok((params, w))
}

/// TFP household-size adjustment applied to the four-person cost.
pub fn tfp_size_factor(family_size: u32) -> f64 {
    match family_size {
        0 | 1 => 1.2,
        2 => 1.1,
        3 => 1.05,
        4 => 1.0,
        5 | 6 => 0.95,
        _ => 0.9,
    }
}

#[derive(Debug, Clone)]
struct Member {
    pid: u64,
    sex: Sex,
    race: Race,
    education: Education,
    birth_year: i32,
    flag: SampleFlag,
    emitted: bool,
}

#[derive(Debug, Clone)]
struct Household {
    id: String,
    state: String,
    /// `members[0]` is the reference person; a spouse, when present, is
    /// `members[1]`.
    members: Vec<Member>,
    married: bool,
    employed: bool,
    disabled: bool,
    perm_income: f64,
    trans_income: f64,
    weight: f64,
    /// Expenditure at the household's previous data wave.
    lag: f64,
    /// RP at the previous data wave of the household (for split-offs, of
    /// the parent household).
    last_rp: Option<u64>,
    new_this_wave: bool,
}

fn draw_education(rng: &mut ChaCha20Rng, shares: &[f64; 4]) -> Education {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (e, s) in Education::ALL.iter().zip(shares) {
        acc += s;
        if u < acc {
            return *e;
        }
    }
    Education::College
}

fn edu_index(e: Education) -> usize {
    Education::ALL.iter().position(|x| *x == e).unwrap_or(1)
}

fn normal(rng: &mut ChaCha20Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("finite normal parameters").sample(rng)
}

/// Population-level effects drawn from stream 0.
struct Population {
    state_effects: BTreeMap<String, (f64, f64)>,
}

impl Population {
    fn new(cfg: &DgpConfig) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let mut codes: Vec<String> = cfg.states.clone();
        codes.extend(["AK".to_string(), "HI".to_string()]);
        codes.sort();
        codes.dedup();
        let state_effects = codes
            .into_iter()
            .map(|s| {
                let m = normal(&mut rng, 0.0, cfg.state_effect_sd);
                let v = normal(&mut rng, 0.0, cfg.state_effect_sd);
                (s, (m, v))
            })
            .collect();
        Self { state_effects }
    }
}

struct DynastyOutput {
    records: Vec<RawRecord>,
    truth: Vec<TruthRow>,
    summary: SynthSummary,
}

struct Dynasty<'a> {
    cfg: &'a DgpConfig,
    pop: &'a Population,
    cpi: &'a CpiTable,
    beta: [f64; 18],
    lambda: [f64; 18],
    rng: ChaCha20Rng,
    index: usize,
    next_person: u64,
    next_household: u64,
    supplemental: Option<SampleFlag>,
}

impl Dynasty<'_> {
    fn new_pid(&mut self) -> u64 {
        self.next_person += 1;
        self.index as u64 * 1000 + self.next_person
    }

    fn new_hid(&mut self) -> String {
        let id = format!("{}_{}", self.index, self.next_household);
        self.next_household += 1;
        id
    }

    fn member_flag(&self, descendant: bool) -> SampleFlag {
        match (self.supplemental, descendant) {
            (Some(f), _) => f,
            (None, true) => SampleFlag::LinealDescendant,
            (None, false) => SampleFlag::Original1968,
        }
    }

    fn initial_lag(&mut self) -> f64 {
        let m = self.cfg.initial_lag_mean;
        let v = self.cfg.initial_lag_sd.powi(2);
        Gamma::new(m * m / v, v / m).expect("positive gamma parameters").sample(&mut self.rng)
    }

    fn found(&mut self, year: i32) -> Household {
        let d = self.cfg.demographics.clone();
        let married = self.rng.random_bool(d.married);
        let race = if self.rng.random_bool(d.nonwhite) { Race::NonWhite } else { Race::White };
        let age = self.rng.random_range(d.rp_age_min..=d.rp_age_max) as i32;
        let rp_sex = if married || !self.rng.random_bool(d.female_single_rp) { Sex::Male } else { Sex::Female };
        let flag = self.member_flag(false);
        let mut members = vec![Member {
            pid: self.new_pid(),
            sex: rp_sex,
            race,
            education: draw_education(&mut self.rng, &d.education),
            birth_year: year - age,
            flag,
            emitted: true,
        }];
        if married {
            let sp_age = (age + self.rng.random_range(-4..=2)).max(18);
            let emitted = self.rng.random_bool(self.cfg.spouse_row_rate);
            members.push(Member {
                pid: self.new_pid(),
                sex: Sex::Female,
                race,
                education: draw_education(&mut self.rng, &d.education),
                birth_year: year - sp_age,
                flag,
                emitted,
            });
        }
        if age < 50 && d.max_children > 0 {
            let kids = self.rng.random_range(0..=d.max_children);
            for _ in 0..kids {
                let oldest = (age - 18).clamp(0, 17);
                let kid_age = self.rng.random_range(0..=oldest);
                let child = self.child(year - kid_age, race);
                members.push(child);
            }
        }
        let employed = self.rng.random_bool(d.employed);
        let disabled = self.rng.random_bool(d.disabled);
        let state = if self.rng.random_bool(self.cfg.noncontiguous_share) {
            if self.rng.random_bool(0.5) { "AK" } else { "HI" }.to_string()
        } else {
            let k = self.rng.random_range(0..self.cfg.states.len());
            self.cfg.states[k].to_ascii_uppercase()
        };
        let weight = (normal(&mut self.rng, self.cfg.weight_median.ln(), self.cfg.weight_sigma)).exp();
        let perm_income = normal(&mut self.rng, 0.0, self.cfg.income.sigma_permanent);
        let trans_income = normal(&mut self.rng, 0.0, self.cfg.income.sigma_transitory);
        let lag = self.initial_lag();
        Household {
            id: self.new_hid(),
            state,
            members,
            married,
            employed,
            disabled,
            perm_income,
            trans_income,
            weight,
            lag,
            last_rp: None,
            new_this_wave: true,
        }
    }

    fn child(&mut self, birth_year: i32, race: Race) -> Member {
        let emitted = self.rng.random_bool(self.cfg.child_row_rate);
        Member {
            pid: self.new_pid(),
            sex: if self.rng.random_bool(0.5) { Sex::Female } else { Sex::Male },
            race,
            education: draw_education(&mut self.rng, &self.cfg.demographics.education),
            birth_year,
            flag: self.member_flag(true),
            emitted,
        }
    }

    fn markov(&mut self, prev: bool, share: f64) -> bool {
        if self.rng.random_bool(self.cfg.demographics.persistence) {
            prev
        } else {
            self.rng.random_bool(share)
        }
    }

    /// Between-wave events for a continuing household. Returns split-off
    /// households.
    fn evolve(&mut self, h: &mut Household, year: i32) -> Vec<Household> {
        let d = self.cfg.demographics.clone();
        h.new_this_wave = false;
        h.employed = self.markov(h.employed, d.employed);
        h.disabled = self.markov(h.disabled, d.disabled);
        let inc = &self.cfg.income;
        let shock = normal(&mut self.rng, 0.0, inc.sigma_transitory * (1.0 - inc.rho * inc.rho).sqrt());
        h.trans_income = inc.rho * h.trans_income + shock;

        let rp_before = h.members[0].pid;
        if h.married && self.rng.random_bool(self.cfg.divorce_rate) {
            // the nonsample partner leaves if there is one, otherwise the spouse
            let leaver = if h.members[0].flag == SampleFlag::Nonsample { 0 } else { 1 };
            h.members.remove(leaver);
            h.married = false;
        } else if !h.married && self.rng.random_bool(self.cfg.marriage_rate) {
            let rp = &h.members[0];
            let age = year - rp.birth_year;
            let partner = Member {
                pid: self.new_pid(),
                sex: if rp.sex == Sex::Male { Sex::Female } else { Sex::Male },
                race: rp.race,
                education: draw_education(&mut self.rng, &d.education),
                birth_year: year - (age + self.rng.random_range(-3..=3)).max(18),
                flag: SampleFlag::Nonsample,
                emitted: true,
            };
            if partner.sex == Sex::Male {
                h.members.insert(0, partner);
            } else {
                h.members.insert(1, partner);
            }
            h.married = true;
        }
        let rp_age = year - h.members[0].birth_year;
        // no births in a wave where the RP changes
        let same_rp = h.members[0].pid == rp_before;
        if same_rp && h.married && (18..=45).contains(&rp_age) && self.rng.random_bool(self.cfg.birth_rate) {
            let race = h.members[0].race;
            let kid = self.child(year, race);
            h.members.push(kid);
        }

        let first_child = if h.married { 2 } else { 1 };
        let mut splits = Vec::new();
        let mut k = first_child;
        while k < h.members.len() {
            let age = year - h.members[k].birth_year;
            if age >= 18 && self.rng.random_bool(self.cfg.split_off_rate) {
                let mut m = h.members.remove(k);
                // the RP change is visible only to a child who had rows at home
                let last_rp = if m.emitted { h.last_rp } else { None };
                m.emitted = true;
                let perm_income = normal(&mut self.rng, 0.0, self.cfg.income.sigma_permanent);
                let trans_income = normal(&mut self.rng, 0.0, self.cfg.income.sigma_transitory);
                splits.push(Household {
                    id: self.new_hid(),
                    state: h.state.clone(),
                    members: vec![m],
                    married: false,
                    employed: self.rng.random_bool(d.employed),
                    disabled: self.rng.random_bool(d.disabled),
                    perm_income,
                    trans_income,
                    weight: h.weight,
                    lag: h.lag,
                    last_rp,
                    new_this_wave: false,
                });
            } else {
                k += 1;
            }
        }
        splits
    }

    fn ln_income(&self, h: &Household) -> f64 {
        let inc = &self.cfg.income;
        inc.mu
            + inc.education_shift[edu_index(h.members[0].education)]
            + if h.employed { inc.employed_shift } else { 0.0 }
            + h.perm_income
            + h.trans_income
    }

    fn year_effect(trend: f64, year: i32) -> f64 {
        trend * (year - 2000) as f64 / 10.0
    }

    /// Draw this wave's expenditure and emit one row per visible member.
    fn observe(&mut self, h: &mut Household, year: i32, out: &mut DynastyOutput) -> Result<()> {
        let cfg = self.cfg;
        let rp = h.members[0].clone();
        let rp_age = (year - rp.birth_year) as f64;
        let family_size = h.members.len() as u32;
        let n_children = h.members.iter().filter(|m| year - m.birth_year < 18).count() as u32;
        let child_ratio = n_children as f64 / family_size as f64;
        let ln_inc = self.ln_income(h);
        let p_snap = 1.0 / (1.0 + (-(cfg.snap.intercept + cfg.snap.income_slope * (ln_inc - 10.0))).exp());
        let snap = self.rng.random_bool(p_snap);
        let rp_changed = h.last_rp.is_some_and(|r| r != rp.pid);
        let edu = rp.education;
        let x: [f64; 18] = [
            1.0,
            h.lag,
            h.lag * h.lag,
            rp_age,
            rp_age * rp_age / 1000.0,
            (rp.race == Race::NonWhite) as u8 as f64,
            h.married as u8 as f64,
            (rp.sex == Sex::Female) as u8 as f64,
            (edu == Education::LessHs) as u8 as f64,
            (edu == Education::SomeCollege) as u8 as f64,
            (edu == Education::College) as u8 as f64,
            h.employed as u8 as f64,
            h.disabled as u8 as f64,
            family_size as f64,
            child_ratio,
            rp_changed as u8 as f64,
            ln_inc,
            snap as u8 as f64,
        ];
        let (se_m, se_v) = self.pop.state_effects.get(&h.state).copied().unwrap_or((0.0, 0.0));
        let dot = |c: &[f64; 18]| c.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        let mean = (dot(&self.beta) + se_m + Self::year_effect(cfg.mean_year_trend, year)).exp();
        let variance = (dot(&self.lambda) + se_v + Self::year_effect(cfg.variance_year_trend, year)).exp();
        if !(mean <= cfg.mean_cap) {
            return Err(Error::Config(format!(
                "conditional mean {mean:.1} in household {} year {year} exceeds mean_cap {}",
                h.id, cfg.mean_cap
            )));
        }
        let (params, w) = draw_expenditure(&mut self.rng, mean, variance)?;
        let tfp_real = cfg.tfp_schedule[&year] * tfp_size_factor(family_size);
        let true_pfs = gamma_survival(tfp_real, params)?;

        let month: u8 = self.rng.random_range(1..=12);
        let cpi = self.cpi;
        let inflate = |x: f64| cpi.inflate(x, year, Some(month));
        let total = inflate(w * family_size as f64)?;
        let benefit = snap.then(|| total * self.rng.random_range(0.15..0.5));
        let remaining = total - benefit.unwrap_or(0.0);
        let (benefit_raw, benefit_recall) = match benefit {
            Some(b) => {
                let r = self.pick_recall(&[(Recall::Month, 0.7), (Recall::Week, 0.1), (Recall::TwoWeek, 0.05), (Recall::Year, 0.15)]);
                (Some(b / r.monthly_factor().unwrap_or(1.0)), r)
            }
            None => (None, Recall::Missing),
        };
        let food = self.food_components(remaining, year);
        let snap_raw = self.snap_raw(snap, year, month, family_size);
        let income_annual = inflate(ln_inc.exp() * family_size as f64)?;
        let tfp_nominal = inflate(tfp_real)?;
        let (fsss_raw, fsss_status) = if FSSS_WAVES.contains(&year) {
            let f = &cfg.fsss;
            let p = (f.base + f.slope * (1.0 - true_pfs).powf(f.power)).min(0.95);
            let score = Binomial::new(18, p)
                .map_err(|e| Error::Numeric(format!("binomial sampler: {e}")))?
                .sample(&mut self.rng) as u8;
            let status = if score >= f.insecure_at { FoodStatus::Insecure } else { FoodStatus::Secure };
            (Some(score), Some(status))
        } else {
            (None, None)
        };
        let rp_demo = RpDemographics {
            age: Some(rp_age),
            sex: Some(rp.sex),
            race: Some(rp.race),
            married: Some(h.married),
            education: Some(edu),
            employed: Some(h.employed),
            disabled: Some(h.disabled),
        };
        for (k, m) in h.members.iter().enumerate() {
            if !m.emitted {
                continue;
            }
            let role = match k {
                0 => Role::Rp,
                1 if h.married => Role::Sp,
                _ => Role::Ch,
            };
            let age = (year - m.birth_year) as f64;
            out.records.push(RawRecord {
                person_id: m.pid.to_string(),
                year,
                household_id: h.id.clone(),
                role,
                interview_month: Some(month),
                individual_weight: if m.flag == SampleFlag::Nonsample { 0.0 } else { h.weight },
                state: h.state.clone(),
                sample_flag: m.flag,
                snap_raw: Some(snap_raw.clone()),
                snap_benefit_raw: benefit_raw,
                benefit_recall,
                food,
                family_size,
                n_children,
                income_annual: Some(income_annual),
                tfp_cost_pc: tfp_nominal,
                fsss_raw,
                fsss_status,
                rp: rp_demo.clone(),
                person: PersonDemographics {
                    age: Some(age),
                    sex: Some(m.sex),
                    race: Some(m.race),
                    education: (age >= 16.0).then_some(m.education),
                },
            });
            out.truth.push(TruthRow {
                person_id: m.pid.to_string(),
                year,
                household_id: h.id.clone(),
                true_mean: mean,
                true_variance: variance,
                true_pfs,
                expenditure_pc: w,
                tfp_cost_pc: tfp_real,
                lag: h.lag,
                rp_changed,
            });
            out.summary.rows += 1;
        }
        h.lag = w;
        h.last_rp = Some(rp.pid);
        Ok(())
    }

    fn pick_recall(&mut self, table: &[(Recall, f64)]) -> Recall {
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (r, p) in table {
            acc += p;
            if u < acc {
                return *r;
            }
        }
        table[table.len() - 1].0
    }

    /// Split a monthly nominal amount into reported components.
    fn food_components(&mut self, monthly: f64, year: i32) -> FoodComponents {
        if year < 1994 {
            let home = monthly * self.rng.random_range(0.6..0.9);
            let recall = if self.rng.random_bool(0.5) { Recall::Missing } else { Recall::Year };
            return FoodComponents {
                home: Component { amount: Some(home * 12.0), recall },
                delivered: Component::default(),
                eaten_out: Component { amount: Some((monthly - home) * 12.0), recall },
            };
        }
        let home = monthly * self.rng.random_range(0.55..0.85);
        let delivered = if self.rng.random_bool(0.1) { monthly * self.rng.random_range(0.0..0.1) } else { 0.0 };
        let out = monthly - home - delivered;
        let table = [(Recall::Week, 0.5), (Recall::TwoWeek, 0.1), (Recall::Month, 0.35), (Recall::Year, 0.05)];
        let mut comp = |v: f64| {
            let r = self.pick_recall(&table);
            Component { amount: Some(v / r.monthly_factor().unwrap_or(1.0)), recall: r }
        };
        FoodComponents {
            home: comp(home),
            delivered: if delivered > 0.0 { comp(delivered) } else { Component::default() },
            eaten_out: comp(out),
        }
    }

    fn snap_raw(&mut self, snap: bool, year: i32, month: u8, family_size: u32) -> String {
        use crate::ingest::harmonize::{snap_regime, SnapRegime};
        match snap_regime(year) {
            SnapRegime::MemberCount => if snap { family_size.to_string() } else { "0".into() },
            SnapRegime::YesNo => if snap { "yes" } else { "no" }.into(),
            SnapRegime::MonthlyFlags => {
                let prior = if month == 1 { 11 } else { month as usize - 2 };
                (0..12)
                    .map(|i| {
                        let on = if i == prior { snap } else { snap ^ self.rng.random_bool(0.2) };
                        if on { '1' } else { '0' }
                    })
                    .collect()
            }
        }
    }

    fn run(mut self, waves: &[i32]) -> Result<DynastyOutput> {
        let mut out = DynastyOutput { records: Vec::new(), truth: Vec::new(), summary: SynthSummary::default() };
        let entry = match self.supplemental {
            Some(_) => waves.iter().copied().find(|&y| y >= 1997).unwrap_or(waves[0]),
            None => waves[0],
        };
        let mut active = vec![self.found(entry)];
        out.summary.households = 1;
        for &year in waves.iter().filter(|&&y| y >= entry) {
            let mut next = Vec::with_capacity(active.len());
            for mut h in active {
                if !h.new_this_wave {
                    if self.rng.random_bool(self.cfg.attrition_rate) {
                        out.summary.attrited += 1;
                        continue;
                    }
                    let splits = self.evolve(&mut h, year);
                    out.summary.split_offs += splits.len();
                    out.summary.households += splits.len();
                    next.push(h);
                    next.extend(splits);
                } else {
                    next.push(h);
                }
            }
            for h in next.iter_mut() {
                self.observe(h, year, &mut out)?;
                h.new_this_wave = false;
            }
            active = next;
        }
        out.summary.persons = (self.next_person) as usize;
        Ok(out)
    }
}

/// Macro series, prevalence targets and reference composition, drawn from
/// stream 0 after the state effects.
fn population_series(cfg: &DgpConfig, years: &[i32]) -> (Vec<MacroRow>, BTreeMap<i32, f64>, Vec<ReferenceComposition>) {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let round = |x: f64, d: i32| (x * 10f64.powi(d)).round() / 10f64.powi(d);
    let first = cfg.first_year - 1;
    let mut unemployment = BTreeMap::new();
    for y in first..=cfg.last_year {
        let t = (y - 1977) as f64;
        let u = 6.0 + 1.5 * (2.0 * std::f64::consts::PI * t / 8.5).sin() + normal(&mut rng, 0.0, 0.3);
        unemployment.insert(y, round(u.clamp(3.5, 10.5), 2));
    }
    let mut macro_rows = Vec::new();
    for y in cfg.first_year..=cfg.last_year {
        let u = unemployment[&y];
        let du = u - unemployment[&(y - 1)];
        macro_rows.push(MacroRow {
            year: y,
            snap_rate: round(7.5 + 0.8 * (u - 6.0) + 0.12 * (y - 2000).max(0) as f64 + normal(&mut rng, 0.0, 0.3), 2),
            unemployment: u,
            gdp_pc_growth: round(1.8 - 0.9 * du + normal(&mut rng, 0.0, 0.5), 2),
            ln_disp_income_pc: round(25_000f64.ln() + 0.015 * (y - 1977) as f64 + normal(&mut rng, 0.0, 0.01), 4),
            poverty_rate: round(12.8 + 0.5 * (u - 6.0) + normal(&mut rng, 0.0, 0.3), 2),
        });
    }
    let mut targets = BTreeMap::new();
    for m in &macro_rows {
        if m.year >= cfg.targets_from && years.contains(&m.year) {
            let t = 0.115 + 0.008 * (m.snap_rate - 10.0) + normal(&mut rng, 0.0, 0.004);
            targets.insert(m.year, round(t.clamp(0.03, 0.3), 3));
        }
    }
    let d = &cfg.demographics;
    let reference = years
        .iter()
        .map(|&year| ReferenceComposition {
            year,
            female_share: round((1.0 - d.married) * d.female_single_rp, 4),
            nonwhite_share: round(d.nonwhite, 4),
        })
        .collect();
    (macro_rows, targets, reference)
}

/// Generate a panel. Deterministic for a fixed config, independent of the
/// number of threads.
pub fn generate(cfg: &DgpConfig) -> Result<SyntheticPanel> {
    cfg.validate()?;
    let waves = cfg.data_waves();
    let beta = DgpConfig::coefficient_vector(&cfg.mean_coefficients, "mean")?;
    let lambda = DgpConfig::coefficient_vector(&cfg.variance_coefficients, "variance")?;
    let cpi_rows = synthetic_cpi_rows(cfg.first_year - 1, cfg.last_year);
    let cpi = CpiTable::from_rows(cpi_rows.iter().map(|&(y, m, v)| (y, Some(m), v)))?;
    let pop = Population::new(cfg);
    let n_supplemental = (cfg.n_persons as f64 * cfg.supplemental_share).round() as usize;
    let outputs: Vec<DynastyOutput> = (1..=cfg.n_persons)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
            rng.set_stream(index as u64);
            let supplemental = (index > cfg.n_persons - n_supplemental).then(|| {
                if index % 2 == 0 {
                    SampleFlag::ImmigrantRefresher
                } else {
                    SampleFlag::LatinoSupplement
                }
            });
            Dynasty {
                cfg,
                pop: &pop,
                cpi: &cpi,
                beta,
                lambda,
                rng,
                index,
                next_person: 0,
                next_household: 0,
                supplemental,
            }
            .run(&waves)
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    let mut truth = Vec::new();
    let mut summary = SynthSummary::default();
    for o in outputs {
        records.extend(o.records);
        truth.extend(o.truth);
        summary.households += o.summary.households;
        summary.persons += o.summary.persons;
        summary.rows += o.summary.rows;
        summary.split_offs += o.summary.split_offs;
        summary.attrited += o.summary.attrited;
    }
    let (macro_rows, targets, reference) = population_series(cfg, &waves);
    Ok(SyntheticPanel {
        records,
        truth,
        cpi_rows,
        macro_rows,
        targets,
        reference,
        state_effects: pop.state_effects,
        summary,
    })
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn write_truth<W: Write>(out: W, rows: &[TruthRow]) -> Result<()> {
    let mut w = writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// True coefficients of both equations plus state and year effects.
pub fn write_truth_coefficients<W: Write>(out: W, cfg: &DgpConfig, panel: &SyntheticPanel) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["equation", "term", "value"])?;
    for (eq, map) in [("mean", &cfg.mean_coefficients), ("variance", &cfg.variance_coefficients)] {
        for t in TERMS {
            w.write_record([eq, t, &map.get(t).copied().unwrap_or(0.0).to_string()])?;
        }
    }
    for (s, (m, v)) in &panel.state_effects {
        w.write_record(["mean", &format!("state_effect[{s}]"), &m.to_string()])?;
        w.write_record(["variance", &format!("state_effect[{s}]"), &v.to_string()])?;
    }
    for y in cfg.data_waves() {
        let m = Dynasty::year_effect(cfg.mean_year_trend, y);
        let v = Dynasty::year_effect(cfg.variance_year_trend, y);
        w.write_record(["mean", &format!("year_effect[{y}]"), &m.to_string()])?;
        w.write_record(["variance", &format!("year_effect[{y}]"), &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cpi<W: Write>(out: W, rows: &[(i32, u8, f64)]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["year", "month", "index"])?;
    for (y, m, v) in rows {
        w.write_record([y.to_string(), m.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_macro<W: Write>(out: W, rows: &[MacroRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["year", "snap_rate", "unemployment", "gdp_pc_growth", "ln_disp_income_pc", "poverty_rate"])?;
    for r in rows {
        w.write_record([
            r.year.to_string(),
            r.snap_rate.to_string(),
            r.unemployment.to_string(),
            r.gdp_pc_growth.to_string(),
            r.ln_disp_income_pc.to_string(),
            r.poverty_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_targets<W: Write>(out: W, targets: &BTreeMap<i32, f64>) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["year", "prevalence"])?;
    for (y, p) in targets {
        w.write_record([y.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reference<W: Write>(out: W, rows: &[ReferenceComposition]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["year", "female_share", "nonwhite_share"])?;
    for r in rows {
        w.write_record([r.year.to_string(), r.female_share.to_string(), r.nonwhite_share.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
