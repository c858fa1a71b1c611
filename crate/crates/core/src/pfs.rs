//! Conditional mean and variance of per-capita food expenditure and the
//! resulting probability of food security.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::calendar::WaveCalendar;
use crate::dynasty::PersonYear;
use crate::error::{Error, Result};
use crate::gamma::{gamma_from_moments, gamma_survival};
use crate::glm::{build_design, fit_poisson_qmle, predict, Covariate, DesignSpec, FittedModel, Frame, RowExclusion};
use crate::ingest::{fmt_real, Race, Sex};

/// Column names in the estimation frame.
pub mod col {
    pub const PERSON: &str = "person_id";
    pub const YEAR: &str = "year";
    pub const FOOD: &str = "food_exp_pc";
    pub const WEIGHT: &str = "adjusted_weight";
    pub const STATE: &str = "state";
    pub const RP_AGE: &str = "rp_age";
    pub const RP_AGE_SQ: &str = "rp_age_sq_k";
    pub const RP_RACE: &str = "rp_race";
    pub const RP_MARRIED: &str = "rp_married";
    pub const RP_SEX: &str = "rp_sex";
    pub const RP_EDUCATION: &str = "rp_education";
    pub const RP_EMPLOYED: &str = "rp_employed";
    pub const RP_DISABLED: &str = "rp_disabled";
    pub const FAMILY_SIZE: &str = "family_size";
    pub const CHILD_RATIO: &str = "child_ratio";
    pub const RP_CHANGED: &str = "rp_changed";
    pub const LN_INCOME: &str = "ln_income_pc";
    pub const SNAP: &str = "snap";
    pub const AGE: &str = "age";
    pub const AGE_SQ: &str = "age_sq_k";
    pub const EDUCATION: &str = "education";
}

fn flag_label(v: Option<bool>, yes: &str, no: &str) -> Option<String> {
    v.map(|b| if b { yes } else { no }.to_string())
}

/// Natural log of a per-capita income, floored at one dollar so zero and
/// negative incomes stay finite.
pub fn ln_income(x: f64) -> f64 {
    x.max(1.0).ln()
}

/// Estimation frame with one row per person-year, in input order.
pub fn estimation_frame(person_years: &[PersonYear]) -> Result<Frame> {
    let n = person_years.len();
    let r = |f: &dyn Fn(&PersonYear) -> Option<f64>| person_years.iter().map(f).collect::<Vec<_>>();
    let c = |f: &dyn Fn(&PersonYear) -> Option<String>| person_years.iter().map(f).collect::<Vec<_>>();
    Frame::new(n)
        .with_categorical(col::PERSON, c(&|p| Some(p.record.person_id.clone())))?
        .with_numeric(col::YEAR, r(&|p| Some(p.record.year as f64)))?
        .with_numeric(col::FOOD, r(&|p| Some(p.record.food_exp_pc_month)))?
        .with_numeric(col::WEIGHT, r(&|p| Some(p.adjusted_weight)))?
        .with_categorical(col::STATE, c(&|p| Some(p.record.state.clone())))?
        .with_numeric(col::RP_AGE, r(&|p| p.record.rp.age))?
        .with_numeric(col::RP_AGE_SQ, r(&|p| p.record.rp.age.map(|a| a * a / 1000.0)))?
        .with_categorical(col::RP_RACE, c(&|p| p.record.rp.race.map(|x| x.to_string())))?
        .with_categorical(col::RP_MARRIED, c(&|p| flag_label(p.record.rp.married, "married", "not_married")))?
        .with_categorical(col::RP_SEX, c(&|p| p.record.rp.sex.map(|x| x.to_string())))?
        .with_categorical(col::RP_EDUCATION, c(&|p| p.record.rp.education.map(|x| x.to_string())))?
        .with_categorical(col::RP_EMPLOYED, c(&|p| flag_label(p.record.rp.employed, "employed", "not_employed")))?
        .with_categorical(col::RP_DISABLED, c(&|p| flag_label(p.record.rp.disabled, "disabled", "not_disabled")))?
        .with_numeric(col::FAMILY_SIZE, r(&|p| Some(p.record.family_size as f64)))?
        .with_numeric(col::CHILD_RATIO, r(&|p| Some(p.record.child_ratio)))?
        .with_numeric(col::RP_CHANGED, r(&|p| Some(if p.rp_changed { 1.0 } else { 0.0 })))?
        .with_numeric(col::LN_INCOME, r(&|p| p.record.income_pc.map(ln_income)))?
        .with_numeric(col::SNAP, r(&|p| Some(if p.record.snap_status { 1.0 } else { 0.0 })))?
        .with_numeric(col::AGE, r(&|p| p.record.person.age))?
        .with_numeric(col::AGE_SQ, r(&|p| p.record.person.age.map(|a| a * a / 1000.0)))?
        .with_categorical(col::EDUCATION, c(&|p| p.record.person.education.map(|x| x.to_string())))
}

/// Household covariates shared by the mean and variance equations, with
/// male, White, high school, not married, not employed and not disabled as
/// reference categories.
pub fn household_covariates() -> Vec<Covariate> {
    vec![
        Covariate::numeric(col::RP_AGE),
        Covariate::numeric(col::RP_AGE_SQ),
        Covariate::categorical(col::RP_RACE, Race::White.as_str()),
        Covariate::categorical(col::RP_MARRIED, "not_married"),
        Covariate::categorical(col::RP_SEX, Sex::Male.as_str()),
        Covariate::categorical(col::RP_EDUCATION, "hs"),
        Covariate::categorical(col::RP_EMPLOYED, "not_employed"),
        Covariate::categorical(col::RP_DISABLED, "not_disabled"),
        Covariate::numeric(col::FAMILY_SIZE),
        Covariate::numeric(col::CHILD_RATIO),
        Covariate::numeric(col::RP_CHANGED),
        Covariate::numeric(col::LN_INCOME),
        Covariate::numeric(col::SNAP),
    ]
}

/// Quadratic lag of food expenditure, household covariates, state and year
/// fixed effects, adjusted survey weights.
pub fn default_moment_spec() -> DesignSpec {
    let mut spec = DesignSpec::new(col::FOOD).lag(2).fixed_effect(col::STATE).fixed_effect(col::YEAR);
    spec.covariates = household_covariates();
    spec.weighted_by(col::WEIGHT)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalMoments {
    pub person_id: String,
    pub year: i32,
    pub household_id: String,
    pub observed: f64,
    pub mean: f64,
    pub variance: f64,
    pub residual: f64,
    pub tfp_cost: f64,
    pub adjusted_weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentExclusion {
    pub person_id: String,
    pub year: i32,
    pub reason: RowExclusion,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentFit {
    pub moments: Vec<ConditionalMoments>,
    pub mean_model: FittedModel,
    /// `None` when the squared residuals are all (numerically) zero.
    pub variance_model: Option<FittedModel>,
    pub columns: Vec<String>,
    pub excluded: Vec<MomentExclusion>,
    /// Rows whose fitted variance was raised to the floor.
    pub n_variance_floored: usize,
}

/// Lower bound applied to a fitted variance.
pub fn variance_floor(mean: f64) -> f64 {
    (1e-8 * mean * mean).max(1e-6)
}

fn require_converged(m: &FittedModel, which: &str) -> Result<()> {
    if m.converged {
        Ok(())
    } else {
        Err(Error::NotConverged(format!(
            "{which} equation: {} iterations, deviance {:.6e}, max score {:.3e}",
            m.iterations, m.deviance, m.max_score
        )))
    }
}

/// Two-step conditional moments: Poisson quasi-MLE of food expenditure,
/// then of its squared residual on the same regressors.
pub fn estimate_moments(person_years: &[PersonYear], calendar: &WaveCalendar, spec: &DesignSpec) -> Result<MomentFit> {
    let frame = estimation_frame(person_years)?;
    let design = build_design(&frame, spec, Some(calendar))?;
    let excluded = design
        .excluded
        .iter()
        .map(|(i, reason)| MomentExclusion {
            person_id: person_years[*i].record.person_id.clone(),
            year: person_years[*i].record.year,
            reason: reason.clone(),
        })
        .collect();
    if design.rows.is_empty() {
        return Err(Error::Domain("no person-year has the regressors needed for estimation".into()));
    }
    let mean_model = fit_poisson_qmle(&design.x, &design.y, &design.w, &design.columns)?;
    require_converged(&mean_model, "mean")?;
    let fitted = predict(&mean_model, &design.x, &design.columns)?;
    let resid = &design.y - &fitted;
    let sq = resid.map(|r| r * r);
    let wy2: f64 = design.w.iter().zip(design.y.iter()).map(|(w, y)| w * y * y).sum();
    let wu2: f64 = design.w.dot(&sq);
    let (variance_model, var_fit) = if wu2 <= 1e-24 * wy2 {
        log::warn!("squared residuals are numerically zero; every variance takes the floor");
        (None, DVector::zeros(sq.len()))
    } else {
        let m = fit_poisson_qmle(&design.x, &sq, &design.w, &design.columns)?;
        require_converged(&m, "variance")?;
        let v = predict(&m, &design.x, &design.columns)?;
        (Some(m), v)
    };
    let mut n_variance_floored = 0;
    let moments = design
        .rows
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let p = &person_years[i];
            let floor = variance_floor(fitted[k]);
            let variance = if var_fit[k] < floor {
                n_variance_floored += 1;
                floor
            } else {
                var_fit[k]
            };
            ConditionalMoments {
                person_id: p.record.person_id.clone(),
                year: p.record.year,
                household_id: p.record.household_id.clone(),
                observed: design.y[k],
                mean: fitted[k],
                variance,
                residual: resid[k],
                tfp_cost: p.record.tfp_cost_pc_real,
                adjusted_weight: p.adjusted_weight,
            }
        })
        .collect();
    Ok(MomentFit {
        moments,
        mean_model,
        variance_model,
        columns: design.columns,
        excluded,
        n_variance_floored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PfsRecord {
    pub person_id: String,
    pub year: i32,
    pub household_id: String,
    pub pfs: f64,
    pub mean: f64,
    pub variance: f64,
    pub tfp_cost: f64,
    /// Observed food expenditure over the TFP cost.
    pub nme: f64,
    pub adjusted_weight: f64,
}

/// Probability that expenditure reaches the TFP cost under the gamma law
/// implied by each row's moments. `tfp` is keyed by (person_id, year).
pub fn compute_pfs(moments: &[ConditionalMoments], tfp: &HashMap<(String, i32), f64>) -> Result<Vec<PfsRecord>> {
    let missing: Vec<String> = moments
        .iter()
        .filter(|m| !tfp.contains_key(&(m.person_id.clone(), m.year)))
        .map(|m| format!("{}/{}", m.person_id, m.year))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Join(format!(
            "{} rows have no TFP cost: {}",
            missing.len(),
            missing.iter().take(10).cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    moments
        .par_iter()
        .map(|m| {
            let w = tfp[&(m.person_id.clone(), m.year)];
            let params = gamma_from_moments(m.mean, m.variance)?;
            Ok(PfsRecord {
                person_id: m.person_id.clone(),
                year: m.year,
                household_id: m.household_id.clone(),
                pfs: gamma_survival(w, params)?,
                mean: m.mean,
                variance: m.variance,
                tfp_cost: w,
                nme: m.observed / w,
                adjusted_weight: m.adjusted_weight,
            })
        })
        .collect()
}

/// TFP costs carried by the moments themselves.
pub fn tfp_lookup(moments: &[ConditionalMoments]) -> HashMap<(String, i32), f64> {
    moments.iter().map(|m| ((m.person_id.clone(), m.year), m.tfp_cost)).collect()
}

pub const PFS_COLUMNS: [&str; 9] =
    ["person_id", "year", "household_id", "pfs", "mean", "variance", "tfp_cost", "nme", "adjusted_weight"];

pub fn write_pfs<W: Write>(out: W, rows: &[PfsRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(PFS_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.person_id.clone(),
            r.year.to_string(),
            r.household_id.clone(),
            format!("{:.12}", r.pfs),
            fmt_real(r.mean),
            fmt_real(r.variance),
            fmt_real(r.tfp_cost),
            fmt_real(r.nme),
            fmt_real(r.adjusted_weight),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pfs<R: std::io::Read>(input: R) -> Result<Vec<PfsRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(PFS_COLUMNS.iter().copied()) {
        return Err(Error::Schema("PFS table header does not match the expected column order".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k].trim().parse().map_err(|_| Error::Data(format!("PFS row {}: bad `{}`", i + 1, PFS_COLUMNS[k])))
        };
        out.push(PfsRecord {
            person_id: rec[0].to_string(),
            year: num(1)? as i32,
            household_id: rec[2].to_string(),
            pfs: num(3)?,
            mean: num(4)?,
            variance: num(5)?,
            tfp_cost: num(6)?,
            nme: num(7)?,
            adjusted_weight: num(8)?,
        });
    }
    Ok(out)
}
