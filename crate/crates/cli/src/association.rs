//! Linear association between PFS and household and individual
//! characteristics, pooled and within-person.

use std::collections::HashMap;

use nalgebra::DVector;

use pfs_core::dynasty::PersonYear;
use pfs_core::glm::{build_design, fit_ols, within_transform, within_transform_vec, Covariate, DesignSpec, FittedModel, Frame};
use pfs_core::pfs::{col, estimation_frame, household_covariates, PfsRecord};

use crate::error::Result;
use crate::table::{opt_real, real, Table};

pub const PFS: &str = "pfs";

/// Weighted OLS of the design's response. With `within`, every column and the
/// response are demeaned by `within` groups first and the intercept is
/// dropped; constants within a group come back in `dropped_columns`.
pub fn fit_association(frame: &Frame, spec: &DesignSpec, within: Option<&str>) -> Result<FittedModel> {
    let spec = match within {
        Some(_) => spec.clone().without_intercept(),
        None => spec.clone(),
    };
    let d = build_design(frame, &spec, None)?;
    match within {
        None => Ok(fit_ols(&d.x, &d.y, &d.w, &d.columns)?),
        Some(g) => {
            let groups: Vec<String> =
                d.rows.iter().map(|&r| frame.level(g, r).map(|l| l.unwrap_or_default())).collect::<pfs_core::Result<_>>()?;
            let w: Vec<f64> = d.w.iter().copied().collect();
            let x = within_transform(&d.x, &groups, &w);
            let y: DVector<f64> = within_transform_vec(&d.y, &groups, &w);
            Ok(fit_ols(&x, &y, &d.w, &d.columns)?)
        }
    }
}

fn individual_controls() -> Vec<Covariate> {
    vec![Covariate::numeric(col::AGE), Covariate::numeric(col::AGE_SQ), Covariate::categorical(col::EDUCATION, "hs")]
}

/// The four columns: pooled, pooled with individual controls, within-person,
/// within-person with individual controls.
pub fn association_models(person_years: &[PersonYear], pfs: &[PfsRecord]) -> Result<Vec<FittedModel>> {
    let by_key: HashMap<(&str, i32), f64> = pfs.iter().map(|r| ((r.person_id.as_str(), r.year), r.pfs)).collect();
    let values =
        person_years.iter().map(|p| by_key.get(&(p.record.person_id.as_str(), p.record.year)).copied()).collect();
    let frame = estimation_frame(person_years)?.with_numeric(PFS, values)?;
    let mut base = DesignSpec::new(PFS).fixed_effect(col::STATE).fixed_effect(col::YEAR);
    base.covariates = household_covariates();
    let base = base.weighted_by(col::WEIGHT);
    let mut extended = base.clone();
    extended.covariates.extend(individual_controls());
    [(&base, None), (&extended, None), (&base, Some(col::PERSON)), (&extended, Some(col::PERSON))]
        .into_iter()
        .map(|(spec, within)| fit_association(&frame, spec, within))
        .collect()
}

/// Coefficients with standard errors, fixed effects hidden.
pub fn table_b2(models: &[FittedModel]) -> Table {
    let mut terms: Vec<String> = Vec::new();
    for m in models {
        for c in &m.coefficients {
            if !c.name.starts_with("fe_") && !terms.contains(&c.name) {
                terms.push(c.name.clone());
            }
        }
    }
    let mut t = Table::new("table_b2", &["term", "(1)", "(2)", "(3)", "(4)"]);
    for term in &terms {
        let mut est = vec![term.clone()];
        let mut se = vec![format!("{term} (se)")];
        for m in models {
            let c = m.coefficients.iter().find(|c| &c.name == term);
            est.push(opt_real(c.map(|c| c.estimate)));
            se.push(opt_real(c.and_then(|c| c.std_error)));
        }
        t.push(est);
        t.push(se);
    }
    let mut n = vec!["n".to_string()];
    let mut r2 = vec!["r_squared".to_string()];
    let mut dropped = vec!["dropped".to_string()];
    for m in models {
        n.push(m.n_obs.to_string());
        r2.push(m.r_squared.map(real).unwrap_or_default());
        let names: Vec<&str> = m.dropped_columns.iter().map(String::as_str).filter(|c| !c.starts_with("fe_")).collect();
        dropped.push(names.join(";"));
    }
    t.push(n);
    t.push(r2);
    t.push(dropped);
    t
}
