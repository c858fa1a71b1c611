use std::collections::{BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::frame::{Column, Frame};
use crate::calendar::WaveCalendar;
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covariate {
    Numeric { name: String },
    Categorical { name: String, reference: String },
}

impl Covariate {
    pub fn numeric(name: &str) -> Self {
        Covariate::Numeric { name: name.into() }
    }

    pub fn categorical(name: &str, reference: &str) -> Self {
        Covariate::Categorical { name: name.into(), reference: reference.into() }
    }

    pub fn name(&self) -> &str {
        match self {
            Covariate::Numeric { name } | Covariate::Categorical { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub response: String,
    /// Powers 1..=lag_degree of the response at the person's prior calendar
    /// wave; 0 disables the lag.
    pub lag_degree: u32,
    pub covariates: Vec<Covariate>,
    /// Factor columns expanded to dummies with the first sorted level omitted.
    pub fixed_effects: Vec<String>,
    pub weight: Option<String>,
    pub intercept: bool,
    pub person_key: String,
    pub year_key: String,
}

impl DesignSpec {
    pub fn new(response: &str) -> Self {
        Self {
            response: response.into(),
            lag_degree: 0,
            covariates: Vec::new(),
            fixed_effects: Vec::new(),
            weight: None,
            intercept: true,
            person_key: "person_id".into(),
            year_key: "year".into(),
        }
    }

    pub fn lag(mut self, degree: u32) -> Self {
        self.lag_degree = degree;
        self
    }

    pub fn covariate(mut self, c: Covariate) -> Self {
        self.covariates.push(c);
        self
    }

    pub fn fixed_effect(mut self, name: &str) -> Self {
        self.fixed_effects.push(name.into());
        self
    }

    pub fn weighted_by(mut self, name: &str) -> Self {
        self.weight = Some(name.into());
        self
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }
}

pub fn lag_column_name(response: &str, power: u32) -> String {
    if power == 1 {
        format!("lag_{response}")
    } else {
        format!("lag_{response}^{power}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", content = "column", rename_all = "snake_case")]
pub enum RowExclusion {
    NoLag,
    Missing(String),
}

#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub w: DVector<f64>,
    pub columns: Vec<String>,
    /// Frame row of each design row.
    pub rows: Vec<usize>,
    pub excluded: Vec<(usize, RowExclusion)>,
}

enum Term {
    Numeric(usize),
    Dummy(usize, String),
    Lag(u32),
    Intercept,
}

fn sorted_levels(col: &Column) -> Vec<String> {
    match col {
        Column::Categorical(v) => v.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
        Column::Numeric(v) => {
            let mut xs: Vec<f64> = v.iter().flatten().copied().collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            xs.into_iter().map(super::frame::level_label).collect()
        }
    }
}

/// Build the design matrix. Rows missing the response, weight, any
/// covariate or the lag are excluded and reported.
pub fn build_design(frame: &Frame, spec: &DesignSpec, calendar: Option<&WaveCalendar>) -> Result<Design> {
    let response = frame.numeric(&spec.response)?;
    let weights = match &spec.weight {
        Some(name) => Some(frame.numeric(name)?),
        None => None,
    };

    let mut columns = Vec::new();
    let mut terms = Vec::new();
    if spec.intercept {
        columns.push(INTERCEPT.to_string());
        terms.push(Term::Intercept);
    }

    let mut lag_values: Option<Vec<Option<f64>>> = None;
    if spec.lag_degree > 0 {
        let calendar = calendar.ok_or_else(|| Error::Config("a lagged design needs a wave calendar".into()))?;
        frame.column(&spec.person_key)?;
        let years = frame.numeric(&spec.year_key)?;
        let mut index: HashMap<(String, i32), usize> = HashMap::new();
        for i in 0..frame.len() {
            let pid = frame.level(&spec.person_key, i)?;
            if let (Some(pid), Some(y)) = (pid, years[i]) {
                index.insert((pid, y as i32), i);
            }
        }
        let mut lags = vec![None; frame.len()];
        for (i, lag) in lags.iter_mut().enumerate() {
            let (Some(pid), Some(y)) = (frame.level(&spec.person_key, i)?, years[i]) else { continue };
            let Some(prior) = calendar.prior_wave(y as i32) else { continue };
            if let Some(&j) = index.get(&(pid, prior)) {
                *lag = response[j];
            }
        }
        lag_values = Some(lags);
        for p in 1..=spec.lag_degree {
            columns.push(lag_column_name(&spec.response, p));
            terms.push(Term::Lag(p));
        }
    }

    let mut sources: Vec<(&str, &Column)> = Vec::new();
    for c in &spec.covariates {
        let col = frame.column(c.name())?;
        if matches!(c, Covariate::Numeric { .. }) && !matches!(col, Column::Numeric(_)) {
            return Err(Error::Schema(format!("covariate `{}` must be numeric", c.name())));
        }
        sources.push((c.name(), col));
    }
    for fe in &spec.fixed_effects {
        sources.push((fe, frame.column(fe)?));
    }

    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    'rows: for i in 0..frame.len() {
        if response[i].is_none() {
            excluded.push((i, RowExclusion::Missing(spec.response.clone())));
            continue;
        }
        if let Some(w) = weights {
            if w[i].is_none() {
                excluded.push((i, RowExclusion::Missing(spec.weight.clone().unwrap_or_default())));
                continue;
            }
        }
        for (name, col) in &sources {
            if col.is_missing(i) {
                excluded.push((i, RowExclusion::Missing(name.to_string())));
                continue 'rows;
            }
        }
        if let Some(l) = &lag_values {
            if l[i].is_none() {
                excluded.push((i, RowExclusion::NoLag));
                continue;
            }
        }
        rows.push(i);
    }

    // levels are taken from the rows that enter the fit
    let labels: Vec<Vec<Option<String>>> = sources
        .iter()
        .map(|(_, col)| match col {
            Column::Categorical(v) => v.clone(),
            Column::Numeric(v) => v.iter().map(|x| x.map(super::frame::level_label)).collect(),
        })
        .collect();
    let levels = |k: usize| -> Vec<String> {
        let kept: Vec<Option<String>> = rows.iter().map(|&i| labels[k][i].clone()).collect();
        let col = match sources[k].1 {
            Column::Categorical(_) => Column::Categorical(kept),
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
        };
        sorted_levels(&col)
    };
    for (k, c) in spec.covariates.iter().enumerate() {
        match c {
            Covariate::Numeric { name } => {
                columns.push(name.clone());
                terms.push(Term::Numeric(k));
            }
            Covariate::Categorical { name, reference } => {
                for level in levels(k).into_iter().filter(|l| l != reference) {
                    columns.push(format!("{name}[{level}]"));
                    terms.push(Term::Dummy(k, level));
                }
            }
        }
    }
    for (j, fe) in spec.fixed_effects.iter().enumerate() {
        let k = spec.covariates.len() + j;
        for level in levels(k).into_iter().skip(1) {
            columns.push(format!("fe_{fe}[{level}]"));
            terms.push(Term::Dummy(k, level));
        }
    }
    let n = rows.len();
    let p = columns.len();
    let mut x = DMatrix::zeros(n, p);
    for (j, term) in terms.iter().enumerate() {
        for (r, &i) in rows.iter().enumerate() {
            x[(r, j)] = match term {
                Term::Intercept => 1.0,
                Term::Lag(pw) => lag_values.as_ref().unwrap()[i].unwrap().powi(*pw as i32),
                Term::Numeric(k) => match sources[*k].1 {
                    Column::Numeric(v) => v[i].unwrap(),
                    Column::Categorical(_) => unreachable!(),
                },
                Term::Dummy(k, level) => {
                    if labels[*k][i].as_deref() == Some(level.as_str()) {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
        }
    }
    let y = DVector::from_iterator(n, rows.iter().map(|&i| response[i].unwrap()));
    let w = DVector::from_iterator(n, rows.iter().map(|&i| weights.map_or(1.0, |w| w[i].unwrap())));
    Ok(Design { x, y, w, columns, rows, excluded })
}

impl Design {
    /// Keep only the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.columns
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::Schema(format!("design has no column `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(self.x.select_columns(idx.iter()))
    }
}
