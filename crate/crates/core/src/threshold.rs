//! Year-specific PFS cutoffs: prevalence anchoring, macro-regression
//! extrapolation and percentile bounds, plus classification.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{fit_ols, predict, FittedModel, INTERCEPT};
use crate::ingest::fmt_real;
use crate::pfs::PfsRecord;
use crate::stats::{pearson, share_below, weighted_quantile};

pub const CLAMP_LOW: f64 = 0.001;
pub const CLAMP_HIGH: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Anchored,
    ModelPredicted,
    Percentile5,
    Percentile20,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Anchored => "anchored",
            Provenance::ModelPredicted => "model_predicted",
            Provenance::Percentile5 => "percentile_5",
            Provenance::Percentile20 => "percentile_20",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Provenance::Anchored, Provenance::ModelPredicted, Provenance::Percentile5, Provenance::Percentile20]
            .into_iter()
            .find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Anchored where a target exists, model-predicted elsewhere.
    Anchored,
    /// Model-predicted in every year.
    SnapModel,
    P5,
    P20,
}

impl ThresholdMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "anchored" => Some(ThresholdMode::Anchored),
            "snap_model" => Some(ThresholdMode::SnapModel),
            "p5" => Some(ThresholdMode::P5),
            "p20" => Some(ThresholdMode::P20),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdMode::Anchored => "anchored",
            ThresholdMode::SnapModel => "snap_model",
            ThresholdMode::P5 => "p5",
            ThresholdMode::P20 => "p20",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffEntry {
    pub year: i32,
    pub cutoff: f64,
    pub provenance: Provenance,
    pub target: Option<f64>,
    pub achieved_prevalence: f64,
}

/// Weighted quantile of one year's PFS at the target prevalence.
/// Classification downstream is `pfs < cutoff`.
pub fn calibrate_cutoff(pfs: &[f64], weights: &[f64], target: f64) -> Result<f64> {
    weighted_quantile(pfs, weights, target)
}

/// Cutoffs leaving 5% and 20% of the weighted mass below.
pub fn percentile_bounds(pfs: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    Ok((calibrate_cutoff(pfs, weights, 0.05)?, calibrate_cutoff(pfs, weights, 0.20)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroRow {
    pub year: i32,
    pub snap_rate: f64,
    pub unemployment: f64,
    pub gdp_pc_growth: f64,
    pub ln_disp_income_pc: f64,
    pub poverty_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MacroSeries(pub BTreeMap<i32, MacroRow>);

impl MacroSeries {
    pub fn new(rows: impl IntoIterator<Item = MacroRow>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in rows {
            if !(0.0..=100.0).contains(&r.snap_rate) {
                return Err(Error::Data(format!("SNAP rate {} in {} outside [0, 100]", r.snap_rate, r.year)));
            }
            if map.insert(r.year, r).is_some() {
                return Err(Error::Integrity(format!("macro series repeats year {}", r.year)));
            }
        }
        Ok(Self(map))
    }

    pub fn get(&self, year: i32) -> Result<&MacroRow> {
        self.0.get(&year).ok_or_else(|| Error::Range(format!("macro series does not cover {year}")))
    }
}

fn read_table(path: &Path, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers.iter().position(|h| h.trim() == *c).ok_or_else(|| {
                Error::Schema(format!("{} is missing column `{c}`", path.display()))
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = idx
            .iter()
            .zip(columns)
            .map(|(&k, c)| {
                rec.get(k).unwrap_or("").trim().parse::<f64>().map_err(|_| {
                    Error::Data(format!("{} row {}: bad `{c}`", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
    }
    Ok(out)
}

pub fn read_macro_csv(path: &Path) -> Result<MacroSeries> {
    let rows = read_table(
        path,
        &["year", "snap_rate", "unemployment", "gdp_pc_growth", "ln_disp_income_pc", "poverty_rate"],
    )?;
    MacroSeries::new(rows.into_iter().map(|r| MacroRow {
        year: r[0] as i32,
        snap_rate: r[1],
        unemployment: r[2],
        gdp_pc_growth: r[3],
        ln_disp_income_pc: r[4],
        poverty_rate: r[5],
    }))
}

/// Official prevalence targets, keyed by year.
pub fn read_targets_csv(path: &Path) -> Result<BTreeMap<i32, f64>> {
    let mut out = BTreeMap::new();
    for r in read_table(path, &["year", "prevalence"])? {
        if !(0.0..=1.0).contains(&r[1]) {
            return Err(Error::Data(format!("prevalence {} in {} outside [0, 1]", r[1], r[0])));
        }
        out.insert(r[0] as i32, r[1]);
    }
    Ok(out)
}

/// Regressor sets of the five threshold-regression columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdVariant {
    Income,
    Snap,
    Unemployment,
    GdpGrowth,
    All,
}

impl ThresholdVariant {
    pub const ALL: [ThresholdVariant; 5] = [
        ThresholdVariant::Income,
        ThresholdVariant::Snap,
        ThresholdVariant::Unemployment,
        ThresholdVariant::GdpGrowth,
        ThresholdVariant::All,
    ];

    pub fn regressors(self) -> &'static [&'static str] {
        match self {
            ThresholdVariant::Income => &["ln_disp_income_pc"],
            ThresholdVariant::Snap => &["snap_rate"],
            ThresholdVariant::Unemployment => &["unemployment"],
            ThresholdVariant::GdpGrowth => &["gdp_pc_growth"],
            ThresholdVariant::All => &["ln_disp_income_pc", "snap_rate", "unemployment", "gdp_pc_growth"],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ThresholdVariant::Income => "(1)",
            ThresholdVariant::Snap => "(2)",
            ThresholdVariant::Unemployment => "(3)",
            ThresholdVariant::GdpGrowth => "(4)",
            ThresholdVariant::All => "(5)",
        }
    }
}

fn macro_value(row: &MacroRow, name: &str) -> f64 {
    match name {
        "snap_rate" => row.snap_rate,
        "unemployment" => row.unemployment,
        "gdp_pc_growth" => row.gdp_pc_growth,
        "ln_disp_income_pc" => row.ln_disp_income_pc,
        "poverty_rate" => row.poverty_rate,
        _ => unreachable!("unknown macro column {name}"),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdModel {
    pub variant: ThresholdVariant,
    pub model: FittedModel,
    pub years: Vec<i32>,
}

fn macro_design(macro_: &MacroSeries, years: &[i32], variant: ThresholdVariant) -> Result<(DMatrix<f64>, Vec<String>)> {
    let regs = variant.regressors();
    let mut names = vec![INTERCEPT.to_string()];
    names.extend(regs.iter().map(|s| s.to_string()));
    let mut x = DMatrix::zeros(years.len(), names.len());
    for (i, &y) in years.iter().enumerate() {
        let row = macro_.get(y)?;
        x[(i, 0)] = 1.0;
        for (j, r) in regs.iter().enumerate() {
            x[(i, j + 1)] = macro_value(row, r);
        }
    }
    Ok((x, names))
}

/// Ordinary least squares of anchored cutoffs on the variant's macro
/// regressors.
pub fn fit_threshold_model(
    cutoffs: &BTreeMap<i32, f64>,
    macro_: &MacroSeries,
    variant: ThresholdVariant,
) -> Result<ThresholdModel> {
    if cutoffs.len() < 3 {
        return Err(Error::Domain(format!("threshold model needs at least 3 anchored years, got {}", cutoffs.len())));
    }
    let years: Vec<i32> = cutoffs.keys().copied().collect();
    let (x, names) = macro_design(macro_, &years, variant)?;
    let y = DVector::from_iterator(years.len(), cutoffs.values().copied());
    let model = fit_ols(&x, &y, &DVector::from_element(years.len(), 1.0), &names)?;
    Ok(ThresholdModel { variant, model, years })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictedCutoff {
    pub year: i32,
    pub cutoff: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// Model predictions clamped to [0.001, 0.999].
pub fn predict_cutoffs(model: &ThresholdModel, macro_: &MacroSeries, years: &[i32]) -> Result<Vec<PredictedCutoff>> {
    let (x, names) = macro_design(macro_, years, model.variant)?;
    let pred = predict(&model.model, &x, &names)?;
    Ok(years
        .iter()
        .zip(pred.iter())
        .map(|(&year, &raw)| {
            let cutoff = raw.clamp(CLAMP_LOW, CLAMP_HIGH);
            let clamped = cutoff != raw;
            if clamped {
                log::warn!("predicted cutoff {raw} for {year} clamped to {cutoff}");
            }
            PredictedCutoff { year, cutoff, raw, clamped }
        })
        .collect())
}

/// Correlations among anchored cutoffs and the macro indicators, in the
/// order cutoff, ln income, SNAP rate, poverty, unemployment, GDP growth.
pub fn correlation_matrix(cutoffs: &BTreeMap<i32, f64>, macro_: &MacroSeries) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let labels = ["cutoff", "ln_disp_income_pc", "snap_rate", "poverty_rate", "unemployment", "gdp_pc_growth"];
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    for (&y, &c) in cutoffs {
        let row = macro_.get(y)?;
        series[0].push(c);
        for (k, l) in labels.iter().enumerate().skip(1) {
            series[k].push(macro_value(row, l));
        }
    }
    let m = (0..labels.len())
        .map(|i| (0..labels.len()).map(|j| if i == j { Some(1.0) } else { pearson(&series[i], &series[j]) }).collect())
        .collect();
    Ok((labels.iter().map(|s| s.to_string()).collect(), m))
}

/// Per-year PFS values and weights.
pub fn by_year(pfs: &[PfsRecord]) -> BTreeMap<i32, (Vec<f64>, Vec<f64>)> {
    let mut out: BTreeMap<i32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in pfs {
        let e = out.entry(r.year).or_default();
        e.0.push(r.pfs);
        e.1.push(r.adjusted_weight);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct CutoffSeries {
    pub mode: ThresholdMode,
    pub entries: BTreeMap<i32, CutoffEntry>,
    pub model: Option<ThresholdModel>,
}

impl CutoffSeries {
    pub fn cutoffs(&self) -> BTreeMap<i32, f64> {
        self.entries.iter().map(|(y, e)| (*y, e.cutoff)).collect()
    }
}

/// Cutoffs for every year present in `pfs`.
pub fn build_cutoffs(
    pfs: &[PfsRecord],
    mode: ThresholdMode,
    targets: Option<&BTreeMap<i32, f64>>,
    macro_: Option<&MacroSeries>,
    variant: ThresholdVariant,
) -> Result<CutoffSeries> {
    let years = by_year(pfs);
    let mut entries = BTreeMap::new();
    let mut model = None;
    match mode {
        ThresholdMode::P5 | ThresholdMode::P20 => {
            let (target, prov) = if mode == ThresholdMode::P5 {
                (0.05, Provenance::Percentile5)
            } else {
                (0.20, Provenance::Percentile20)
            };
            for (&year, (v, w)) in &years {
                let cutoff = calibrate_cutoff(v, w, target)?;
                entries.insert(
                    year,
                    CutoffEntry { year, cutoff, provenance: prov, target: Some(target), achieved_prevalence: share_below(v, w, cutoff) },
                );
            }
        }
        ThresholdMode::Anchored | ThresholdMode::SnapModel => {
            let targets = targets.ok_or_else(|| Error::Config(format!("threshold mode {} needs a targets table", mode.as_str())))?;
            let mut anchored = BTreeMap::new();
            for (&year, (v, w)) in &years {
                if let Some(&t) = targets.get(&year) {
                    let cutoff = calibrate_cutoff(v, w, t)?;
                    anchored.insert(year, cutoff);
                    if mode == ThresholdMode::Anchored {
                        entries.insert(
                            year,
                            CutoffEntry {
                                year,
                                cutoff,
                                provenance: Provenance::Anchored,
                                target: Some(t),
                                achieved_prevalence: share_below(v, w, cutoff),
                            },
                        );
                    }
                }
            }
            let rest: Vec<i32> = years.keys().copied().filter(|y| !entries.contains_key(y)).collect();
            if !rest.is_empty() {
                let macro_ = macro_.ok_or_else(|| {
                    Error::Config(format!("cutoffs for {} years need a macro table", rest.len()))
                })?;
                let m = fit_threshold_model(&anchored, macro_, variant)?;
                for p in predict_cutoffs(&m, macro_, &rest)? {
                    let (v, w) = &years[&p.year];
                    entries.insert(
                        p.year,
                        CutoffEntry {
                            year: p.year,
                            cutoff: p.cutoff,
                            provenance: Provenance::ModelPredicted,
                            target: targets.get(&p.year).copied(),
                            achieved_prevalence: share_below(v, w, p.cutoff),
                        },
                    );
                }
                model = Some(m);
            } else if anchored.len() >= 3 {
                if let Some(macro_) = macro_ {
                    model = Some(fit_threshold_model(&anchored, macro_, variant)?);
                }
            }
        }
    }
    Ok(CutoffSeries { mode, entries, model })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classified {
    pub person_id: String,
    pub year: i32,
    pub household_id: String,
    pub pfs: f64,
    pub cutoff: f64,
    pub insecure: bool,
    pub adjusted_weight: f64,
}

/// Insecure iff pfs < cutoff(year).
pub fn classify(pfs: &[PfsRecord], cutoffs: &BTreeMap<i32, f64>) -> Result<Vec<Classified>> {
    pfs.iter()
        .map(|r| {
            let cutoff = *cutoffs
                .get(&r.year)
                .ok_or_else(|| Error::Range(format!("no cutoff for {}", r.year)))?;
            Ok(Classified {
                person_id: r.person_id.clone(),
                year: r.year,
                household_id: r.household_id.clone(),
                pfs: r.pfs,
                cutoff,
                insecure: r.pfs < cutoff,
                adjusted_weight: r.adjusted_weight,
            })
        })
        .collect()
}

/// Weighted share classified insecure, per year.
pub fn prevalence_by_year(classified: &[Classified]) -> BTreeMap<i32, f64> {
    let mut acc: BTreeMap<i32, (f64, f64)> = BTreeMap::new();
    for c in classified {
        let e = acc.entry(c.year).or_default();
        e.1 += c.adjusted_weight;
        if c.insecure {
            e.0 += c.adjusted_weight;
        }
    }
    acc.into_iter().map(|(y, (a, b))| (y, if b > 0.0 { a / b } else { 0.0 })).collect()
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn write_cutoffs<W: Write>(out: W, series: &CutoffSeries) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["year", "cutoff", "provenance", "target", "achieved_prevalence"])?;
    for e in series.entries.values() {
        w.write_record([
            e.year.to_string(),
            fmt_real(e.cutoff),
            e.provenance.as_str().to_string(),
            e.target.map(fmt_real).unwrap_or_default(),
            fmt_real(e.achieved_prevalence),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cutoffs(path: &Path) -> Result<BTreeMap<i32, (f64, Provenance)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Data(format!("cutoffs row {}: malformed", i + 1));
        let year: i32 = rec.get(0).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let cutoff: f64 = rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let prov = Provenance::parse(rec.get(2).ok_or_else(bad)?).ok_or_else(bad)?;
        out.insert(year, (cutoff, prov));
    }
    Ok(out)
}

pub const CLASSIFIED_COLUMNS: [&str; 7] =
    ["person_id", "year", "household_id", "pfs", "cutoff", "insecure", "adjusted_weight"];

pub fn write_classified<W: Write>(out: W, rows: &[Classified]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(CLASSIFIED_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.person_id.clone(),
            r.year.to_string(),
            r.household_id.clone(),
            format!("{:.12}", r.pfs),
            fmt_real(r.cutoff),
            if r.insecure { "1" } else { "0" }.to_string(),
            fmt_real(r.adjusted_weight),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_classified<R: std::io::Read>(input: R) -> Result<Vec<Classified>> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(CLASSIFIED_COLUMNS.iter().copied()) {
        return Err(Error::Schema("classified table header does not match the expected column order".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |k: usize| Error::Data(format!("classified row {}: bad `{}`", i + 1, CLASSIFIED_COLUMNS[k]));
        let num = |k: usize| rec[k].trim().parse::<f64>().map_err(|_| bad(k));
        out.push(Classified {
            person_id: rec[0].to_string(),
            year: rec[1].trim().parse().map_err(|_| bad(1))?,
            household_id: rec[2].to_string(),
            pfs: num(3)?,
            cutoff: num(4)?,
            insecure: match rec[5].trim() {
                "1" => true,
                "0" => false,
                _ => return Err(bad(5)),
            },
            adjusted_weight: num(6)?,
        });
    }
    Ok(out)
}
