//! Pipeline stages. Each stage reads the previous stage's files from the
//! output directory and writes its own into a subdirectory.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::json;

use pfs_core::dynamics::fsss::{
    crosstab_pfs_fsss, rank_correlation, reclassify_fsss_by_rank, Crosstab, FsssEntry, Paired, RankMethod,
};
use pfs_core::dynamics::summary::{classification_by_characteristic, group_summary, Cell, SummaryRecord};
use pfs_core::dynamics::{
    build_series, chronic_prevalence, compute_spells, newly_still_decomposition, spell_distribution,
    transition_matrix, GroupLabels, Grouping, Observation,
};
use pfs_core::dynasty::{
    build_study_panel, read_reference_composition, representativeness_report, roster, write_composition,
    write_roster, StudyPanel,
};
use pfs_core::glm::FittedModel;
use pfs_core::ingest::{
    harmonize_panel, parse_panel_csv, read_harmonized, write_harmonized, write_warnings, CpiTable, Education,
    FoodStatus, HarmonizedRecord, Race, Sex,
};
use pfs_core::pfs::{compute_pfs, default_moment_spec, estimate_moments, ln_income, read_pfs, tfp_lookup, write_pfs, PfsRecord};
use pfs_core::stats::weighted_mean;
use pfs_core::synth;
use pfs_core::threshold::{
    build_cutoffs, by_year, calibrate_cutoff, classify, correlation_matrix, fit_threshold_model, predict_cutoffs,
    prevalence_by_year, read_classified, read_macro_csv, read_targets_csv, write_classified, write_cutoffs,
    Classified, MacroSeries, ThresholdVariant,
};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::manifest;
use crate::table::{opt_real, real, Table};

pub const SYNTH: &str = "synth";
pub const INGEST: &str = "ingest";
pub const ESTIMATE: &str = "estimate";
pub const CALIBRATE: &str = "calibrate";
pub const DYNAMICS: &str = "dynamics";
pub const REPORT: &str = "report";
pub const VALIDATE: &str = "validate";

/// A resolved config bound to its output directory.
pub struct Ctx {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
}

impl Ctx {
    pub fn new(cfg: PipelineConfig) -> Self {
        let out = cfg.out_dir();
        Self { cfg, out }
    }

    pub fn dir(&self, stage: &str) -> Result<PathBuf> {
        let d = self.out.join(stage);
        std::fs::create_dir_all(&d)?;
        Ok(d)
    }

    /// Path of a file produced by `stage`, which must already exist.
    pub fn require(&self, stage: &'static str, file: &str) -> Result<PathBuf> {
        let p = self.out.join(stage).join(file);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::Dependency { stage, path: p })
        }
    }

    /// An explicit input, or the synthetic file of the same role.
    fn input(&self, explicit: &Option<PathBuf>, synth_file: &str) -> Result<PathBuf> {
        match explicit {
            Some(p) if p.is_file() => Ok(p.clone()),
            Some(p) => Err(CliError::Usage(format!("input {} does not exist", p.display()))),
            None => self.require(SYNTH, synth_file),
        }
    }

    fn optional_input(&self, explicit: &Option<PathBuf>, synth_file: &str) -> Result<Option<PathBuf>> {
        match explicit {
            Some(_) => self.input(explicit, synth_file).map(Some),
            None => Ok(Some(self.out.join(SYNTH).join(synth_file)).filter(|p| p.is_file())),
        }
    }

    pub fn targets(&self) -> Result<Option<BTreeMap<i32, f64>>> {
        self.optional_input(&self.cfg.inputs.targets, "targets.csv")?
            .map(|p| read_targets_csv(&p))
            .transpose()
            .map_err(Into::into)
    }

    pub fn macro_series(&self) -> Result<Option<MacroSeries>> {
        self.optional_input(&self.cfg.inputs.macro_, "macro.csv")?
            .map(|p| read_macro_csv(&p))
            .transpose()
            .map_err(Into::into)
    }

    pub fn harmonized(&self) -> Result<Vec<HarmonizedRecord>> {
        let p = self.require(INGEST, "harmonized.csv")?;
        Ok(read_harmonized(File::open(p)?)?)
    }

    pub fn study_panel(&self, records: &[HarmonizedRecord]) -> Result<StudyPanel> {
        Ok(build_study_panel(records, self.cfg.window())?)
    }

    pub fn pfs(&self) -> Result<Vec<PfsRecord>> {
        let p = self.require(ESTIMATE, "pfs.csv")?;
        Ok(read_pfs(File::open(p)?)?)
    }

    pub fn classified(&self) -> Result<Vec<Classified>> {
        let p = self.require(CALIBRATE, "classified.csv")?;
        Ok(read_classified(File::open(p)?)?)
    }

    pub(crate) fn finish(&self, stage: &str, meta: serde_json::Value) -> Result<()> {
        manifest::update(&self.out, self.cfg.echo(), stage, meta)?;
        log::info!("{stage}: done");
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    std::fs::write(path, b)?;
    Ok(())
}

pub fn run_synth(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg.synth;
    let panel = synth::generate(cfg)?;
    let d = ctx.dir(SYNTH)?;
    pfs_core::ingest::write_panel(create(&d.join("panel.csv"))?, &panel.records)?;
    synth::write_cpi(create(&d.join("cpi.csv"))?, &panel.cpi_rows)?;
    synth::write_macro(create(&d.join("macro.csv"))?, &panel.macro_rows)?;
    synth::write_targets(create(&d.join("targets.csv"))?, &panel.targets)?;
    synth::write_reference(create(&d.join("reference.csv"))?, &panel.reference)?;
    synth::write_truth(create(&d.join("truth_person_years.csv"))?, &panel.truth)?;
    synth::write_truth_coefficients(create(&d.join("truth_coefficients.csv"))?, cfg, &panel)?;
    write_json(&d.join("dgp.json"), cfg)?;
    ctx.finish(SYNTH, serde_json::to_value(panel.summary)?)
}

pub fn run_ingest(ctx: &Ctx) -> Result<()> {
    let panel_path = ctx.input(&ctx.cfg.inputs.panel, "panel.csv")?;
    let cpi_path = ctx.input(&ctx.cfg.inputs.cpi, "cpi.csv")?;
    let parsed = parse_panel_csv(&panel_path, &ctx.cfg.column_map())?;
    let cpi = CpiTable::from_csv(&cpi_path)?;
    let h = harmonize_panel(&parsed.records, &cpi)?;
    let d = ctx.dir(INGEST)?;
    write_harmonized(create(&d.join("harmonized.csv"))?, &h.records)?;
    let mut ex = Table::new("excluded", &["person_id", "year", "reason"]);
    for e in &h.excluded {
        ex.push(vec![e.person_id.clone(), e.year.to_string(), e.reason.as_str().to_string()]);
    }
    std::fs::write(d.join("excluded.csv"), ex.csv_bytes()?)?;
    let mut warnings = parsed.warnings.clone();
    warnings.extend(h.warnings.iter().cloned());
    write_warnings(create(&d.join("warnings.jsonl"))?, &warnings)?;

    let sp = ctx.study_panel(&h.records)?;
    write_roster(create(&d.join("roster.csv"))?, &roster(&h.records, &sp.sample))?;
    let reference = match ctx.optional_input(&ctx.cfg.inputs.reference, "reference.csv")? {
        Some(p) => Some(read_reference_composition(&p)?),
        None => None,
    };
    let comp = representativeness_report(&sp.person_years, reference.as_deref());
    write_composition(create(&d.join("composition.csv"))?, &comp, reference.is_some())?;

    let reasons: BTreeMap<&str, usize> =
        sp.sample.reason_counts().into_iter().map(|(r, n)| (r.as_str(), n)).collect();
    ctx.finish(
        INGEST,
        json!({
            "raw_rows": parsed.records.len(),
            "harmonized_rows": h.records.len(),
            "excluded_rows": h.excluded.len(),
            "warnings": warnings.len(),
            "imputation": h.imputation,
            "study_persons": sp.sample.included.len(),
            "study_exclusions": reasons,
            "person_years": sp.person_years.len(),
            "dropped_outside_window": sp.dropped_outside_window,
            "dropped_geography": sp.dropped_geography,
        }),
    )
}

fn coefficient_rows(mean: &FittedModel, var: Option<&FittedModel>) -> Table {
    let mut t = Table::new(
        "coefficients",
        &["term", "mean_estimate", "mean_std_error", "variance_estimate", "variance_std_error"],
    );
    let vmap: HashMap<&str, _> =
        var.map(|v| v.coefficients.iter().map(|c| (c.name.as_str(), c)).collect()).unwrap_or_default();
    for c in &mean.coefficients {
        let v = vmap.get(c.name.as_str());
        t.push(vec![
            c.name.clone(),
            real(c.estimate),
            opt_real(c.std_error),
            opt_real(v.map(|v| v.estimate)),
            opt_real(v.and_then(|v| v.std_error)),
        ]);
    }
    t
}

pub fn run_estimate(ctx: &Ctx) -> Result<()> {
    let records = ctx.harmonized()?;
    let sp = ctx.study_panel(&records)?;
    let fit = estimate_moments(&sp.person_years, &ctx.cfg.calendar(), &default_moment_spec())?;
    let pfs = compute_pfs(&fit.moments, &tfp_lookup(&fit.moments))?;
    let d = ctx.dir(ESTIMATE)?;
    write_pfs(create(&d.join("pfs.csv"))?, &pfs)?;
    write_json(&d.join("mean_model.json"), &fit.mean_model)?;
    write_json(&d.join("variance_model.json"), &fit.variance_model)?;
    write_json(&d.join("design_columns.json"), &json!({ "spec": default_moment_spec(), "columns": fit.columns }))?;
    let mut ex = Table::new("moment_exclusions", &["person_id", "year", "reason"]);
    for e in &fit.excluded {
        let reason = serde_json::to_value(&e.reason)?;
        let text = match (reason.get("reason"), reason.get("column")) {
            (Some(r), Some(c)) => format!("{}:{}", r.as_str().unwrap_or(""), c.as_str().unwrap_or("")),
            (Some(r), None) => r.as_str().unwrap_or("").to_string(),
            _ => reason.to_string(),
        };
        ex.push(vec![e.person_id.clone(), e.year.to_string(), text]);
    }
    std::fs::write(d.join("moment_exclusions.csv"), ex.csv_bytes()?)?;
    std::fs::write(d.join("coefficients.csv"), coefficient_rows(&fit.mean_model, fit.variance_model.as_ref()).csv_bytes()?)?;
    ctx.finish(
        ESTIMATE,
        json!({
            "person_years": sp.person_years.len(),
            "estimation_rows": fit.moments.len(),
            "excluded_rows": fit.excluded.len(),
            "variance_floored": fit.n_variance_floored,
            "mean_iterations": fit.mean_model.iterations,
            "variance_iterations": fit.variance_model.as_ref().map(|m| m.iterations),
            "dropped_columns": fit.mean_model.dropped_columns,
        }),
    )
}

/// Anchored cutoffs for every PFS year that has a target.
pub fn anchored_cutoffs(pfs: &[PfsRecord], targets: &BTreeMap<i32, f64>) -> Result<BTreeMap<i32, f64>> {
    let mut out = BTreeMap::new();
    for (year, (v, w)) in by_year(pfs) {
        if let Some(&t) = targets.get(&year) {
            out.insert(year, calibrate_cutoff(&v, &w, t)?);
        }
    }
    Ok(out)
}

pub const MACRO_TERMS: [&str; 5] = ["(intercept)", "ln_disp_income_pc", "snap_rate", "unemployment", "gdp_pc_growth"];

/// Table 2 (five variants), Table B3 and the per-year predictions, plus the
/// fitted models as JSON.
pub fn threshold_tables(
    pfs: &[PfsRecord],
    targets: &BTreeMap<i32, f64>,
    macro_: &MacroSeries,
) -> Result<(Table, Table, Table, serde_json::Value)> {
    let anchored = anchored_cutoffs(pfs, targets)?;
    let years: Vec<i32> = by_year(pfs).keys().copied().collect();
    let mut models = Vec::new();
    for v in ThresholdVariant::ALL {
        models.push(fit_threshold_model(&anchored, macro_, v)?);
    }
    let mut cols = vec!["term"];
    cols.extend(ThresholdVariant::ALL.iter().map(|v| v.label()));
    let mut t2 = Table::new("table2", &cols);
    for term in MACRO_TERMS {
        let mut est = vec![term.to_string()];
        let mut se = vec![format!("{term} (se)")];
        for m in &models {
            let c = m.model.coefficients.iter().find(|c| c.name == term);
            est.push(opt_real(c.map(|c| c.estimate)));
            se.push(opt_real(c.and_then(|c| c.std_error)));
        }
        t2.push(est);
        t2.push(se);
    }
    let mut n = vec!["n".to_string()];
    let mut r2 = vec!["r_squared".to_string()];
    for m in &models {
        n.push(m.model.n_obs.to_string());
        r2.push(opt_real(m.model.r_squared));
    }
    t2.push(n);
    t2.push(r2);

    let (labels, matrix) = correlation_matrix(&anchored, macro_)?;
    let mut head = vec!["variable"];
    head.extend(labels.iter().map(String::as_str));
    let mut b3 = Table::new("table_b3", &head);
    for (i, l) in labels.iter().enumerate() {
        let mut row = vec![l.clone()];
        // lower triangle, as printed
        row.extend((0..labels.len()).map(|j| if j <= i { opt_real(matrix[i][j]) } else { String::new() }));
        b3.push(row);
    }

    let mut cols = vec!["year", "anchored"];
    cols.extend(ThresholdVariant::ALL.iter().map(|v| v.label()));
    let mut pred = Table::new("threshold_predictions", &cols);
    let covered: Vec<i32> = years.iter().copied().filter(|y| macro_.0.contains_key(y)).collect();
    let predictions: Vec<Vec<f64>> = models
        .iter()
        .map(|m| Ok(predict_cutoffs(m, macro_, &covered)?.into_iter().map(|p| p.cutoff).collect()))
        .collect::<Result<_>>()?;
    for (i, y) in covered.iter().enumerate() {
        let mut row = vec![y.to_string(), opt_real(anchored.get(y).copied())];
        row.extend(predictions.iter().map(|p| real(p[i])));
        pred.push(row);
    }
    let dump = json!(models
        .iter()
        .map(|m| json!({ "variant": m.variant, "label": m.variant.label(), "years": m.years, "model": m.model }))
        .collect::<Vec<_>>());
    Ok((t2, b3, pred, dump))
}

pub fn run_calibrate(ctx: &Ctx) -> Result<()> {
    let pfs = ctx.pfs()?;
    let mode = ctx.cfg.threshold_mode;
    let targets = ctx.targets()?;
    let macro_ = ctx.macro_series()?;
    use pfs_core::threshold::ThresholdMode::*;
    match mode {
        Anchored if targets.is_none() => {
            return Err(CliError::Usage("threshold mode anchored needs a targets CSV (inputs.targets)".into()))
        }
        SnapModel if macro_.is_none() || targets.is_none() => {
            return Err(CliError::Usage(
                "threshold mode snap_model needs a macro CSV and a targets CSV (inputs.macro, inputs.targets)".into(),
            ))
        }
        _ => {}
    }
    let series = build_cutoffs(&pfs, mode, targets.as_ref(), macro_.as_ref(), ctx.cfg.threshold.variant)?;
    let d = ctx.dir(CALIBRATE)?;
    write_cutoffs(create(&d.join("cutoffs.csv"))?, &series)?;
    write_json(&d.join("threshold_model.json"), &series.model)?;
    let classified = classify(&pfs, &series.cutoffs())?;
    write_classified(create(&d.join("classified.csv"))?, &classified)?;
    let mut prev = Table::new("prevalence", &["year", "prevalence"]);
    for (y, p) in prevalence_by_year(&classified) {
        prev.push(vec![y.to_string(), real(p)]);
    }
    std::fs::write(d.join("prevalence.csv"), prev.csv_bytes()?)?;

    let mut meta = json!({
        "mode": mode.as_str(),
        "years": series.entries.len(),
        "classified_rows": classified.len(),
    });
    if let (Some(t), Some(m)) = (&targets, &macro_) {
        match threshold_tables(&pfs, t, m) {
            Ok((t2, b3, pred, dump)) => {
                std::fs::write(d.join("table2.csv"), t2.csv_bytes()?)?;
                std::fs::write(d.join("table_b3.csv"), b3.csv_bytes()?)?;
                std::fs::write(d.join("threshold_predictions.csv"), pred.csv_bytes()?)?;
                write_json(&d.join("threshold_models.json"), &dump)?;
            }
            Err(e) => {
                log::warn!("threshold regressions skipped: {e}");
                meta["threshold_regressions"] = json!(e.to_string());
            }
        }
    }
    ctx.finish(CALIBRATE, meta)
}

fn labels(r: &HarmonizedRecord) -> GroupLabels {
    GroupLabels {
        sex: r.person.sex.map(|s| s.to_string()),
        race: r.person.race.map(|s| s.to_string()),
        education: r.person.education.map(|s| s.to_string()),
    }
}

fn crosstab_table(name: &str, pairs: &[Paired]) -> Result<Table> {
    let tabs: BTreeMap<Option<i32>, Crosstab> = if pairs.is_empty() { BTreeMap::new() } else { crosstab_pfs_fsss(pairs)? };
    let keys: Vec<Option<i32>> = tabs.keys().copied().filter(|k| k.is_some()).chain(tabs.contains_key(&None).then_some(None)).collect();
    let mut cols = vec!["status_pfs_fsss".to_string()];
    cols.extend(keys.iter().map(|k| k.map_or("total".to_string(), |y| y.to_string())));
    let mut t = Table { name: name.into(), columns: cols, rows: Vec::new() };
    type Pick = fn(&Crosstab) -> f64;
    let rows: [(&str, Pick); 5] = [
        ("secure/secure", |c| c.secure_secure),
        ("insecure/insecure", |c| c.insecure_insecure),
        ("insecure/secure", |c| c.pfs_insecure_fsss_secure),
        ("secure/insecure", |c| c.pfs_secure_fsss_insecure),
        ("match_rate", |c| c.match_rate()),
    ];
    for (label, f) in rows {
        let mut r = vec![label.to_string()];
        r.extend(keys.iter().map(|k| real(f(&tabs[k]))));
        t.push(r);
    }
    let mut n = vec!["n".to_string()];
    n.extend(keys.iter().map(|k| tabs[k].n.to_string()));
    t.push(n);
    Ok(t)
}

fn indicator(v: Option<bool>) -> String {
    v.map(|b| if b { "1" } else { "0" }.to_string()).unwrap_or_default()
}

pub fn run_dynamics(ctx: &Ctx) -> Result<()> {
    let classified = ctx.classified()?;
    let records = ctx.harmonized()?;
    let by_key: HashMap<(&str, i32), &HarmonizedRecord> =
        records.iter().map(|r| ((r.person_id.as_str(), r.year), r)).collect();
    let cal = ctx.cfg.calendar();
    let periods = ctx.cfg.dynamics.periods();
    let bridge = ctx.cfg.dynamics.bridge_gaps;

    let mut obs = Vec::with_capacity(classified.len());
    for c in &classified {
        let r = by_key
            .get(&(c.person_id.as_str(), c.year))
            .ok_or_else(|| pfs_core::Error::Join(format!("classified row {}/{} has no harmonized record", c.person_id, c.year)))?;
        obs.push(Observation {
            person_id: c.person_id.clone(),
            year: c.year,
            insecure: c.insecure,
            weight: c.adjusted_weight,
            labels: labels(r),
        });
    }
    let series = build_series(&obs, &cal)?;
    let d = ctx.dir(DYNAMICS)?;

    let spells = compute_spells(&series, &cal, bridge);
    let mut t = Table::new("spells", &["person_id", "start_wave", "length", "left_censored", "right_censored", "weight"]);
    for s in &spells {
        t.push(vec![
            s.person_id.clone(),
            s.start_wave.to_string(),
            s.length.to_string(),
            indicator(Some(s.left_censored)),
            indicator(Some(s.right_censored)),
            real(s.weight),
        ]);
    }
    std::fs::write(d.join("spells.csv"), t.csv_bytes()?)?;
    let dist = spell_distribution(&spells);
    let mut t = Table::new("spell_lengths", &["length", "n_spells", "weighted_share", "unweighted_share"]);
    for b in &dist.by_length {
        t.push(vec![b.length.to_string(), b.n_spells.to_string(), real(b.weighted_share), real(b.unweighted_share)]);
    }
    std::fs::write(d.join("spell_lengths.csv"), t.csv_bytes()?)?;
    let mut t = Table::new("spell_summary", &["statistic", "weighted", "unweighted"]);
    t.push(vec!["n_spells".into(), dist.n_spells.to_string(), dist.n_spells.to_string()]);
    t.push(vec!["transitory_share".into(), real(dist.transitory_weighted), real(dist.transitory_unweighted)]);
    t.push(vec!["persistent_share".into(), real(dist.persistent_weighted), real(dist.persistent_unweighted)]);
    t.push(vec!["mean_length".into(), real(dist.mean_length_weighted), real(dist.mean_length_unweighted)]);
    std::fs::write(d.join("spell_summary.csv"), t.csv_bytes()?)?;

    let mut t = Table::new(
        "transitions",
        &["grouping", "group", "n_pairs", "insecure_both", "insecure_first_only", "insecure_second_only", "secure_both"],
    );
    for g in Grouping::ALL {
        for (label, counts) in transition_matrix(&series, &cal, g, &periods) {
            let s = counts.shares();
            t.push(vec![
                g.as_str().into(),
                label,
                s.n_pairs.to_string(),
                real(s.insecure_both),
                real(s.insecure_first_only),
                real(s.insecure_second_only),
                real(s.secure_both),
            ]);
        }
    }
    std::fs::write(d.join("transitions.csv"), t.csv_bytes()?)?;

    let mut t = Table::new("chronic", &["grouping", "group", "period", "n_persons", "share"]);
    for g in [Grouping::Total, Grouping::Sex, Grouping::Race, Grouping::Education] {
        let res = chronic_prevalence(&series, &cal, &periods, g);
        let mut groups: Vec<&String> = res.keys().map(|(_, l)| l).collect();
        groups.sort();
        groups.dedup();
        for label in groups {
            for p in &periods {
                if let Some(c) = res.get(&(p.label(), label.clone())) {
                    let group = if g == Grouping::Total { "total".to_string() } else { label.clone() };
                    t.push(vec![g.as_str().into(), group, p.label(), c.n_persons.to_string(), real(c.share())]);
                }
            }
        }
    }
    std::fs::write(d.join("chronic.csv"), t.csv_bytes()?)?;

    let mut t = Table::new(
        "newly_still",
        &["year", "still", "newly", "prior_unknown", "population", "still_share", "newly_share", "prior_unknown_share"],
    );
    for r in newly_still_decomposition(&series, &cal) {
        let share = |x: f64| if r.population > 0.0 { x / r.population } else { 0.0 };
        t.push(vec![
            r.year.to_string(),
            real(r.still),
            real(r.newly),
            real(r.prior_unknown),
            real(r.population),
            real(share(r.still)),
            real(share(r.newly)),
            real(share(r.prior_unknown)),
        ]);
    }
    std::fs::write(d.join("newly_still.csv"), t.csv_bytes()?)?;

    // PFS against the food security scale
    let mut pairs = Vec::new();
    let mut entries = Vec::new();
    let mut summaries = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for c in &classified {
        let r = by_key[&(c.person_id.as_str(), c.year)];
        let Some(status) = r.fsss_status else { continue };
        let fsss_insecure = status == FoodStatus::Insecure;
        pairs.push(Paired { year: c.year, pfs_insecure: c.insecure, fsss_insecure, weight: c.adjusted_weight });
        if let Some(score) = r.fsss_raw {
            entries.push(FsssEntry {
                person_id: c.person_id.clone(),
                year: c.year,
                score,
                pfs: c.pfs,
                weight: c.adjusted_weight,
            });
            xs.push(c.pfs);
            ys.push(score as f64);
        }
        summaries.push(SummaryRecord {
            cell: Cell::of(c.insecure, fsss_insecure),
            weight: c.adjusted_weight,
            female_rp: r.rp.sex.map(|s| s == Sex::Female),
            nonwhite_rp: r.rp.race.map(|s| s == Race::NonWhite),
            married_rp: r.rp.married,
            disabled_rp: r.rp.disabled,
            less_hs_rp: r.rp.education.map(|e| e == Education::LessHs),
            college_rp: r.rp.education.map(|e| e == Education::College),
            rp_age: r.rp.age,
            family_size: r.family_size as f64,
            ln_income_pc: r.income_pc.map(ln_income),
            food_exp_pc: r.food_exp_pc_month,
            pfs: c.pfs,
            fsss_raw: r.fsss_raw.map(f64::from),
        });
    }
    std::fs::write(d.join("crosstab.csv"), crosstab_table("crosstab", &pairs)?.csv_bytes()?)?;
    let reclassified: Vec<Paired> = match ctx.targets()? {
        Some(targets) => {
            let flags = reclassify_fsss_by_rank(&entries, &targets);
            entries
                .iter()
                .zip(flags)
                .zip(classified_lookup(&classified, &entries))
                .map(|((e, f), pfs_insecure)| Paired { year: e.year, pfs_insecure, fsss_insecure: f, weight: e.weight })
                .collect()
        }
        None => Vec::new(),
    };
    std::fs::write(d.join("crosstab_reclassified.csv"), crosstab_table("crosstab_reclassified", &reclassified)?.csv_bytes()?)?;

    let corr = |m| match rank_correlation(&xs, &ys, m) {
        Ok(v) => json!({ "value": v }),
        Err(reason) => json!({ "value": null, "reason": reason }),
    };
    write_json(
        &d.join("rank_correlation.json"),
        &json!({
            "n_pairs": xs.len(),
            "weighting": "unweighted",
            "spearman": corr(RankMethod::Spearman),
            "kendall_tau_b": corr(RankMethod::KendallTauB),
        }),
    )?;

    let mut t = Table::new("classification_by_characteristic", &["characteristic", "n", "secure_both", "pfs_secure_fsss_insecure", "pfs_insecure_fsss_secure", "insecure_both"]);
    if !summaries.is_empty() {
        for r in classification_by_characteristic(&summaries) {
            let mut row = vec![r.label, r.n.to_string()];
            row.extend(r.shares.iter().map(|s| real(*s)));
            t.push(row);
        }
    }
    std::fs::write(d.join("classification_by_characteristic.csv"), t.csv_bytes()?)?;
    let mut t = Table::new("group_summary", &["variable", "statistic", "secure_both", "pfs_secure_fsss_insecure", "pfs_insecure_fsss_secure", "insecure_both"]);
    if !summaries.is_empty() {
        let cells = group_summary(&summaries);
        let mut n = vec!["n".to_string(), "count".to_string()];
        n.extend(cells.iter().map(|c| c.n.to_string()));
        t.push(n);
        type Pick = fn(&pfs_core::dynamics::summary::CellSummary) -> pfs_core::dynamics::summary::Moment;
        let vars: [(&str, Pick); 11] = [
            ("female_rp", |c| c.female_rp),
            ("rp_age", |c| c.rp_age),
            ("nonwhite_rp", |c| c.nonwhite_rp),
            ("married_rp", |c| c.married_rp),
            ("disabled_rp", |c| c.disabled_rp),
            ("less_hs_rp", |c| c.less_hs_rp),
            ("family_size", |c| c.family_size),
            ("ln_income_pc", |c| c.ln_income_pc),
            ("food_exp_pc", |c| c.food_exp_pc),
            ("pfs", |c| c.pfs),
            ("fsss_raw", |c| c.fsss_raw),
        ];
        for (name, f) in vars {
            let mut mean = vec![name.to_string(), "mean".to_string()];
            let mut sd = vec![name.to_string(), "sd".to_string()];
            for c in &cells {
                mean.push(opt_real(f(c).mean));
                sd.push(opt_real(f(c).sd));
            }
            t.push(mean);
            t.push(sd);
        }
    }
    std::fs::write(d.join("group_summary.csv"), t.csv_bytes()?)?;

    let weights: Vec<f64> = classified.iter().map(|c| c.adjusted_weight).collect();
    let ins: Vec<f64> = classified.iter().map(|c| if c.insecure { 1.0 } else { 0.0 }).collect();
    ctx.finish(
        DYNAMICS,
        json!({
            "persons": series.len(),
            "spells": spells.len(),
            "fsss_pairs": pairs.len(),
            "bridge_gaps": bridge,
            "pooled_prevalence": weighted_mean(&ins, &weights),
        }),
    )
}

fn classified_lookup(classified: &[Classified], entries: &[FsssEntry]) -> Vec<bool> {
    let m: HashMap<(&str, i32), bool> = classified.iter().map(|c| ((c.person_id.as_str(), c.year), c.insecure)).collect();
    entries.iter().map(|e| m[&(e.person_id.as_str(), e.year)]).collect()
}

/// Oracle suite plus checks on whatever the output directory holds.
pub fn run_validate(ctx: &Ctx) -> Result<()> {
    let targets = ctx.targets()?;
    let checks = crate::checks::run_all(&ctx.out, targets.as_ref())?;
    for c in &checks {
        log::info!("{} {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    let d = ctx.dir(VALIDATE)?;
    std::fs::write(d.join("validation.csv"), crate::checks::to_table(&checks).csv_bytes()?)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    ctx.finish(VALIDATE, json!({ "checks": checks.len(), "failed": failed }))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}
