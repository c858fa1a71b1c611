//! The `report` stage: summary tables in the configured format and figure
//! analogues as CSV data plus SVG.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use pfs_core::dynasty::PersonYear;
use pfs_core::ingest::{Education, Race, Region, Sex};
use pfs_core::pfs::PfsRecord;
use pfs_core::stats::{box_stats, weighted_mean, weighted_quantile, weighted_sd};
use pfs_core::threshold::Classified;

use crate::association::{association_models, table_b2};
use crate::error::Result;
use crate::stages::{Ctx, CALIBRATE, DYNAMICS, ESTIMATE, INGEST, REPORT};
use crate::svg::{render, Chart};
use crate::table::{opt_real, real, Table};

fn share(v: Option<bool>) -> Option<f64> {
    v.map(|b| if b { 1.0 } else { 0.0 })
}

struct Summary {
    rows: Vec<Vec<String>>,
}

impl Summary {
    fn add(&mut self, panel: &str, variable: &str, kind: &str, values: &[(Option<f64>, f64)]) {
        let (v, w): (Vec<f64>, Vec<f64>) = values.iter().filter_map(|&(v, w)| Some((v?, w))).unzip();
        let mean = weighted_mean(&v, &w);
        let sd = if kind == "mean" { weighted_sd(&v, &w) } else { None };
        self.rows.push(vec![panel.into(), variable.into(), kind.into(), v.len().to_string(), opt_real(mean), opt_real(sd)]);
    }
}

/// Person-level characteristics (unweighted, one row per study person) and
/// person-year characteristics (adjusted weights).
pub fn table1(person_years: &[PersonYear], pfs: &[PfsRecord], classified: &[Classified], first_year: i32) -> Table {
    let mut s = Summary { rows: Vec::new() };

    let mut persons: BTreeMap<&str, Vec<&PersonYear>> = BTreeMap::new();
    for p in person_years {
        persons.entry(p.record.person_id.as_str()).or_default().push(p);
    }
    let mut ever_insecure: HashMap<&str, bool> = HashMap::new();
    for c in classified {
        *ever_insecure.entry(c.person_id.as_str()).or_default() |= c.insecure;
    }
    let per = |f: &dyn Fn(&str, &[&PersonYear]) -> Option<f64>| -> Vec<(Option<f64>, f64)> {
        persons.iter().map(|(id, ys)| (f(id, ys), 1.0)).collect()
    };
    let a = "(a) person";
    s.add(a, "female", "share", &per(&|_, ys| share(ys.iter().find_map(|p| p.record.person.sex).map(|x| x == Sex::Female))));
    s.add(
        a,
        &format!("surveyed_in_{first_year}"),
        "share",
        &per(&|_, ys| share(Some(ys.iter().map(|p| p.record.year).min() == Some(first_year)))),
    );
    s.add(a, "waves_surveyed", "mean", &per(&|_, ys| Some(ys.len() as f64)));
    s.add(a, "ever_insecure_pfs", "share", &per(&|id, _| share(ever_insecure.get(id).copied())));
    s.add(a, "ever_snap", "share", &per(&|_, ys| share(Some(ys.iter().any(|p| p.record.snap_status)))));
    s.add(a, "waves_snap", "mean", &per(&|_, ys| Some(ys.iter().filter(|p| p.record.snap_status).count() as f64)));

    let b = "(b) person-year";
    let py = |f: &dyn Fn(&PersonYear) -> Option<f64>| -> Vec<(Option<f64>, f64)> {
        person_years.iter().map(|p| (f(p), p.adjusted_weight)).collect()
    };
    s.add(b, "rp_age", "mean", &py(&|p| p.record.rp.age));
    s.add(b, "female_rp", "share", &py(&|p| share(p.record.rp.sex.map(|x| x == Sex::Female))));
    s.add(b, "nonwhite_rp", "share", &py(&|p| share(p.record.rp.race.map(|x| x == Race::NonWhite))));
    s.add(b, "married_rp", "share", &py(&|p| share(p.record.rp.married)));
    for e in Education::ALL {
        s.add(b, &format!("rp_education[{e}]"), "share", &py(&|p| share(p.record.rp.education.map(|x| x == e))));
    }
    s.add(b, "employed_rp", "share", &py(&|p| share(p.record.rp.employed)));
    s.add(b, "disabled_rp", "share", &py(&|p| share(p.record.rp.disabled)));
    s.add(b, "family_size", "mean", &py(&|p| Some(p.record.family_size as f64)));
    s.add(b, "child_ratio", "mean", &py(&|p| Some(p.record.child_ratio)));
    for r in Region::ALL {
        s.add(b, &format!("region[{}]", r.as_str()), "share", &py(&|p| share(p.record.region.map(|x| x == r))));
    }
    s.add(b, "snap", "share", &py(&|p| share(Some(p.record.snap_status))));
    s.add(b, "income_pc_k", "mean", &py(&|p| p.record.income_pc.map(|x| x / 1000.0)));
    s.add(b, "food_exp_pc_month", "mean", &py(&|p| Some(p.record.food_exp_pc_month)));
    s.add(b, "snap_benefit_month", "mean", &py(&|p| p.record.snap_benefit_month.filter(|_| p.record.snap_status)));
    let pw: Vec<(Option<f64>, f64)> = pfs.iter().map(|r| (Some(r.pfs), r.adjusted_weight)).collect();
    s.add(b, "pfs", "mean", &pw);
    let cw: Vec<(Option<f64>, f64)> = classified.iter().map(|c| (share(Some(c.insecure)), c.adjusted_weight)).collect();
    s.add(b, "insecure_pfs", "share", &cw);
    let nw: Vec<(Option<f64>, f64)> = pfs.iter().map(|r| (share(Some(r.nme < 1.0)), r.adjusted_weight)).collect();
    s.add(b, "nme_below_1", "share", &nw);

    Table {
        name: "table1".into(),
        columns: ["panel", "variable", "statistic", "n", "mean", "sd"].iter().map(|s| s.to_string()).collect(),
        rows: s.rows,
    }
}

/// Weighted mean and the 20th and 5th percentiles of PFS per year.
pub fn figure1(pfs: &[PfsRecord]) -> Result<Table> {
    let mut t = Table::new("figure1", &["year", "mean", "p20", "p5"]);
    for (year, (v, w)) in pfs_core::threshold::by_year(pfs) {
        t.push(vec![
            year.to_string(),
            opt_real(weighted_mean(&v, &w)),
            real(weighted_quantile(&v, &w, 0.20)?),
            real(weighted_quantile(&v, &w, 0.05)?),
        ]);
    }
    Ok(t)
}

/// Box statistics of person-average PFS by education, sex and race.
pub fn figure4(pfs: &[PfsRecord], person_years: &[PersonYear]) -> Result<Table> {
    let mut labels: HashMap<&str, String> = HashMap::new();
    for p in person_years {
        let d = &p.record.person;
        if let (Some(e), Some(s), Some(r)) = (d.education, d.sex, d.race) {
            labels.entry(p.record.person_id.as_str()).or_insert_with(|| format!("{e}/{s}/{r}"));
        }
    }
    let mut sums: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::new();
    for r in pfs {
        let e = sums.entry(r.person_id.as_str()).or_default();
        e.0 += r.pfs;
        e.1 += r.adjusted_weight;
        e.2 += 1.0;
    }
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (id, (s, w, n)) in sums {
        if let Some(l) = labels.get(id) {
            let g = groups.entry(l.clone()).or_default();
            g.0.push(s / n);
            g.1.push(w / n);
        }
    }
    let mut t = Table::new(
        "figure4",
        &["group", "n", "min", "whisker_low", "q1", "median", "q3", "whisker_high", "max", "n_outliers"],
    );
    for (label, (v, w)) in groups {
        let b = box_stats(&v, &w)?;
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        t.push(vec![
            label,
            b.n.to_string(),
            real(min),
            real(b.whisker_low),
            real(b.q1),
            real(b.median),
            real(b.q3),
            real(b.whisker_high),
            real(max),
            b.n_outliers.to_string(),
        ]);
    }
    Ok(t)
}

fn select(t: &Table, name: &str, cols: &[&str]) -> Table {
    let idx: Vec<usize> = cols.iter().map(|c| t.column(c).expect("column present")).collect();
    Table {
        name: name.into(),
        columns: cols.iter().map(|s| s.to_string()).collect(),
        rows: t.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect(),
    }
}

fn renamed(mut t: Table, name: &str) -> Table {
    t.name = name.into();
    t
}

struct FigureJob {
    data: Table,
    title: &'static str,
    chart: Chart<'static>,
}

pub fn run_report(ctx: &Ctx) -> Result<()> {
    // fail early, in pipeline order, on the first missing stage
    ctx.require(INGEST, "harmonized.csv")?;
    let composition = ctx.require(INGEST, "composition.csv")?;
    ctx.require(ESTIMATE, "pfs.csv")?;
    let coefficients = ctx.require(ESTIMATE, "coefficients.csv")?;
    ctx.require(CALIBRATE, "classified.csv")?;
    let prevalence = ctx.require(CALIBRATE, "prevalence.csv")?;
    let dyn_file = |f: &str| ctx.require(DYNAMICS, f);
    let (crosstab, reclassified, by_char, summary, transitions, chronic, spell_lengths, newly_still) = (
        dyn_file("crosstab.csv")?,
        dyn_file("crosstab_reclassified.csv")?,
        dyn_file("classification_by_characteristic.csv")?,
        dyn_file("group_summary.csv")?,
        dyn_file("transitions.csv")?,
        dyn_file("chronic.csv")?,
        dyn_file("spell_lengths.csv")?,
        dyn_file("newly_still.csv")?,
    );

    let records = ctx.harmonized()?;
    let sp = ctx.study_panel(&records)?;
    let pfs = ctx.pfs()?;
    let classified = ctx.classified()?;
    let format = ctx.cfg.format;
    let d = ctx.dir(REPORT)?;
    let calib = |f: &str| Some(ctx.out.join(CALIBRATE).join(f)).filter(|p| p.is_file());

    let mut tables = vec![
        table1(&sp.person_years, &pfs, &classified, ctx.cfg.window.start),
        renamed(Table::read_csv("table3", &crosstab)?, "table3"),
        Table::read_csv("table4a", &by_char)?,
        Table::read_csv("table4b", &summary)?,
        Table::read_csv("table5", &transitions)?,
        Table::read_csv("table6", &chronic)?,
        Table::read_csv("table_b1", &coefficients)?,
        table_b2(&association_models(&sp.person_years, &pfs)?),
        Table::read_csv("table_b4", &reclassified)?,
    ];
    for (file, name) in [("table2.csv", "table2"), ("table_b3.csv", "table_b3")] {
        match calib(file) {
            Some(p) => tables.push(Table::read_csv(name, &p)?),
            None => log::warn!("{name} skipped: calibrate wrote no {file} (needs macro and targets inputs)"),
        }
    }
    for t in &tables {
        t.write(&d, format)?;
    }

    let mut jobs = vec![
        FigureJob { data: figure1(&pfs)?, title: "PFS by year: mean, 20th and 5th percentiles", chart: Chart::Lines { x: "year", ys: &["mean", "p20", "p5"] } },
        FigureJob {
            data: renamed(Table::read_csv("figure3", &prevalence)?, "figure3"),
            title: "Food insecurity prevalence by PFS",
            chart: Chart::Lines { x: "year", ys: &["prevalence"] },
        },
        FigureJob { data: figure4(&pfs, &sp.person_years)?, title: "Person-average PFS by education, sex and race", chart: Chart::Boxes { label: "group" } },
        FigureJob {
            data: select(&Table::read_csv("spell_lengths", &spell_lengths)?, "figure5", &["length", "weighted_share"]),
            title: "Spell length of food insecurity (waves)",
            chart: Chart::Bars { x: "length", ys: &["weighted_share"] },
        },
        FigureJob {
            data: select(
                &Table::read_csv("newly_still", &newly_still)?,
                "figure6",
                &["year", "still_share", "newly_share", "prior_unknown_share"],
            ),
            title: "Food insecure: still, newly, prior unknown",
            chart: Chart::Bars { x: "year", ys: &["still_share", "newly_share", "prior_unknown_share"] },
        },
    ];
    let comp = Table::read_csv("figure_a2", &composition)?;
    let with_reference = comp.column("reference_female_share").is_some();
    jobs.push(FigureJob {
        data: comp,
        title: "Household composition against reference",
        chart: Chart::Lines {
            x: "year",
            ys: if with_reference {
                &["female_rp_share", "nonwhite_rp_share", "reference_female_share", "reference_nonwhite_share"]
            } else {
                &["female_rp_share", "nonwhite_rp_share"]
            },
        },
    });
    if let Some(p) = calib("threshold_predictions.csv") {
        jobs.push(FigureJob {
            data: renamed(Table::read_csv("figure2", &p)?, "figure2"),
            title: "Anchored and predicted PFS thresholds",
            chart: Chart::Lines { x: "year", ys: &["anchored", "(1)", "(2)", "(3)", "(4)", "(5)"] },
        });
    }
    jobs.par_iter().map(|j| write_figure(&d, j)).collect::<Result<Vec<()>>>()?;

    ctx.finish(REPORT, json!({
        "format": format.extension(),
        "tables": tables.iter().map(|t| json!({ "name": t.name, "rows": t.rows.len() })).collect::<Vec<_>>(),
        "figures": jobs.iter().map(|j| j.data.name.clone()).collect::<Vec<_>>(),
    }))
}

fn write_figure(dir: &Path, job: &FigureJob) -> Result<()> {
    std::fs::write(dir.join(format!("{}.csv", job.data.name)), job.data.csv_bytes()?)?;
    std::fs::write(dir.join(format!("{}.svg", job.data.name)), render(&job.data, job.title, &job.chart))?;
    Ok(())
}
