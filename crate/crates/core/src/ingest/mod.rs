//! Panel ingestion: CSV parsing, regime harmonization, deflation and
//! demographic imputation.

pub mod cpi;
pub mod geo;
pub mod harmonize;
pub mod impute;
pub mod parse;
pub mod record;

use std::io::Write;

pub use cpi::CpiTable;
pub use geo::{residence, Region, Residence};
pub use harmonize::{
    harmonize_benefit, harmonize_food_expenditure, harmonize_panel, harmonize_snap_status, ExcludedRow,
    HarmonizedPanel, HarmonizedRecord, IngestExclusion, YearMeans,
};
pub use impute::{impute_race_education, ImputationSummary};
pub use parse::{parse_panel_csv, parse_panel_reader, write_panel, ColumnMap, ParsedPanel, Warning, PANEL_COLUMNS};
pub use record::*;

use crate::error::Result;

/// Column order of the harmonized table.
pub const HARMONIZED_COLUMNS: [&str; 31] = [
    "person_id",
    "year",
    "household_id",
    "role",
    "interview_month",
    "individual_weight",
    "state",
    "region",
    "sample_flag",
    "snap_status",
    "snap_benefit_month",
    "food_exp_pc_month",
    "zero_expenditure",
    "family_size",
    "n_children",
    "child_ratio",
    "income_pc",
    "tfp_cost_pc_real",
    "fsss_raw",
    "fsss_status",
    "rp_age",
    "rp_sex",
    "rp_race",
    "rp_marital",
    "rp_education",
    "rp_employed",
    "rp_disabled",
    "age",
    "sex",
    "race_binary",
    "education_cat",
];

/// Fixed six-decimal rendering used for every real-valued output cell.
pub fn fmt_real(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_real(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|b| if b { "1" } else { "0" }.to_string()).unwrap_or_default()
}

fn bool01(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// Write harmonized records in [`HARMONIZED_COLUMNS`] order.
pub fn write_harmonized<W: Write>(out: W, records: &[HarmonizedRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(HARMONIZED_COLUMNS)?;
    for r in records {
        w.write_record([
            r.person_id.clone(),
            r.year.to_string(),
            r.household_id.clone(),
            r.role.to_string(),
            opt(r.interview_month),
            fmt_real(r.individual_weight),
            r.state.clone(),
            r.region.map(|g| g.as_str().to_string()).unwrap_or_default(),
            r.sample_flag.to_string(),
            bool01(r.snap_status),
            opt_real(r.snap_benefit_month),
            fmt_real(r.food_exp_pc_month),
            bool01(r.zero_expenditure),
            r.family_size.to_string(),
            r.n_children.to_string(),
            fmt_real(r.child_ratio),
            opt_real(r.income_pc),
            fmt_real(r.tfp_cost_pc_real),
            opt(r.fsss_raw),
            opt(r.fsss_status),
            opt_real(r.rp.age),
            opt(r.rp.sex),
            opt(r.rp.race),
            opt_bool(r.rp.married),
            opt(r.rp.education),
            opt_bool(r.rp.employed),
            opt_bool(r.rp.disabled),
            opt_real(r.person.age),
            opt(r.person.sex),
            r.person.race.map(|x| x.to_string()).unwrap_or_else(|| "missing".into()),
            opt(r.person.education),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a table written by [`write_harmonized`].
pub fn read_harmonized<R: std::io::Read>(input: R) -> Result<Vec<HarmonizedRecord>> {
    use crate::error::Error;
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(HARMONIZED_COLUMNS.iter().copied()) {
        return Err(Error::Schema("harmonized table header does not match the expected column order".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let cell = |k: usize| rec.get(k).unwrap_or("").trim();
        let bad = |k: usize| Error::Data(format!("harmonized row {row}: bad `{}` value `{}`", HARMONIZED_COLUMNS[k], cell(k)));
        let real = |k: usize| -> Result<f64> { cell(k).parse().map_err(|_| bad(k)) };
        let opt_real = |k: usize| -> Result<Option<f64>> {
            if cell(k).is_empty() {
                Ok(None)
            } else {
                real(k).map(Some)
            }
        };
        let flag = |k: usize| -> Result<Option<bool>> {
            match cell(k) {
                "" => Ok(None),
                "1" => Ok(Some(true)),
                "0" => Ok(Some(false)),
                _ => Err(bad(k)),
            }
        };
        fn code<T>(s: &str, parse: fn(&str) -> Option<T>, e: impl FnOnce() -> Error) -> Result<Option<T>> {
            if s.is_empty() || s == "missing" {
                Ok(None)
            } else {
                parse(s).map(Some).ok_or_else(e)
            }
        }
        let region = match cell(7) {
            "" => None,
            s => Some(
                Region::ALL
                    .into_iter()
                    .find(|g| g.as_str() == s)
                    .ok_or_else(|| bad(7))?,
            ),
        };
        out.push(HarmonizedRecord {
            person_id: cell(0).to_string(),
            year: cell(1).parse().map_err(|_| bad(1))?,
            household_id: cell(2).to_string(),
            role: Role::parse(cell(3)).ok_or_else(|| bad(3))?,
            interview_month: code(cell(4), |s| s.parse().ok(), || bad(4))?,
            individual_weight: real(5)?,
            state: cell(6).to_string(),
            region,
            sample_flag: SampleFlag::parse(cell(8)).ok_or_else(|| bad(8))?,
            snap_status: flag(9)?.ok_or_else(|| bad(9))?,
            snap_benefit_month: opt_real(10)?,
            food_exp_pc_month: real(11)?,
            zero_expenditure: flag(12)?.ok_or_else(|| bad(12))?,
            family_size: cell(13).parse().map_err(|_| bad(13))?,
            n_children: cell(14).parse().map_err(|_| bad(14))?,
            child_ratio: real(15)?,
            income_pc: opt_real(16)?,
            tfp_cost_pc_real: real(17)?,
            fsss_raw: code(cell(18), |s| s.parse().ok(), || bad(18))?,
            fsss_status: code(cell(19), FoodStatus::parse, || bad(19))?,
            rp: RpDemographics {
                age: opt_real(20)?,
                sex: code(cell(21), Sex::parse, || bad(21))?,
                race: code(cell(22), Race::parse, || bad(22))?,
                married: flag(23)?,
                education: code(cell(24), Education::parse, || bad(24))?,
                employed: flag(25)?,
                disabled: flag(26)?,
            },
            person: PersonDemographics {
                age: opt_real(27)?,
                sex: code(cell(28), Sex::parse, || bad(28))?,
                race: code(cell(29), Race::parse, || bad(29))?,
                education: code(cell(30), Education::parse, || bad(30))?,
            },
        });
    }
    Ok(out)
}

/// Warnings as line-delimited JSON.
pub fn write_warnings<W: Write>(mut out: W, warnings: &[Warning]) -> Result<()> {
    for w in warnings {
        serde_json::to_writer(&mut out, w)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
