//! Long-format panel CSV reader.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use super::record::*;
use crate::error::{Error, Result};

/// Canonical input columns, in the order the synthetic generator writes them.
pub const PANEL_COLUMNS: [&str; 34] = [
    "person_id",
    "year",
    "household_id",
    "role",
    "interview_month",
    "individual_weight",
    "state",
    "sample_flag",
    "snap_raw",
    "snap_benefit",
    "benefit_recall",
    "food_home",
    "food_home_recall",
    "food_delivered",
    "food_delivered_recall",
    "food_out",
    "food_out_recall",
    "family_size",
    "n_children",
    "income_annual",
    "tfp_cost_pc",
    "fsss_raw",
    "fsss_status",
    "rp_age",
    "rp_sex",
    "rp_race",
    "rp_marital",
    "rp_education",
    "rp_employment",
    "rp_disability",
    "age",
    "sex",
    "race",
    "education",
];

/// Maps canonical column names to the header names used in a given file.
/// Unmapped columns are looked up under their canonical name.
#[derive(Debug, Clone, Default, PartialEq, serde::Deserialize, Serialize)]
pub struct ColumnMap(pub BTreeMap<String, String>);

impl ColumnMap {
    pub fn header_for<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.0.get(canonical).map(String::as_str).unwrap_or(canonical)
    }
}

/// A recoverable problem found while reading a row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Warning {
    /// 1-based data row (header excluded); 0 for whole-table notes.
    pub row: usize,
    pub column: String,
    pub value: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedPanel {
    pub records: Vec<RawRecord>,
    pub warnings: Vec<Warning>,
}

pub fn parse_panel_csv(path: &Path, schema: &ColumnMap) -> Result<ParsedPanel> {
    let file = std::fs::File::open(path)?;
    parse_panel_reader(file, schema)
}

pub fn parse_panel_reader<R: Read>(reader: R, schema: &ColumnMap) -> Result<ParsedPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = BTreeMap::new();
    for canonical in PANEL_COLUMNS {
        let name = schema.header_for(canonical);
        let pos = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("panel is missing mapped column `{name}`")))?;
        index.insert(canonical, pos);
    }

    let mut out = ParsedPanel::default();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = RowReader { rec: &rec, index: &index, row: i + 1, warnings: &mut out.warnings };
        let record = row.record()?;
        if !seen.insert((record.person_id.clone(), record.year)) {
            return Err(Error::Integrity(format!(
                "duplicate (person_id, year) = ({}, {}) at row {}",
                record.person_id,
                record.year,
                i + 1
            )));
        }
        out.records.push(record);
    }
    Ok(out)
}

struct RowReader<'a> {
    rec: &'a csv::StringRecord,
    index: &'a BTreeMap<&'static str, usize>,
    row: usize,
    warnings: &'a mut Vec<Warning>,
}

impl RowReader<'_> {
    fn cell(&self, col: &str) -> &str {
        self.rec.get(self.index[col]).unwrap_or("")
    }

    fn warn(&mut self, col: &str, message: &str) {
        let value = self.cell(col).to_string();
        self.warnings.push(Warning { row: self.row, column: col.to_string(), value, message: message.to_string() });
    }

    fn required<T: std::str::FromStr>(&self, col: &str) -> Result<T> {
        self.cell(col).parse().map_err(|_| {
            Error::Data(format!("row {}: required column `{col}` has invalid value `{}`", self.row, self.cell(col)))
        })
    }

    fn optional_f64(&mut self, col: &str) -> Option<f64> {
        let s = self.cell(col);
        if s.is_empty() {
            return None;
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.warn(col, "malformed number treated as missing");
                None
            }
        }
    }

    fn optional_code<T>(&mut self, col: &str, parse: fn(&str) -> Option<T>) -> Option<T> {
        let s = self.cell(col);
        if s.is_empty() {
            return None;
        }
        let parsed = parse(s);
        if parsed.is_none() {
            self.warn(col, "unrecognized code treated as missing");
        }
        parsed
    }

    fn recall(&mut self, col: &str) -> Recall {
        if self.cell(col).is_empty() {
            return Recall::Missing;
        }
        self.optional_code(col, Recall::parse).unwrap_or(Recall::Other)
    }

    fn component(&mut self, amount: &str, recall: &str) -> Component {
        let recall_code = self.recall(recall);
        let cell = self.cell(amount);
        if is_nonresponse_token(cell) {
            return Component { amount: None, recall: Recall::Other };
        }
        Component { amount: self.optional_f64(amount), recall: recall_code }
    }

    fn record(&mut self) -> Result<RawRecord> {
        let person_id = self.cell("person_id").to_string();
        if person_id.is_empty() {
            return Err(Error::Data(format!("row {}: empty person_id", self.row)));
        }
        let year: i32 = self.required("year")?;
        let household_id = self.cell("household_id").to_string();
        let role = Role::parse(self.cell("role"))
            .ok_or_else(|| Error::Data(format!("row {}: unknown role `{}`", self.row, self.cell("role"))))?;
        let sample_flag = SampleFlag::parse(self.cell("sample_flag")).ok_or_else(|| {
            Error::Data(format!("row {}: unknown sample_flag `{}`", self.row, self.cell("sample_flag")))
        })?;

        let interview_month = match self.cell("interview_month") {
            "" => None,
            s => match s.parse::<u8>() {
                Ok(m) if (1..=12).contains(&m) => Some(m),
                _ => {
                    self.warn("interview_month", "month outside 1-12 treated as missing");
                    None
                }
            },
        };

        let mut individual_weight = self.optional_f64("individual_weight").unwrap_or(0.0);
        if individual_weight < 0.0 {
            return Err(Error::Data(format!("row {}: negative individual weight", self.row)));
        }
        if sample_flag == SampleFlag::Nonsample && individual_weight != 0.0 {
            self.warn("individual_weight", "nonsample member carries zero weight");
            individual_weight = 0.0;
        }

        let family_size: u32 = self.required("family_size")?;
        let n_children: u32 = self.required("n_children")?;
        if family_size < 1 || n_children > family_size {
            return Err(Error::Data(format!(
                "row {}: family_size {family_size} / n_children {n_children} inconsistent",
                self.row
            )));
        }

        let snap_raw = Some(self.cell("snap_raw").to_string()).filter(|s| !s.is_empty());
        let mut benefit_recall = self.recall("benefit_recall");
        let snap_benefit_raw = if is_nonresponse_token(self.cell("snap_benefit")) {
            benefit_recall = Recall::Other;
            None
        } else {
            self.optional_f64("snap_benefit")
        };

        let food = FoodComponents {
            home: self.component("food_home", "food_home_recall"),
            delivered: self.component("food_delivered", "food_delivered_recall"),
            eaten_out: self.component("food_out", "food_out_recall"),
        };

        let tfp_cost_pc: f64 = self.required("tfp_cost_pc")?;
        if !(tfp_cost_pc > 0.0) {
            return Err(Error::Data(format!("row {}: TFP cost must be positive", self.row)));
        }

        let mut fsss_raw = match self.cell("fsss_raw") {
            "" => None,
            s => match s.parse::<u8>() {
                Ok(v) if v <= 18 => Some(v),
                _ => {
                    self.warn("fsss_raw", "score outside 0-18 treated as missing");
                    None
                }
            },
        };
        let mut fsss_status = self.optional_code("fsss_status", FoodStatus::parse);
        if (fsss_raw.is_some() || fsss_status.is_some()) && !FSSS_WAVES.contains(&year) {
            self.warn("fsss_raw", "food security scale outside scale waves ignored");
            fsss_raw = None;
            fsss_status = None;
        }

        let rp = RpDemographics {
            age: self.optional_f64("rp_age"),
            sex: self.optional_code("rp_sex", Sex::parse),
            race: self.optional_code("rp_race", Race::from_raw),
            married: self.optional_code("rp_marital", parse_marital),
            education: self.optional_code("rp_education", Education::parse),
            employed: self.optional_code("rp_employment", parse_employment),
            disabled: self.optional_code("rp_disability", parse_disability),
        };
        let person = PersonDemographics {
            age: self.optional_f64("age"),
            sex: self.optional_code("sex", Sex::parse),
            race: self.optional_code("race", Race::from_raw),
            education: self.optional_code("education", Education::parse),
        };

        Ok(RawRecord {
            person_id,
            year,
            household_id,
            role,
            interview_month,
            individual_weight,
            state: self.cell("state").to_ascii_uppercase(),
            sample_flag,
            snap_raw,
            snap_benefit_raw,
            benefit_recall,
            food,
            family_size,
            n_children,
            income_annual: self.optional_f64("income_annual"),
            tfp_cost_pc,
            fsss_raw,
            fsss_status,
            rp,
            person,
        })
    }
}

/// Write records in the canonical input layout. Reals use the shortest
/// representation that parses back to the same value.
pub fn write_panel<W: Write>(out: W, records: &[RawRecord]) -> Result<()> {
    fn num(x: Option<f64>) -> String {
        x.map(|v| v.to_string()).unwrap_or_default()
    }
    fn recall(r: Recall) -> &'static str {
        if r == Recall::Missing {
            ""
        } else {
            r.as_str()
        }
    }
    fn code<T: std::fmt::Display>(x: Option<T>) -> String {
        x.map(|v| v.to_string()).unwrap_or_default()
    }
    fn flag(x: Option<bool>, yes: &str, no: &str) -> String {
        x.map(|b| if b { yes } else { no }.to_string()).unwrap_or_default()
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(PANEL_COLUMNS)?;
    for r in records {
        w.write_record([
            r.person_id.clone(),
            r.year.to_string(),
            r.household_id.clone(),
            r.role.as_str().into(),
            code(r.interview_month),
            r.individual_weight.to_string(),
            r.state.clone(),
            r.sample_flag.as_str().into(),
            r.snap_raw.clone().unwrap_or_default(),
            num(r.snap_benefit_raw),
            recall(r.benefit_recall).into(),
            num(r.food.home.amount),
            recall(r.food.home.recall).into(),
            num(r.food.delivered.amount),
            recall(r.food.delivered.recall).into(),
            num(r.food.eaten_out.amount),
            recall(r.food.eaten_out.recall).into(),
            r.family_size.to_string(),
            r.n_children.to_string(),
            num(r.income_annual),
            r.tfp_cost_pc.to_string(),
            code(r.fsss_raw),
            code(r.fsss_status),
            num(r.rp.age),
            code(r.rp.sex),
            code(r.rp.race),
            flag(r.rp.married, "married", "not_married"),
            code(r.rp.education),
            flag(r.rp.employed, "employed", "not_employed"),
            flag(r.rp.disabled, "disabled", "not_disabled"),
            num(r.person.age),
            code(r.person.sex),
            code(r.person.race),
            code(r.person.education),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Single, widowed, separated and divorced all count as not married.
pub fn parse_marital(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "married" | "yes" | "1" | "true" => Some(true),
        "not_married" | "single" | "never_married" | "widowed" | "separated" | "divorced" | "no" | "0"
        | "false" => Some(false),
        _ => None,
    }
}

/// Working now or temporarily laid off counts as employed.
pub fn parse_employment(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "employed" | "working" | "working_now" | "temporarily_laid_off" | "laid_off" | "yes" | "1" | "true" => {
            Some(true)
        }
        "not_employed" | "unemployed" | "looking" | "looking_for_work" | "retired" | "permanently_disabled"
        | "housekeeping" | "student" | "other" | "no" | "0" | "false" => Some(false),
        _ => None,
    }
}

/// Any limitation on the type or amount of work counts as disabled.
pub fn parse_disability(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "disabled" | "yes" | "1" | "true" | "limited" => Some(true),
        "not_disabled" | "no" | "0" | "false" | "none" => Some(false),
        _ => None,
    }
}
