//! Consumer price index table and deflation to base-period dollars.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CpiTable {
    monthly: BTreeMap<(i32, u8), f64>,
    annual: BTreeMap<i32, f64>,
    base: f64,
}

impl CpiTable {
    /// Base period is January 2019.
    pub const BASE_YEAR: i32 = 2019;
    pub const BASE_MONTH: u8 = 1;

    /// Build from `(year, month, index)` rows. A row with no month gives the
    /// annual average directly; otherwise annual averages are the mean of the
    /// monthly entries.
    pub fn from_rows(rows: impl IntoIterator<Item = (i32, Option<u8>, f64)>) -> Result<Self> {
        let mut monthly = BTreeMap::new();
        let mut explicit_annual = BTreeMap::new();
        for (year, month, index) in rows {
            if !(index > 0.0 && index.is_finite()) {
                return Err(Error::Data(format!("CPI index for {year} must be positive, got {index}")));
            }
            match month {
                Some(m) if (1..=12).contains(&m) => {
                    monthly.insert((year, m), index);
                }
                Some(m) => return Err(Error::Data(format!("CPI month {m} out of range in {year}"))),
                None => {
                    explicit_annual.insert(year, index);
                }
            }
        }
        let mut sums: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
        for (&(y, _), &v) in &monthly {
            let e = sums.entry(y).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
        let mut annual: BTreeMap<i32, f64> =
            sums.into_iter().map(|(y, (s, n))| (y, s / n as f64)).collect();
        annual.extend(explicit_annual);
        let base = monthly
            .get(&(Self::BASE_YEAR, Self::BASE_MONTH))
            .copied()
            .or_else(|| annual.get(&Self::BASE_YEAR).copied())
            .ok_or_else(|| Error::Range("CPI table does not cover the January 2019 base".into()))?;
        Ok(Self { monthly, annual, base })
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Schema(format!("CPI table missing column `{name}`")))
        };
        let (iy, im, ii) = (col("year")?, col("month")?, col("index")?);
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Data(format!("CPI row {}: bad {what}", line + 1));
            let year: i32 = rec.get(iy).unwrap_or("").trim().parse().map_err(|_| bad("year"))?;
            let month_cell = rec.get(im).unwrap_or("").trim();
            let month = if month_cell.is_empty() {
                None
            } else {
                Some(month_cell.parse::<u8>().map_err(|_| bad("month"))?)
            };
            let index: f64 = rec.get(ii).unwrap_or("").trim().parse().map_err(|_| bad("index"))?;
            rows.push((year, month, index));
        }
        Self::from_rows(rows)
    }

    /// Index for a year and optional month: monthly value when available,
    /// otherwise the annual average.
    pub fn index(&self, year: i32, month: Option<u8>) -> Result<f64> {
        if let Some(m) = month {
            if let Some(v) = self.monthly.get(&(year, m)) {
                return Ok(*v);
            }
        }
        self.annual
            .get(&year)
            .copied()
            .ok_or_else(|| Error::Range(format!("CPI table does not cover {year}")))
    }

    /// Convert nominal dollars to January 2019 dollars.
    pub fn deflate(&self, amount: f64, year: i32, month: Option<u8>) -> Result<f64> {
        Ok(amount * self.base / self.index(year, month)?)
    }

    /// Inverse of [`deflate`](Self::deflate).
    pub fn inflate(&self, real: f64, year: i32, month: Option<u8>) -> Result<f64> {
        Ok(real * self.index(year, month)? / self.base)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.annual.keys().copied()
    }

    /// Rows in `(year, month, index)` order, monthly entries only.
    pub fn monthly_rows(&self) -> impl Iterator<Item = (i32, u8, f64)> + '_ {
        self.monthly.iter().map(|(&(y, m), &v)| (y, m, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> CpiTable {
        let mut rows: Vec<(i32, Option<u8>, f64)> = (1..=12).map(|m| (1985, Some(m), 100.0)).collect();
        rows.push((2019, Some(1), 230.0));
        rows.push((2019, Some(2), 231.0));
        CpiTable::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_at_base() {
        let t = table();
        assert_eq!(t.deflate(123.45, 2019, Some(1)).unwrap(), 123.45);
    }

    #[test]
    fn scales_by_index_ratio() {
        let t = table();
        assert!((t.deflate(100.0, 1985, Some(6)).unwrap() - 230.0).abs() < 1e-12);
        // annual average used without a month
        assert!((t.deflate(100.0, 1985, None).unwrap() - 230.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_year() {
        let t = table();
        assert!(matches!(t.deflate(1.0, 1950, None), Err(Error::Range(_))));
    }
}
