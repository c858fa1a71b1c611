use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_none(),
            Column::Categorical(v) => v[row].is_none(),
        }
    }
}

/// A minimal column store: named columns of equal length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    n_rows: usize,
    names: Vec<String>,
    columns: HashMap<String, Column>,
}

impl Frame {
    pub fn new(n_rows: usize) -> Self {
        Self { n_rows, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn insert(&mut self, name: &str, column: Column) -> Result<()> {
        if column.len() != self.n_rows {
            return Err(Error::Schema(format!(
                "column `{name}` has {} rows, frame has {}",
                column.len(),
                self.n_rows
            )));
        }
        if self.columns.insert(name.to_string(), column).is_none() {
            self.names.push(name.to_string());
        }
        Ok(())
    }

    pub fn with_numeric(mut self, name: &str, values: Vec<Option<f64>>) -> Result<Self> {
        self.insert(name, Column::Numeric(values))?;
        Ok(self)
    }

    pub fn with_categorical(mut self, name: &str, values: Vec<Option<String>>) -> Result<Self> {
        self.insert(name, Column::Categorical(values))?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .get(name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found")))
    }

    pub fn numeric(&self, name: &str) -> Result<&[Option<f64>]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Categorical(_) => Err(Error::Schema(format!("column `{name}` is not numeric"))),
        }
    }

    /// Cell rendered as a level label; numeric cells print without a
    /// trailing `.0` when integral.
    pub fn level(&self, name: &str, row: usize) -> Result<Option<String>> {
        Ok(match self.column(name)? {
            Column::Categorical(v) => v[row].clone(),
            Column::Numeric(v) => v[row].map(level_label),
        })
    }
}

pub(crate) fn level_label(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}
