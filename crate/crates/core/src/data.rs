//! Tabular data handling: typed columns, CSV ingestion, fingerprints.

use crate::error::{Error, Result};
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Continuous(Vec<f64>),
    /// Codes index into `levels`; levels are sorted lexicographically so the
    /// coding does not depend on row order.
    Categorical { codes: Vec<u32>, levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn type_name(&self) -> &'static str {
        match self.data {
            ColumnData::Continuous(_) => "continuous",
            ColumnData::Categorical { .. } => "categorical",
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Continuous(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A rectangular dataset with named, typed columns and no missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    n: usize,
}

impl Dataset {
    pub fn from_columns(columns: Vec<Column>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidArgument("dataset has no columns".into()));
        }
        let n = columns[0].len();
        let mut seen = BTreeSet::new();
        for c in &columns {
            if c.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "column '{}' has {} rows, expected {}",
                    c.name,
                    c.len(),
                    n
                )));
            }
            if !seen.insert(c.name.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate column name '{}'",
                    c.name
                )));
            }
            if let ColumnData::Continuous(v) = &c.data {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "column '{}' has a non-finite value at row {}",
                        c.name, i
                    )));
                }
            }
        }
        Ok(Dataset { columns, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn continuous(&self, name: &str) -> Result<&[f64]> {
        match &self.column(name)?.data {
            ColumnData::Continuous(v) => Ok(v),
            ColumnData::Categorical { .. } => Err(Error::ColumnType {
                name: name.to_string(),
                found: "categorical",
                expected: "continuous",
            }),
        }
    }

    pub fn categorical(&self, name: &str) -> Result<(&[u32], &[String])> {
        match &self.column(name)?.data {
            ColumnData::Categorical { codes, levels } => Ok((codes, levels)),
            ColumnData::Continuous(_) => Err(Error::ColumnType {
                name: name.to_string(),
                found: "continuous",
                expected: "categorical",
            }),
        }
    }

    /// (schema hash, content hash). The schema hash covers column names,
    /// types, and the row count; the content hash additionally folds in
    /// every cell value.
    pub fn fingerprint(&self) -> (u64, u64) {
        let mut schema = Fnv::new();
        schema.write_u64(self.n as u64);
        for c in &self.columns {
            schema.write_bytes(c.name.as_bytes());
            schema.write_bytes(c.type_name().as_bytes());
        }
        let mut content = Fnv::new();
        content.write_u64(schema.finish());
        for c in &self.columns {
            match &c.data {
                ColumnData::Continuous(v) => {
                    for x in v {
                        content.write_u64(x.to_bits());
                    }
                }
                ColumnData::Categorical { codes, levels } => {
                    for l in levels {
                        content.write_bytes(l.as_bytes());
                    }
                    for &code in codes {
                        content.write_u64(code as u64);
                    }
                }
            }
        }
        (schema.finish(), content.finish())
    }
}

/// FNV-1a, fixed so fingerprints stay stable across platforms and releases.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator so concatenated fields do not collide
        self.0 ^= 0xff;
        self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
    }
    fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

/// Requested column type for ingestion; anything not hinted is inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeHint {
    Continuous,
    Categorical,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

/// Read a CSV file with a header row.
///
/// Rows with missing cells in `used` columns (all columns when `used` is
/// `None`) are dropped; the second return value counts them. A column is
/// continuous when every kept cell parses as a finite number, categorical
/// otherwise; `hints` override the inference per column.
pub fn ingest_csv(
    path: &Path,
    hints: &[(String, TypeHint)],
    used: Option<&[String]>,
) -> Result<(Dataset, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    if let Some(cols) = used {
        for c in cols {
            if !headers.contains(c) {
                return Err(Error::UnknownColumn(c.clone()));
            }
        }
    }
    for (name, _) in hints {
        if !headers.contains(name) {
            return Err(Error::UnknownColumn(name.clone()));
        }
    }
    let relevant: Vec<bool> = headers
        .iter()
        .map(|h| used.map_or(true, |cols| cols.contains(h)))
        .collect();

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        let cells: Vec<String> = record.iter().map(|c| c.to_string()).collect();
        if cells.len() != headers.len() {
            return Err(Error::InvalidArgument(format!(
                "row {} has {} cells, expected {}",
                rows.len() + dropped + 1,
                cells.len(),
                headers.len()
            )));
        }
        if cells
            .iter()
            .zip(&relevant)
            .any(|(c, &r)| r && is_missing(c))
        {
            dropped += 1;
        } else {
            rows.push(cells);
        }
    }

    let mut columns = Vec::with_capacity(headers.len());
    for (j, name) in headers.iter().enumerate() {
        let hint = hints
            .iter()
            .find(|(h, _)| h == name)
            .map(|&(_, t)| t);
        let parsed: Vec<Option<f64>> = rows
            .iter()
            .map(|r| {
                if is_missing(&r[j]) {
                    None
                } else {
                    r[j].parse::<f64>().ok().filter(|x| x.is_finite())
                }
            })
            .collect();
        let numeric = !rows.is_empty() && parsed.iter().all(|p| p.is_some());
        let continuous = match hint {
            Some(TypeHint::Continuous) => {
                if !numeric {
                    return Err(Error::ColumnType {
                        name: name.clone(),
                        found: "categorical",
                        expected: "continuous",
                    });
                }
                true
            }
            Some(TypeHint::Categorical) => false,
            None => numeric,
        };
        let data = if continuous {
            ColumnData::Continuous(parsed.into_iter().map(|p| p.unwrap()).collect())
        } else {
            // An unused column may still hold missing cells; keep them as an
            // explicit level so the dataset stays rectangular.
            let mut levels: Vec<String> = rows
                .iter()
                .map(|r| r[j].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            levels.sort();
            let codes = rows
                .iter()
                .map(|r| levels.binary_search(&r[j]).unwrap() as u32)
                .collect();
            ColumnData::Categorical { codes, levels }
        };
        columns.push(Column {
            name: name.clone(),
            data,
        });
    }
    Ok((Dataset::from_columns(columns)?, dropped))
}
