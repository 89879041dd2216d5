//! Deterministic artifact writing: fixed-precision numbers, stable column
//! orders, and one-line comment headers tying tables to their model.

use std::path::Path;

use anyhow::{Context, Result};
use lssboost::data::{ColumnData, Dataset};

/// 17 significant digits: enough for exact f64 round-trips.
pub fn sig(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

/// `# lssboost <command> fingerprint=<schema>-<content> <extras>`
pub fn comment_header(command: &str, fingerprint: (u64, u64), extras: &str) -> String {
    let (schema, content) = fingerprint;
    let mut line = format!("# lssboost {command} fingerprint={schema:016x}-{content:016x}");
    if !extras.is_empty() {
        line.push(' ');
        line.push_str(extras);
    }
    line.push('\n');
    line
}

/// Plain CSV of a dataset, ingestible again: continuous cells at full
/// precision, categorical cells as their labels, no comment line.
pub fn dataset_csv(data: &Dataset) -> String {
    let names: Vec<&str> = data.column_names().collect();
    let mut out = names.join(",");
    out.push('\n');
    for i in 0..data.n() {
        let row: Vec<String> = data
            .columns()
            .iter()
            .map(|c| match &c.data {
                ColumnData::Continuous(v) => sig(v[i]),
                ColumnData::Categorical { codes, levels } => {
                    levels[codes[i] as usize].clone()
                }
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
