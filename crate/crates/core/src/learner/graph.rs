//! Neighborhood graphs for spatially structured categorical effects.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Undirected region adjacency. Regions are kept sorted by label; edges
/// store index pairs into `regions`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrfGraph {
    regions: Vec<String>,
    edges: Vec<(u32, u32)>,
}

impl MrfGraph {
    pub fn new(mut regions: Vec<String>, label_edges: &[(String, String)]) -> Result<Self> {
        regions.sort();
        regions.dedup();
        if regions.len() < 2 {
            return Err(Error::Adjacency("need at least two regions".into()));
        }
        let index: BTreeMap<&str, u32> = regions
            .iter()
            .enumerate()
            .map(|(i, r)| (r.as_str(), i as u32))
            .collect();
        let mut edges = Vec::with_capacity(label_edges.len());
        for (a, b) in label_edges {
            let ia = *index
                .get(a.as_str())
                .ok_or_else(|| Error::Adjacency(format!("unknown region '{a}' in edge list")))?;
            let ib = *index
                .get(b.as_str())
                .ok_or_else(|| Error::Adjacency(format!("unknown region '{b}' in edge list")))?;
            if ia == ib {
                return Err(Error::Adjacency(format!("self-loop on region '{a}'")));
            }
            edges.push((ia.min(ib), ia.max(ib)));
        }
        edges.sort();
        edges.dedup();
        if edges.is_empty() {
            return Err(Error::Adjacency("adjacency has no edges".into()));
        }
        Ok(MrfGraph { regions, edges })
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    /// Graph Laplacian: degree on the diagonal, minus one per neighbor pair.
    /// Row sums are zero, so constant vectors are unpenalized.
    pub fn penalty(&self) -> nalgebra::DMatrix<f64> {
        let r = self.regions.len();
        let mut k = nalgebra::DMatrix::zeros(r, r);
        for &(a, b) in &self.edges {
            let (a, b) = (a as usize, b as usize);
            k[(a, a)] += 1.0;
            k[(b, b)] += 1.0;
            k[(a, b)] -= 1.0;
            k[(b, a)] -= 1.0;
        }
        k
    }

    /// Parse either a square 0/1 adjacency matrix with region names in the
    /// header and first column, or a two-column `region_a,region_b` edge
    /// list (with or without a header).
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rows: Vec<Vec<String>> = text
            .lines()
            .map(|l| l.split(',').map(|c| c.trim().to_string()).collect())
            .filter(|r: &Vec<String>| !(r.len() == 1 && r[0].is_empty()))
            .collect();
        if rows.is_empty() {
            return Err(Error::Adjacency("empty adjacency file".into()));
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Adjacency("ragged adjacency file".into()));
        }

        if width == 2 {
            // edge list; skip a header line if the pair repeats as labels only
            let body: Vec<(String, String)> = rows
                .iter()
                .skip(usize::from(rows[0][0].eq_ignore_ascii_case("region_a")))
                .map(|r| (r[0].clone(), r[1].clone()))
                .collect();
            let mut regions: Vec<String> = Vec::new();
            for (a, b) in &body {
                regions.push(a.clone());
                regions.push(b.clone());
            }
            return MrfGraph::new(regions, &body);
        }

        // square matrix: header row carries names, first column repeats them
        let names: Vec<String> = rows[0][1..].to_vec();
        if rows.len() != names.len() + 1 {
            return Err(Error::Adjacency(format!(
                "matrix is {}x{}, expected square with {} regions",
                rows.len() - 1,
                width - 1,
                names.len()
            )));
        }
        let mut edges = Vec::new();
        for (i, row) in rows[1..].iter().enumerate() {
            if row[0] != names[i] {
                return Err(Error::Adjacency(format!(
                    "row label '{}' does not match header '{}'",
                    row[0], names[i]
                )));
            }
            for (j, cell) in row[1..].iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Adjacency(format!("non-numeric adjacency cell '{cell}'"))
                })?;
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Adjacency(format!(
                        "adjacency cells must be 0 or 1, found {v}"
                    )));
                }
                if v == 1.0 && i < j {
                    edges.push((names[i].clone(), names[j].clone()));
                }
                if v == 1.0 && i == j {
                    return Err(Error::Adjacency(format!("self-loop on region '{}'", names[i])));
                }
            }
        }
        // symmetry check
        for (i, row) in rows[1..].iter().enumerate() {
            for j in 0..names.len() {
                if row[1 + j] != rows[1 + j][1 + i] {
                    return Err(Error::Adjacency(format!(
                        "adjacency not symmetric at ({}, {})",
                        names[i], names[j]
                    )));
                }
            }
        }
        MrfGraph::new(names, &edges)
    }
}
