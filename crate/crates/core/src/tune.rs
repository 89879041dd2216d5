//! Early-stopping search: stopping grids, subsampling folds, out-of-bag
//! risk over the grid, and extraction of the best stopping vector.
//!
//! Evaluating a stopping vector does not need its own fit. All vectors that
//! agree on which parameters are still active at every iteration share one
//! fitting path, so the evaluator walks a tree of paths: it advances a
//! single fit while all pending targets agree, and clones the predictor
//! state only where their active sets split. Points on the same path (for
//! example the dense band of mu counts at a fixed sigma count) are scored
//! in passing at no extra fitting cost.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::boost::{build_all_workspaces, BoostModel, Engine};
use crate::error::{Error, Result};
use crate::family::{compute_offset, family_by_name, kahan_sum};

/// Stopping vectors to score, sorted lexicographically and free of
/// duplicates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StopGrid {
    pub points: Vec<Vec<usize>>,
    pub dense_mu: bool,
    pub min: usize,
    pub max: Vec<usize>,
    pub length_out: usize,
    pub log_scale: bool,
}

/// Subsampling fold weights: one 0/1 column per fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSet {
    pub columns: Vec<Vec<f64>>,
    pub fraction: f64,
    pub seed: u64,
}

/// Out-of-bag risk per fold per grid point; a fold that failed to fit is
/// masked rather than aborting the whole search.
#[derive(Debug, Clone)]
pub struct CVResult {
    pub grid: StopGrid,
    pub risks: Vec<Vec<Option<f64>>>,
}

/// The grid-point minimizer of the fold-averaged risk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChosenStop {
    pub mstop: Vec<usize>,
    /// True when a coordinate sits on its grid edge; the searched range was
    /// probably too narrow, so a re-run with a wider grid is advisable.
    pub on_boundary: bool,
}

fn make_axis(min: usize, max: usize, length_out: usize, log_scale: bool) -> Vec<usize> {
    let lo = min as f64;
    let hi = max as f64;
    let mut axis: Vec<usize> = (0..length_out)
        .map(|i| {
            let t = i as f64 / (length_out - 1) as f64;
            let v = if log_scale {
                (lo.ln() + (hi.ln() - lo.ln()) * t).exp()
            } else {
                lo + (hi - lo) * t
            };
            v.round() as usize
        })
        .collect();
    axis.dedup();
    axis
}

/// Build the stopping grid: the Cartesian product of per-parameter axes,
/// optionally densified along the first (mu) dimension with every integer
/// count down to the other parameters' level.
pub fn make_grid(
    max: &[usize],
    min: usize,
    length_out: usize,
    log_scale: bool,
    dense_mu: bool,
) -> Result<StopGrid> {
    if min < 1 {
        return Err(Error::InvalidArgument("grid min must be at least 1".into()));
    }
    if length_out < 2 {
        return Err(Error::InvalidArgument(
            "grid needs at least 2 points per axis".into(),
        ));
    }
    if max.is_empty() {
        return Err(Error::InvalidArgument("no grid dimensions given".into()));
    }
    if let Some(&m) = max.iter().find(|&&m| m < min) {
        return Err(Error::InvalidArgument(format!(
            "grid max {m} is below min {min}"
        )));
    }
    let axes: Vec<Vec<usize>> = max
        .iter()
        .map(|&m| make_axis(min, m, length_out, log_scale))
        .collect();

    let mut points: Vec<Vec<usize>> = vec![Vec::new()];
    for axis in &axes {
        points = points
            .iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }

    if dense_mu {
        let mut rest: Vec<Vec<usize>> = vec![Vec::new()];
        for axis in &axes[1..] {
            rest = rest
                .iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        for combo in rest {
            let lower = combo.iter().copied().max().unwrap_or(min);
            for m in lower..=max[0] {
                let mut q = Vec::with_capacity(combo.len() + 1);
                q.push(m);
                q.extend_from_slice(&combo);
                points.push(q);
            }
        }
    }

    points.sort();
    points.dedup();
    Ok(StopGrid {
        points,
        dense_mu,
        min,
        max: max.to_vec(),
        length_out,
        log_scale,
    })
}

/// Exactly uniform integer below `bound`, by rejection.
fn uniform_below(rng: &mut ChaCha20Rng, bound: u64) -> u64 {
    let threshold = u64::MAX - u64::MAX % bound;
    loop {
        let r = rng.next_u64();
        if r < threshold {
            return r % bound;
        }
    }
}

/// Draw B subsampling folds of floor(fraction * n) in-bag observations
/// each, without replacement, deterministically under the seed.
pub fn make_folds(n: usize, b: usize, fraction: f64, seed: u64) -> Result<FoldSet> {
    if n < 20 {
        return Err(Error::InvalidArgument(format!(
            "subsampling needs at least 20 observations, got {n}"
        )));
    }
    if b < 2 {
        return Err(Error::InvalidArgument("at least 2 folds required".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    let in_bag = (fraction * n as f64).floor() as usize;
    if in_bag == 0 {
        return Err(Error::InvalidArgument("fraction leaves no in-bag rows".into()));
    }
    // every fold must keep a meaningful out-of-bag sample
    if (n - in_bag) as f64 / (n as f64) < 0.1 {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} leaves under 10% of observations out-of-bag"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut columns = Vec::with_capacity(b);
    let mut idx: Vec<usize> = Vec::with_capacity(n);
    for _ in 0..b {
        idx.clear();
        idx.extend(0..n);
        for i in 0..in_bag {
            let j = i + uniform_below(&mut rng, (n - i) as u64) as usize;
            idx.swap(i, j);
        }
        let mut col = vec![0.0; n];
        for &i in &idx[..in_bag] {
            col[i] = 1.0;
        }
        columns.push(col);
    }
    Ok(FoldSet {
        columns,
        fraction,
        seed,
    })
}

/// Mean negative log-likelihood over the out-of-bag rows.
fn oob_risk(engine: &Engine, etas: &[Vec<f64>], oob: &[usize]) -> f64 {
    let links = engine.family.links();
    let mut theta = vec![0.0; links.len()];
    let total = kahan_sum(oob.iter().map(|&i| {
        for (j, link) in links.iter().enumerate() {
            theta[j] = link.to_param(etas[j][i]);
        }
        -engine.family.loglik(engine.y[i], &theta)
    }));
    total / oob.len() as f64
}

/// Advance one fold's fit along the tree of stopping paths, scoring each
/// pending target the moment its state is reached.
fn walk_paths(
    engine: &Engine,
    pending: &[(usize, Vec<usize>)],
    etas: &mut Vec<Vec<f64>>,
    m_start: usize,
    oob: &[usize],
    out: &mut [Option<f64>],
) -> Result<()> {
    let mut remaining: Vec<(usize, Vec<usize>)> = pending.to_vec();
    let mut m = m_start;
    loop {
        let mut rest = Vec::with_capacity(remaining.len());
        for (idx, g) in remaining {
            if g.iter().copied().max().unwrap_or(0) == m - 1 {
                out[idx] = Some(oob_risk(engine, etas, oob));
            } else {
                rest.push((idx, g));
            }
        }
        remaining = rest;
        if remaining.is_empty() {
            return Ok(());
        }
        // split by which parameters iteration m still updates
        let mask_of = |g: &[usize]| -> u32 {
            g.iter()
                .enumerate()
                .fold(0u32, |acc, (k, &t)| if m <= t { acc | 1 << k } else { acc })
        };
        let first_mask = mask_of(&remaining[0].1);
        if remaining.iter().all(|(_, g)| mask_of(g) == first_mask) {
            for k in 0..etas.len() {
                if first_mask & (1 << k) != 0 {
                    engine.step_param(etas, m, k)?;
                }
            }
            m += 1;
            continue;
        }
        let mut groups: std::collections::BTreeMap<u32, Vec<(usize, Vec<usize>)>> =
            std::collections::BTreeMap::new();
        for (idx, g) in remaining {
            groups.entry(mask_of(&g)).or_default().push((idx, g));
        }
        for (mask, group) in groups {
            let mut child = etas.clone();
            for k in 0..child.len() {
                if mask & (1 << k) != 0 {
                    engine.step_param(&mut child, m, k)?;
                }
            }
            walk_paths(engine, &group, &mut child, m + 1, oob, out)?;
        }
        return Ok(());
    }
}

fn fold_risks(
    model: &BoostModel,
    grid: &StopGrid,
    fold: &[f64],
) -> Result<Vec<Option<f64>>> {
    let family = family_by_name(&model.family_name)?;
    let data = model.training_data()?;
    let y = data.continuous(&model.response)?.to_vec();
    let weights: Vec<f64> = model
        .weights
        .iter()
        .zip(fold)
        .map(|(&b, &f)| b * f)
        .collect();
    let oob: Vec<usize> = (0..data.n())
        .filter(|&i| fold[i] == 0.0 && model.weights[i] > 0.0)
        .collect();
    if oob.is_empty() {
        return Err(Error::InvalidArgument(
            "fold leaves no out-of-bag observations".into(),
        ));
    }
    let offsets = compute_offset(family.as_ref(), &y, &weights)?;
    let workspaces = build_all_workspaces(&model.terms, data, &weights)?;
    let engine = Engine {
        family: family.as_ref(),
        y: &y,
        weights: &weights,
        workspaces: &workspaces,
        nu: &model.nu,
        stabilization: model.stabilization,
    };
    let mut etas: Vec<Vec<f64>> = offsets.iter().map(|&o| vec![o; data.n()]).collect();
    let mut out = vec![None; grid.points.len()];
    let pending: Vec<(usize, Vec<usize>)> = grid
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.clone()))
        .collect();
    walk_paths(&engine, &pending, &mut etas, 1, &oob, &mut out)?;
    Ok(out)
}

/// Score every grid point out-of-bag for every fold; `cores` bounds the
/// fold-level parallelism. Results are keyed by fold index, so serial and
/// parallel runs are identical.
pub fn cv_risk(
    model: &BoostModel,
    grid: &StopGrid,
    folds: &FoldSet,
    cores: usize,
) -> Result<CVResult> {
    let k_count = model.param_count();
    if grid.points.is_empty() {
        return Err(Error::InvalidArgument("empty stopping grid".into()));
    }
    if grid.points.iter().any(|p| p.len() != k_count) {
        return Err(Error::InvalidArgument(format!(
            "grid dimension does not match the model's {k_count} parameters"
        )));
    }
    let n = model.training_data()?.n();
    if folds.columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument(
            "fold length does not match the training data".into(),
        ));
    }

    let run = |fold: &Vec<f64>| -> Option<Vec<Option<f64>>> {
        match fold_risks(model, grid, fold) {
            Ok(r) => Some(r),
            Err(e) => {
                eprintln!("warning: fold dropped from cross-validation: {e}");
                None
            }
        }
    };
    let results: Vec<Option<Vec<Option<f64>>>> = if cores > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cores)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            folds.columns.par_iter().map(run).collect()
        })
    } else {
        folds.columns.iter().map(run).collect()
    };

    if results.iter().all(|r| r.is_none()) {
        return Err(Error::InvalidArgument(
            "cross-validation failed in every fold".into(),
        ));
    }
    let blank = vec![None; grid.points.len()];
    let risks = results
        .into_iter()
        .map(|r| r.unwrap_or_else(|| blank.clone()))
        .collect();
    Ok(CVResult {
        grid: grid.clone(),
        risks,
    })
}

impl CVResult {
    /// Fold-averaged risk per grid point; NaN where every fold is masked.
    pub fn averaged(&self) -> Vec<f64> {
        (0..self.grid.points.len())
            .map(|p| {
                let vals: Vec<f64> = self.risks.iter().filter_map(|row| row[p]).collect();
                if vals.is_empty() {
                    f64::NAN
                } else {
                    kahan_sum(vals.iter().cloned()) / vals.len() as f64
                }
            })
            .collect()
    }
}

/// Pick the grid point with the lowest fold-averaged risk. Ties go to the
/// smallest total iteration count, then to the lexicographically smallest
/// vector.
pub fn optimal_mstop(cvr: &CVResult) -> Result<ChosenStop> {
    let avg = cvr.averaged();
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, (&risk, point)) in avg.iter().zip(&cvr.grid.points).enumerate() {
        if !risk.is_finite() {
            continue;
        }
        let total: usize = point.iter().sum();
        let better = match best {
            None => true,
            Some((r, t, _)) => risk < r || (risk == r && total < t),
        };
        if better {
            best = Some((risk, total, i));
        }
    }
    let (_, _, idx) = best.ok_or_else(|| {
        Error::InvalidArgument("no finite risk values to minimize".into())
    })?;
    let mstop = cvr.grid.points[idx].clone();
    let k_count = mstop.len();
    let mut on_boundary = false;
    for k in 0..k_count {
        let axis_min = cvr.grid.points.iter().map(|p| p[k]).min().unwrap();
        let axis_max = cvr.grid.points.iter().map(|p| p[k]).max().unwrap();
        if mstop[k] == axis_min || mstop[k] == axis_max {
            on_boundary = true;
        }
    }
    Ok(ChosenStop { mstop, on_boundary })
}
