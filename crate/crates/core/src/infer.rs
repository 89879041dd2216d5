//! Post-fit interpretation: marginal prediction intervals from the fitted
//! distribution's quantiles, partial-effect tables for plotting, and
//! per-region aggregation of spatial or categorical effects.

use crate::boost::{BoostModel, PredictScale};
use crate::data::{Column, ColumnData, Dataset};
use crate::error::{Error, Result};
use crate::family::kahan_sum;
use crate::learner::ResolvedBasis;

/// Default resolution of marginal and partial-effect grids.
pub const GRID_POINTS: usize = 150;

/// Value a non-target covariate is held at while one covariate varies.
#[derive(Debug, Clone, PartialEq)]
pub enum FixedValue {
    Mean(f64),
    Mode(String),
}

/// Marginal prediction intervals along one covariate, all other covariates
/// held fixed. `lower[l]` and `upper[l]` belong to `levels[l]`.
#[derive(Debug, Clone)]
pub struct PredictionIntervalTable {
    pub covariate: String,
    pub grid: Vec<f64>,
    pub median: Vec<f64>,
    pub levels: Vec<f64>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    /// How the remaining covariates were pinned, for output metadata.
    pub fixed: Vec<(String, FixedValue)>,
}

/// One base-learner's contribution to one parameter's predictor, tabulated
/// over its covariate. The values carry no offset, so only differences
/// between grid points are meaningful. Categorical learners tabulate their
/// levels (`labels`) instead of a numeric range.
#[derive(Debug, Clone)]
pub struct PartialEffectTable {
    pub parameter: String,
    pub learner: String,
    pub covariate: String,
    pub grid: Vec<f64>,
    pub labels: Option<Vec<String>>,
    pub contribution: Vec<f64>,
    pub selected: bool,
}

/// Per-region effect aggregate, ready for choropleth export.
#[derive(Debug, Clone)]
pub struct RegionSummaryTable {
    pub parameter: String,
    pub learner: String,
    pub covariate: String,
    pub response_scale: bool,
    pub regions: Vec<String>,
    pub values: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| {
            if i == points - 1 {
                // exact endpoint; the affine form can round past hi
                hi
            } else {
                lo + (hi - lo) * i as f64 / (points - 1) as f64
            }
        })
        .collect()
}

/// Covariates the model's learners read, first appearance order, no
/// duplicates.
fn model_covariates(model: &BoostModel) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for term in &model.terms {
        for learner in term {
            if !out.iter().any(|c| c == &learner.covariate) {
                out.push(learner.covariate.clone());
            }
        }
    }
    out
}

/// Most frequent level; ties go to the lexicographically smallest, which is
/// the lowest code because levels are stored sorted.
fn mode_level(codes: &[u32], levels: &[String]) -> String {
    let mut counts = vec![0usize; levels.len()];
    for &c in codes {
        counts[c as usize] += 1;
    }
    let mut best = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    levels[best].clone()
}

/// One-covariate grid dataset: `which` sweeps its observed training range,
/// every other model covariate sits at its training mean or modal level.
fn marginal_grid(
    model: &BoostModel,
    which: &str,
    points: usize,
) -> Result<(Dataset, Vec<f64>, Vec<(String, FixedValue)>)> {
    let data = model.training_data()?;
    let covariates = model_covariates(model);
    if !covariates.iter().any(|c| c == which) {
        return Err(Error::UnknownColumn(which.to_string()));
    }
    let target = data.continuous(which)?;
    let lo = target.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = target.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let grid = linspace(lo, hi, points);

    let mut columns = Vec::with_capacity(covariates.len());
    let mut fixed = Vec::new();
    for name in &covariates {
        let data_col = if name == which {
            ColumnData::Continuous(grid.clone())
        } else {
            match &data.column(name)?.data {
                ColumnData::Continuous(v) => {
                    let mean = kahan_sum(v.iter().cloned()) / v.len() as f64;
                    fixed.push((name.clone(), FixedValue::Mean(mean)));
                    ColumnData::Continuous(vec![mean; points])
                }
                ColumnData::Categorical { codes, levels } => {
                    let mode = mode_level(codes, levels);
                    fixed.push((name.clone(), FixedValue::Mode(mode.clone())));
                    ColumnData::Categorical {
                        codes: vec![0; points],
                        levels: vec![mode],
                    }
                }
            }
        };
        columns.push(Column {
            name: name.clone(),
            data: data_col,
        });
    }
    Ok((Dataset::from_columns(columns)?, grid, fixed))
}

/// Marginal prediction intervals for the response along `which`: the median
/// plus, for each coverage level pi, the (1-pi)/2 and (1+pi)/2 response
/// quantiles of the fitted distribution at every grid point.
///
/// Values are on the scale the model was fitted on; any response rescaling
/// is undone by the caller.
pub fn predint(
    model: &BoostModel,
    which: &str,
    pi: &[f64],
    grid_points: usize,
) -> Result<PredictionIntervalTable> {
    if pi.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one coverage level required".into(),
        ));
    }
    if let Some(&p) = pi.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "coverage level {p} is outside (0, 1)"
        )));
    }
    if grid_points < 2 {
        return Err(Error::InvalidArgument(
            "prediction grid needs at least 2 points".into(),
        ));
    }
    let family = crate::family::family_by_name(&model.family_name)?;
    let (grid_data, grid, fixed) = marginal_grid(model, which, grid_points)?;
    let theta = model.predict(&grid_data, PredictScale::Response)?;

    let at = |p: f64| -> Result<Vec<f64>> {
        (0..grid.len())
            .map(|i| {
                let th: Vec<f64> = theta.iter().map(|col| col[i]).collect();
                family.quantile(p, &th)
            })
            .collect()
    };
    let median = at(0.5)?;
    let mut lower = Vec::with_capacity(pi.len());
    let mut upper = Vec::with_capacity(pi.len());
    for &p in pi {
        lower.push(at((1.0 - p) / 2.0)?);
        upper.push(at((1.0 + p) / 2.0)?);
    }
    Ok(PredictionIntervalTable {
        covariate: which.to_string(),
        grid,
        median,
        levels: pi.to_vec(),
        lower,
        upper,
        fixed,
    })
}

/// True when `selector` picks the item: empty selects everything, an
/// integer selects by 1-based position, anything else matches as a name
/// substring.
fn selector_matches(selector: &str, name: &str, position: usize) -> bool {
    let s = selector.trim();
    if s.is_empty() {
        return true;
    }
    if let Ok(i) = s.parse::<usize>() {
        return i == position + 1;
    }
    name.contains(s)
}

/// Grid and optional labels a single learner is tabulated over.
fn learner_grid(
    model: &BoostModel,
    learner: &crate::learner::ResolvedLearner,
    points: usize,
) -> Result<(Dataset, Vec<f64>, Option<Vec<String>>)> {
    match &learner.basis {
        ResolvedBasis::Linear { .. } | ResolvedBasis::PSpline { .. } => {
            let data = model.training_data()?;
            let x = data.continuous(&learner.covariate)?;
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let grid = linspace(lo, hi, points);
            let ds = Dataset::from_columns(vec![Column {
                name: learner.covariate.clone(),
                data: ColumnData::Continuous(grid.clone()),
            }])?;
            Ok((ds, grid, None))
        }
        ResolvedBasis::Categories { levels } => categorical_grid(&learner.covariate, levels),
        ResolvedBasis::Regions { graph } => categorical_grid(&learner.covariate, graph.regions()),
    }
}

fn categorical_grid(
    covariate: &str,
    levels: &[String],
) -> Result<(Dataset, Vec<f64>, Option<Vec<String>>)> {
    let ds = Dataset::from_columns(vec![Column {
        name: covariate.to_string(),
        data: ColumnData::Categorical {
            codes: (0..levels.len() as u32).collect(),
            levels: levels.to_vec(),
        },
    }])?;
    let grid = (0..levels.len()).map(|i| i as f64).collect();
    Ok((ds, grid, Some(levels.to_vec())))
}

/// Tabulate the contribution of every learner matching the selectors, one
/// table per (parameter, learner) pair. Learners the fitting path never
/// picked come back as zero with `selected` false.
pub fn partial_effects(
    model: &BoostModel,
    param_selector: &str,
    learner_selector: &str,
    grid_points: usize,
) -> Result<Vec<PartialEffectTable>> {
    let family = crate::family::family_by_name(&model.family_name)?;
    let names = family.param_names();
    let mut out = Vec::new();
    for (k, term) in model.terms.iter().enumerate() {
        if !selector_matches(param_selector, names[k], k) {
            continue;
        }
        let picked = model.selected(k);
        for (j, learner) in term.iter().enumerate() {
            if !selector_matches(learner_selector, &learner.name, j) {
                continue;
            }
            let (ds, grid, labels) = learner_grid(model, learner, grid_points)?;
            let contribution = model.predict_partial(&ds, k, j)?;
            out.push(PartialEffectTable {
                parameter: names[k].to_string(),
                learner: learner.name.clone(),
                covariate: learner.covariate.clone(),
                grid,
                labels,
                contribution,
                selected: picked.contains(&j),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no learner matches parameter '{param_selector}' and learner '{learner_selector}'"
        )));
    }
    Ok(out)
}

/// Aggregate a categorical or region effect over the training observations
/// of each region. On the link scale the aggregate is the mean of the
/// region learner's own contribution; on the response scale it is the mean
/// of the full fitted parameter, offset and all other learners included.
pub fn region_summary(
    model: &BoostModel,
    region: &str,
    param_selector: &str,
    response_scale: bool,
) -> Result<RegionSummaryTable> {
    let family = crate::family::family_by_name(&model.family_name)?;
    let names = family.param_names();
    let data = model.training_data()?;
    let (codes, levels) = data.categorical(region)?;

    let mut found: Option<(usize, usize)> = None;
    'search: for (k, term) in model.terms.iter().enumerate() {
        if !selector_matches(param_selector, names[k], k) {
            continue;
        }
        for (j, learner) in term.iter().enumerate() {
            let is_grouped = matches!(
                learner.basis,
                ResolvedBasis::Categories { .. } | ResolvedBasis::Regions { .. }
            );
            if learner.covariate == region && is_grouped {
                found = Some((k, j));
                break 'search;
            }
        }
    }
    let (k, j) = found.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "no categorical or region learner on '{region}' for parameter '{param_selector}'"
        ))
    })?;

    let per_obs = if response_scale {
        model.predict(data, PredictScale::Response)?[k].clone()
    } else {
        model.predict_partial(data, k, j)?
    };
    let mut totals = vec![0.0; levels.len()];
    let mut counts = vec![0usize; levels.len()];
    for (i, &c) in codes.iter().enumerate() {
        totals[c as usize] += per_obs[i];
        counts[c as usize] += 1;
    }
    let mut regions = Vec::new();
    let mut values = Vec::new();
    for (r, level) in levels.iter().enumerate() {
        if counts[r] > 0 {
            regions.push(level.clone());
            values.push(totals[r] / counts[r] as f64);
        }
    }
    Ok(RegionSummaryTable {
        parameter: names[k].to_string(),
        learner: model.terms[k][j].name.clone(),
        covariate: region.to_string(),
        response_scale,
        regions,
        values,
    })
}
