//! Base-learners: penalized least-squares components selected by the
//! boosting loop.
//!
//! Every learner is a design matrix plus a quadratic penalty. The ridge
//! amount is not set directly; smooth and categorical learners are
//! calibrated so the trace of the hat matrix
//! `X (X'WX + lambda P)^-1 X'W` hits a requested degrees-of-freedom target,
//! which puts learners of different flexibility on an equal footing before
//! selection.

mod bspline;
mod graph;

pub use graph::MrfGraph;

use crate::data::Dataset;
use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

pub const DEFAULT_DF: f64 = 4.0;
pub const DEFAULT_SPLINE_DEGREE: usize = 3;
pub const DEFAULT_INNER_KNOTS: usize = 20;
pub const DEFAULT_DIFF_ORDER: usize = 2;

/// Degrees-of-freedom calibration solves for log lambda in this interval.
pub const LOG_LAMBDA_RANGE: (f64, f64) = (-30.0, 30.0);
pub const DF_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearnerKind {
    /// Straight line in one covariate, unpenalized.
    Linear { intercept: bool },
    /// B-spline basis with a difference penalty on adjacent coefficients.
    PSpline {
        degree: usize,
        inner_knots: usize,
        diff_order: usize,
    },
    /// One-hot coding of a categorical covariate with an identity penalty.
    RidgeCat,
    /// Region indicators penalized by the adjacency graph Laplacian.
    Mrf { graph: MrfGraph },
}

/// Declarative description of one base-learner before it has seen data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseLearnerSpec {
    pub covariate: String,
    pub kind: LearnerKind,
    /// Hat-matrix trace target; `None` only for unpenalized linear terms.
    pub df: Option<f64>,
}

impl BaseLearnerSpec {
    pub fn linear(covariate: &str) -> Self {
        BaseLearnerSpec {
            covariate: covariate.to_string(),
            kind: LearnerKind::Linear { intercept: true },
            df: None,
        }
    }

    pub fn linear_no_intercept(covariate: &str) -> Self {
        BaseLearnerSpec {
            covariate: covariate.to_string(),
            kind: LearnerKind::Linear { intercept: false },
            df: None,
        }
    }

    pub fn pspline(covariate: &str) -> Self {
        BaseLearnerSpec {
            covariate: covariate.to_string(),
            kind: LearnerKind::PSpline {
                degree: DEFAULT_SPLINE_DEGREE,
                inner_knots: DEFAULT_INNER_KNOTS,
                diff_order: DEFAULT_DIFF_ORDER,
            },
            df: Some(DEFAULT_DF),
        }
    }

    pub fn ridge_cat(covariate: &str) -> Self {
        BaseLearnerSpec {
            covariate: covariate.to_string(),
            kind: LearnerKind::RidgeCat,
            df: Some(DEFAULT_DF),
        }
    }

    pub fn mrf(covariate: &str, graph: MrfGraph) -> Self {
        BaseLearnerSpec {
            covariate: covariate.to_string(),
            kind: LearnerKind::Mrf { graph },
            df: Some(DEFAULT_DF),
        }
    }

    pub fn with_df(mut self, df: f64) -> Self {
        self.df = Some(df);
        self
    }

    pub fn name(&self) -> String {
        let tag = match self.kind {
            LearnerKind::Linear { .. } => "linear",
            LearnerKind::PSpline { .. } => "pspline",
            LearnerKind::RidgeCat => "ridge",
            LearnerKind::Mrf { .. } => "mrf",
        };
        format!("{tag}({})", self.covariate)
    }
}

/// A learner bound to training data: knots placed, levels recorded. This is
/// everything needed to rebuild a design matrix, on training or new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedLearner {
    pub name: String,
    pub covariate: String,
    pub basis: ResolvedBasis,
    pub df: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ResolvedBasis {
    Linear {
        intercept: bool,
    },
    PSpline {
        degree: usize,
        diff_order: usize,
        knots: Vec<f64>,
    },
    Categories {
        levels: Vec<String>,
    },
    Regions {
        graph: MrfGraph,
    },
}

/// Bind a spec to training data.
pub fn resolve(spec: &BaseLearnerSpec, data: &Dataset) -> Result<ResolvedLearner> {
    if let Some(df) = spec.df {
        if !(df.is_finite() && df > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "df target for '{}' must be positive, got {df}",
                spec.name()
            )));
        }
    }
    let basis = match &spec.kind {
        LearnerKind::Linear { intercept } => {
            if spec.df.is_some() {
                return Err(Error::InvalidArgument(format!(
                    "linear learner '{}' is unpenalized and takes no df target",
                    spec.name()
                )));
            }
            data.continuous(&spec.covariate)?;
            ResolvedBasis::Linear {
                intercept: *intercept,
            }
        }
        LearnerKind::PSpline {
            degree,
            inner_knots,
            diff_order,
        } => {
            if *degree == 0 || *inner_knots == 0 || *diff_order == 0 {
                return Err(Error::InvalidArgument(format!(
                    "pspline '{}' needs positive degree, knot count, and difference order",
                    spec.name()
                )));
            }
            let width = inner_knots + degree + 1;
            if *diff_order >= width {
                return Err(Error::InvalidArgument(format!(
                    "difference order {diff_order} too high for {width} basis functions"
                )));
            }
            let x = data.continuous(&spec.covariate)?;
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let knots = bspline::equidistant_knots(lo, hi, *inner_knots, *degree)?;
            ResolvedBasis::PSpline {
                degree: *degree,
                diff_order: *diff_order,
                knots,
            }
        }
        LearnerKind::RidgeCat => {
            let (_, levels) = data.categorical(&spec.covariate)?;
            ResolvedBasis::Categories {
                levels: levels.to_vec(),
            }
        }
        LearnerKind::Mrf { graph } => {
            let (_, levels) = data.categorical(&spec.covariate)?;
            for l in levels {
                if graph.regions().binary_search(l).is_err() {
                    return Err(Error::UnseenLevel {
                        column: spec.covariate.clone(),
                        level: l.clone(),
                    });
                }
            }
            ResolvedBasis::Regions {
                graph: graph.clone(),
            }
        }
    };
    Ok(ResolvedLearner {
        name: spec.name(),
        covariate: spec.covariate.clone(),
        basis,
        df: spec.df,
    })
}

impl ResolvedLearner {
    /// Number of design columns.
    pub fn width(&self) -> usize {
        match &self.basis {
            ResolvedBasis::Linear { intercept } => 1 + usize::from(*intercept),
            ResolvedBasis::PSpline { degree, knots, .. } => bspline::basis_count(knots, *degree),
            ResolvedBasis::Categories { levels } => levels.len(),
            ResolvedBasis::Regions { graph } => graph.region_count(),
        }
    }

    /// Build the design matrix over `data`.
    pub fn design(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let n = data.n();
        let d = self.width();
        match &self.basis {
            ResolvedBasis::Linear { intercept } => {
                let x = data.continuous(&self.covariate)?;
                let mut m = DMatrix::zeros(n, d);
                for i in 0..n {
                    if *intercept {
                        m[(i, 0)] = 1.0;
                        m[(i, 1)] = x[i];
                    } else {
                        m[(i, 0)] = x[i];
                    }
                }
                Ok(m)
            }
            ResolvedBasis::PSpline { degree, knots, .. } => {
                let x = data.continuous(&self.covariate)?;
                let mut m = DMatrix::zeros(n, d);
                let mut row = vec![0.0; d];
                for i in 0..n {
                    bspline::basis_row(knots, *degree, x[i], &mut row);
                    for (j, &v) in row.iter().enumerate() {
                        m[(i, j)] = v;
                    }
                }
                Ok(m)
            }
            ResolvedBasis::Categories { levels } => {
                let (codes, data_levels) = data.categorical(&self.covariate)?;
                let mut m = DMatrix::zeros(n, d);
                for i in 0..n {
                    let label = &data_levels[codes[i] as usize];
                    let j = levels
                        .binary_search(label)
                        .map_err(|_| Error::UnseenLevel {
                            column: self.covariate.clone(),
                            level: label.clone(),
                        })?;
                    m[(i, j)] = 1.0;
                }
                Ok(m)
            }
            ResolvedBasis::Regions { graph } => {
                let (codes, data_levels) = data.categorical(&self.covariate)?;
                let mut m = DMatrix::zeros(n, d);
                for i in 0..n {
                    let label = &data_levels[codes[i] as usize];
                    let j = graph
                        .regions()
                        .binary_search(label)
                        .map_err(|_| Error::UnseenLevel {
                            column: self.covariate.clone(),
                            level: label.clone(),
                        })?;
                    m[(i, j)] = 1.0;
                }
                Ok(m)
            }
        }
    }

    /// Quadratic penalty matrix; zero for linear learners.
    pub fn penalty(&self) -> DMatrix<f64> {
        let d = self.width();
        match &self.basis {
            ResolvedBasis::Linear { .. } => DMatrix::zeros(d, d),
            ResolvedBasis::PSpline { diff_order, .. } => {
                let dm = difference_matrix(d, *diff_order);
                dm.transpose() * dm
            }
            ResolvedBasis::Categories { .. } => DMatrix::identity(d, d),
            ResolvedBasis::Regions { graph } => graph.penalty(),
        }
    }

    /// Evaluate the learner contribution `X beta` on a dataset.
    pub fn evaluate(&self, coef: &[f64], data: &Dataset) -> Result<Vec<f64>> {
        if coef.len() != self.width() {
            return Err(Error::InvalidArgument(format!(
                "'{}' expects {} coefficients, got {}",
                self.name,
                self.width(),
                coef.len()
            )));
        }
        let design = self.design(data)?;
        let beta = DVector::from_column_slice(coef);
        Ok((&design * &beta).iter().cloned().collect())
    }
}

/// Forward difference matrix of the given order, `(d - order) x d`.
fn difference_matrix(d: usize, order: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(d, d);
    for _ in 0..order {
        let rows = m.nrows() - 1;
        let mut next = DMatrix::zeros(rows, d);
        for i in 0..rows {
            for j in 0..d {
                next[(i, j)] = m[(i + 1, j)] - m[(i, j)];
            }
        }
        m = next;
    }
    m
}

/// A learner with its design, penalty, and factorization bound to one
/// weight vector, ready for repeated gradient fits.
pub struct LearnerWorkspace {
    pub resolved: ResolvedLearner,
    design: DMatrix<f64>,
    xtw: DMatrix<f64>,
    xtwx: DMatrix<f64>,
    weights: Vec<f64>,
    pub lambda: f64,
    chol: Cholesky<f64, Dyn>,
}

/// Result of one penalized least-squares fit.
pub struct LearnerFit {
    pub coef: DVector<f64>,
    /// Weighted sum of squared residuals against the fitted values.
    pub ssr: f64,
}

pub fn build_workspace(
    resolved: &ResolvedLearner,
    data: &Dataset,
    weights: &[f64],
) -> Result<LearnerWorkspace> {
    if weights.len() != data.n() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} rows",
            weights.len(),
            data.n()
        )));
    }
    let design = resolved.design(data)?;
    let penalty = resolved.penalty();
    let mut xtw = design.transpose();
    for (i, &w) in weights.iter().enumerate() {
        let mut col = xtw.column_mut(i);
        col *= w;
    }
    let xtwx = &xtw * &design;
    let lambda = match resolved.df {
        None => 0.0,
        Some(target) => calibrate_lambda(&xtwx, &penalty, target, &resolved.name)?,
    };
    let system = &xtwx + penalty * lambda;
    let chol = Cholesky::new(system).ok_or_else(|| Error::SingularSystem(resolved.name.clone()))?;
    Ok(LearnerWorkspace {
        resolved: resolved.clone(),
        design,
        xtw,
        xtwx,
        weights: weights.to_vec(),
        lambda,
        chol,
    })
}

/// Trace of `(X'WX + e^loglam P)^-1 X'WX`, the effective dimension of the
/// penalized fit.
fn df_at(xtwx: &DMatrix<f64>, penalty: &DMatrix<f64>, loglam: f64) -> Option<f64> {
    let system = xtwx + penalty * loglam.exp();
    let chol = Cholesky::new(system)?;
    let s = chol.solve(xtwx);
    Some(s.trace())
}

/// Solve for the ridge amount that makes the hat-matrix trace hit
/// `target_df`, by bisection on log lambda.
pub fn calibrate_lambda(
    xtwx: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    target_df: f64,
    learner: &str,
) -> Result<f64> {
    let (lo, hi) = LOG_LAMBDA_RANGE;
    let fail = |reason: String| Error::Calibration {
        learner: learner.to_string(),
        reason,
    };
    let df_hi = df_at(xtwx, penalty, lo)
        .ok_or_else(|| fail("system singular at the smallest ridge".into()))?;
    let df_lo = df_at(xtwx, penalty, hi)
        .ok_or_else(|| fail("system singular at the largest ridge".into()))?;
    // df falls from (numerical rank) toward (penalty null dimension) as
    // lambda grows; the target must lie strictly inside.
    if !(target_df > df_lo + DF_TOLERANCE && target_df < df_hi - DF_TOLERANCE) {
        return Err(Error::DfInfeasible {
            learner: learner.to_string(),
            requested: target_df,
            lo: df_lo,
            hi: df_hi,
        });
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let df = df_at(xtwx, penalty, mid)
            .ok_or_else(|| fail(format!("system singular at log lambda {mid:.3}")))?;
        if (df - target_df).abs() <= DF_TOLERANCE {
            return Ok(mid.exp());
        }
        if df > target_df {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    Err(fail(format!(
        "bisection exhausted without reaching df {target_df}"
    )))
}

impl LearnerWorkspace {
    pub fn name(&self) -> &str {
        &self.resolved.name
    }

    pub fn width(&self) -> usize {
        self.resolved.width()
    }

    /// Effective degrees of freedom at the calibrated ridge amount.
    pub fn df(&self) -> f64 {
        self.chol.solve(&self.xtwx).trace()
    }

    /// Penalized weighted least squares of `u` on the design.
    pub fn fit(&self, u: &[f64]) -> LearnerFit {
        let uv = DVector::from_column_slice(u);
        let rhs = &self.xtw * &uv;
        let coef = self.chol.solve(&rhs);
        let fitted = &self.design * &coef;
        let mut ssr = 0.0;
        for i in 0..u.len() {
            let r = u[i] - fitted[i];
            ssr += self.weights[i] * r * r;
        }
        LearnerFit { coef, ssr }
    }

    /// `X c` on the training design; the boosting loop uses this for both
    /// live updates and replay so the two stay bitwise identical.
    pub fn apply_coef(&self, coef: &[f64]) -> Vec<f64> {
        let beta = DVector::from_column_slice(coef);
        (&self.design * &beta).iter().cloned().collect()
    }
}
