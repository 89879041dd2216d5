//! Response distributions for multi-parameter boosting.
//!
//! Each family exposes its log-likelihood, the gradient of the
//! log-likelihood with respect to every predictor on the link scale,
//! quantiles, and starting offsets. All distribution parameters are kept
//! on their natural scale; the link functions translate between the
//! additive predictor eta and the parameter.

mod beta;
mod gamma;
mod gaussian;
mod negbin;
mod studentt;

pub use beta::Beta;
pub use gamma::Gamma;
pub use gaussian::Gaussian;
pub use negbin::NegBin;
pub use studentt::StudentT;

use crate::error::{Error, Result};

/// Map between a distribution parameter and its additive predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Link {
    Identity,
    Log,
    Logit,
}

impl Link {
    /// Parameter value for a given predictor value (response function).
    pub fn to_param(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Log => eta.exp(),
            // Clamp away from the representable 0 and 1 so that extreme
            // predictors never leave the open unit interval.
            Link::Logit => (1.0 / (1.0 + (-eta).exp()))
                .clamp(f64::EPSILON, 1.0 - f64::EPSILON),
        }
    }

    /// Predictor value for a given parameter value.
    pub fn to_eta(self, theta: f64) -> f64 {
        match self {
            Link::Identity => theta,
            Link::Log => theta.ln(),
            Link::Logit => (theta / (1.0 - theta)).ln(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Log => "log",
            Link::Logit => "logit",
        }
    }
}

/// A response distribution with one additive predictor per parameter.
///
/// `theta` slices passed to the methods hold all parameters on their
/// natural scale, ordered as in `param_names` (location first).
pub trait Family: Send + Sync {
    fn name(&self) -> &'static str;
    fn param_names(&self) -> &'static [&'static str];
    fn links(&self) -> &'static [Link];

    /// Human-readable description of the response domain, used in errors.
    fn domain(&self) -> &'static str;

    /// Whether `y` is a valid response value.
    fn valid_response(&self, y: f64) -> bool;

    /// Log-density (or log-mass) at `y`.
    fn loglik(&self, y: f64, theta: &[f64]) -> f64;

    /// Derivative of `loglik` with respect to the predictor of parameter `k`,
    /// evaluated at `theta`.
    fn grad_eta(&self, k: usize, y: f64, theta: &[f64]) -> f64;

    /// Quantile of the response distribution, `0 < p < 1`.
    fn quantile(&self, p: f64, theta: &[f64]) -> Result<f64>;

    /// Cumulative distribution function at `y`.
    fn cdf(&self, y: f64, theta: &[f64]) -> Result<f64>;

    /// Closed-form starting offsets where available; `None` falls back to
    /// the numeric coordinate search.
    fn closed_form_offset(&self, _y: &[f64], _weights: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Moment-based starting point for the numeric offset search, on the
    /// predictor scale.
    fn offset_init(&self, y: &[f64], weights: &[f64]) -> Vec<f64>;

    fn param_count(&self) -> usize {
        self.param_names().len()
    }

    /// Apply the response functions to a predictor vector.
    fn theta_from_eta(&self, etas: &[f64]) -> Vec<f64> {
        self.links()
            .iter()
            .zip(etas)
            .map(|(l, &e)| l.to_param(e))
            .collect()
    }

    /// Draw one response by inverting the quantile function at `u`.
    fn sample(&self, u: f64, theta: &[f64]) -> Result<f64> {
        self.quantile(u, theta)
    }
}

/// Look up a family by its CLI-facing name.
pub fn family_by_name(name: &str) -> Result<Box<dyn Family>> {
    match name {
        "gaussian" => Ok(Box::new(Gaussian)),
        "gamma" => Ok(Box::new(Gamma)),
        "negbin" => Ok(Box::new(NegBin)),
        "beta" => Ok(Box::new(Beta)),
        "studentt" => Ok(Box::new(StudentT)),
        other => Err(Error::UnknownFamily(other.to_string())),
    }
}

pub const FAMILY_NAMES: &[&str] = &["gaussian", "gamma", "negbin", "beta", "studentt"];

/// Validate a response vector against the family domain.
pub fn check_response(family: &dyn Family, y: &[f64]) -> Result<()> {
    for (row, &v) in y.iter().enumerate() {
        if !family.valid_response(v) {
            return Err(Error::ResponseDomain {
                family: family.name(),
                domain: family.domain(),
                value: v,
                row,
            });
        }
    }
    Ok(())
}

/// Compensated sum; keeps weighted likelihood sums stable under permutation
/// of the observations.
pub(crate) fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub(crate) fn weighted_mean(y: &[f64], w: &[f64]) -> f64 {
    let sw = kahan_sum(w.iter().copied());
    kahan_sum(y.iter().zip(w).map(|(&a, &b)| a * b)) / sw
}

pub(crate) fn weighted_var(y: &[f64], w: &[f64]) -> f64 {
    let m = weighted_mean(y, w);
    let sw = kahan_sum(w.iter().copied());
    kahan_sum(y.iter().zip(w).map(|(&a, &b)| b * (a - m) * (a - m))) / sw
}

/// Starting offsets: predictor-scale constants maximizing the weighted
/// log-likelihood, found coordinate-wise.
///
/// Coordinates are cycled in parameter order until no coordinate moves by
/// more than 1e-8, each one maximized by a golden-section search on a
/// bracket expanded around the current point. Families with closed-form
/// maximizers bypass the search.
pub fn compute_offset(family: &dyn Family, y: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let k = family.param_count();
    if y.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "response has {} rows but weights {}",
            y.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::InvalidArgument(
            "weights must be finite and non-negative".into(),
        ));
    }
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    if positive < k {
        return Err(Error::InvalidArgument(format!(
            "need at least {} observations with positive weight, have {}",
            k, positive
        )));
    }
    check_response(family, y)?;

    if let Some(off) = family.closed_form_offset(y, weights) {
        return Ok(off);
    }

    let mut eta = family.offset_init(y, weights);
    debug_assert_eq!(eta.len(), k);

    // Flat likelihood tails (a Student-t degrees-of-freedom profile on
    // near-Gaussian data, say) have no interior maximizer; the search stops
    // at a fixed distance from the starting point instead of drifting.
    const SPAN: f64 = 40.0;
    let caps: Vec<(f64, f64)> = eta.iter().map(|&e| (e - SPAN, e + SPAN)).collect();

    const MAX_CYCLES: usize = 100;
    const TOL: f64 = 1e-8;
    for _ in 0..MAX_CYCLES {
        let mut max_change: f64 = 0.0;
        for j in 0..k {
            let old = eta[j];
            let score = |v: f64| {
                let mut e = eta.clone();
                e[j] = v;
                let theta = family.theta_from_eta(&e);
                kahan_sum(
                    y.iter()
                        .zip(weights)
                        .filter(|(_, &w)| w > 0.0)
                        .map(|(&yi, &wi)| wi * family.grad_eta(j, yi, &theta)),
                )
            };
            eta[j] = maximize_coordinate(&score, old, caps[j]);
            max_change = max_change.max((eta[j] - old).abs());
        }
        if max_change < TOL {
            let theta = family.theta_from_eta(&eta);
            if theta.iter().any(|t| !t.is_finite()) {
                return Err(Error::ParameterDomain(format!(
                    "offset search left the parameter space for {}",
                    family.name()
                )));
            }
            return Ok(eta);
        }
    }
    // Report the coordinate that moved last; the caller only needs a hint.
    Err(Error::OffsetNonConvergence {
        param: family.param_names()[k - 1],
        cycles: MAX_CYCLES,
        change: TOL,
    })
}

/// One-dimensional maximization via the score: walk uphill from `start`
/// with doubling steps until the score changes sign, then bisect the
/// bracket down to 1e-13.
///
/// Searching for a sign change of the derivative places the maximizer far
/// more sharply than comparing raised function values, which go flat within
/// machine precision in a root-width neighborhood of the maximum.
fn maximize_coordinate(score: &dyn Fn(f64) -> f64, start: f64, (lo_cap, hi_cap): (f64, f64)) -> f64 {
    let g0 = score(start);
    if g0 == 0.0 || !g0.is_finite() {
        return start;
    }
    let dir = g0.signum();
    let mut cur = start;
    let mut step = 0.25;
    loop {
        let next = (cur + dir * step).clamp(lo_cap, hi_cap);
        let gn = score(next);
        if gn == 0.0 {
            return next;
        }
        if gn.signum() != dir {
            // Bracketed: uphill end has positive score, downhill negative.
            let (mut a, mut b) = if dir > 0.0 { (cur, next) } else { (next, cur) };
            while b - a > 1e-13 {
                let m = 0.5 * (a + b);
                if score(m) > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return 0.5 * (a + b);
        }
        if next == lo_cap || next == hi_cap {
            return next;
        }
        cur = next;
        step *= 2.0;
    }
}
