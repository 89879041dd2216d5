use super::{weighted_mean, weighted_var, Family, Link};
use crate::error::Result;
use statrs::distribution::ContinuousCDF;
use statrs::function::gamma::{digamma, ln_gamma};

/// Gamma distribution parameterized by mean `mu` and shape `sigma`, both on
/// log links, with Var(Y) = mu^2 / sigma. In shape/scale terms the shape is
/// `sigma` and the scale `mu / sigma`.
pub struct Gamma;

impl Family for Gamma {
    fn name(&self) -> &'static str {
        "gamma"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["mu", "sigma"]
    }

    fn links(&self) -> &'static [Link] {
        &[Link::Log, Link::Log]
    }

    fn domain(&self) -> &'static str {
        "strictly positive reals"
    }

    fn valid_response(&self, y: f64) -> bool {
        y.is_finite() && y > 0.0
    }

    fn loglik(&self, y: f64, theta: &[f64]) -> f64 {
        let (mu, sigma) = (theta[0], theta[1]);
        sigma * sigma.ln() - sigma * mu.ln() + (sigma - 1.0) * y.ln() - sigma * y / mu
            - ln_gamma(sigma)
    }

    fn grad_eta(&self, k: usize, y: f64, theta: &[f64]) -> f64 {
        let (mu, sigma) = (theta[0], theta[1]);
        match k {
            0 => sigma * (y - mu) / mu,
            1 => {
                sigma
                    * (sigma.ln() + 1.0 - mu.ln() + y.ln() - y / mu - digamma(sigma))
            }
            _ => panic!("gamma has two parameters"),
        }
    }

    fn quantile(&self, p: f64, theta: &[f64]) -> Result<f64> {
        let d = dist(theta)?;
        Ok(d.inverse_cdf(p))
    }

    fn cdf(&self, y: f64, theta: &[f64]) -> Result<f64> {
        let d = dist(theta)?;
        Ok(d.cdf(y))
    }

    fn offset_init(&self, y: &[f64], weights: &[f64]) -> Vec<f64> {
        let m = weighted_mean(y, weights);
        let v = weighted_var(y, weights).max(1e-12);
        // Method of moments: sigma = mu^2 / var.
        let sigma0 = (m * m / v).clamp(1e-3, 1e6);
        vec![m.ln(), sigma0.ln()]
    }
}

fn dist(theta: &[f64]) -> Result<statrs::distribution::Gamma> {
    statrs::distribution::Gamma::new(theta[1], theta[1] / theta[0]).map_err(|e| {
        crate::error::Error::ParameterDomain(format!(
            "gamma(mu={}, sigma={}): {e}",
            theta[0], theta[1]
        ))
    })
}
