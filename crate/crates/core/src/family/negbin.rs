use super::{weighted_mean, weighted_var, Family, Link};
use crate::error::Result;
use statrs::distribution::{DiscreteCDF, NegativeBinomial};
use statrs::function::gamma::{digamma, ln_gamma};

/// Negative binomial distribution for overdispersed counts, parameterized by
/// mean `mu` and dispersion `sigma` (the size), both on log links, with
/// Var(Y) = mu + mu^2 / sigma.
pub struct NegBin;

impl Family for NegBin {
    fn name(&self) -> &'static str {
        "negbin"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["mu", "sigma"]
    }

    fn links(&self) -> &'static [Link] {
        &[Link::Log, Link::Log]
    }

    fn domain(&self) -> &'static str {
        "non-negative integers"
    }

    fn valid_response(&self, y: f64) -> bool {
        y.is_finite() && y >= 0.0 && y.fract() == 0.0
    }

    fn loglik(&self, y: f64, theta: &[f64]) -> f64 {
        let (mu, sigma) = (theta[0], theta[1]);
        ln_gamma(y + sigma) - ln_gamma(sigma) - ln_gamma(y + 1.0) + sigma * sigma.ln()
            + y * mu.ln()
            - (sigma + y) * (sigma + mu).ln()
    }

    fn grad_eta(&self, k: usize, y: f64, theta: &[f64]) -> f64 {
        let (mu, sigma) = (theta[0], theta[1]);
        match k {
            0 => y - mu * (sigma + y) / (sigma + mu),
            1 => {
                sigma
                    * (digamma(y + sigma) - digamma(sigma) + sigma.ln() + 1.0
                        - (sigma + mu).ln()
                        - (sigma + y) / (sigma + mu))
            }
            _ => panic!("negbin has two parameters"),
        }
    }

    fn quantile(&self, p: f64, theta: &[f64]) -> Result<f64> {
        let d = dist(theta)?;
        Ok(d.inverse_cdf(p) as f64)
    }

    fn cdf(&self, y: f64, theta: &[f64]) -> Result<f64> {
        let d = dist(theta)?;
        Ok(d.cdf(y.max(0.0) as u64))
    }

    fn offset_init(&self, y: &[f64], weights: &[f64]) -> Vec<f64> {
        let m = weighted_mean(y, weights).max(1e-3);
        let v = weighted_var(y, weights);
        // Moment estimate of the size from var = mu + mu^2/sigma; excess
        // variance near zero means a nearly-Poisson start with large size.
        let excess = (v - m).max(m * m / 1e4);
        let sigma0 = (m * m / excess).clamp(1e-3, 1e4);
        vec![m.ln(), sigma0.ln()]
    }
}

fn dist(theta: &[f64]) -> Result<NegativeBinomial> {
    let (mu, sigma) = (theta[0], theta[1]);
    NegativeBinomial::new(sigma, sigma / (sigma + mu)).map_err(|e| {
        crate::error::Error::ParameterDomain(format!("negbin(mu={mu}, sigma={sigma}): {e}"))
    })
}
