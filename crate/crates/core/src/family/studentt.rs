use super::{weighted_mean, weighted_var, Family, Link};
use crate::error::Result;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::digamma;

/// Student t distribution in location-scale form: location `mu` (identity
/// link), scale `sigma` (log link), and degrees of freedom `df` (log link).
pub struct StudentT;

impl Family for StudentT {
    fn name(&self) -> &'static str {
        "studentt"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["mu", "sigma", "df"]
    }

    fn links(&self) -> &'static [Link] {
        &[Link::Identity, Link::Log, Link::Log]
    }

    fn domain(&self) -> &'static str {
        "all finite reals"
    }

    fn valid_response(&self, y: f64) -> bool {
        y.is_finite()
    }

    fn loglik(&self, y: f64, theta: &[f64]) -> f64 {
        let (mu, sigma, d) = (theta[0], theta[1], theta[2]);
        let z = (y - mu) / sigma;
        statrs::function::gamma::ln_gamma(0.5 * (d + 1.0))
            - statrs::function::gamma::ln_gamma(0.5 * d)
            - 0.5 * (d * std::f64::consts::PI).ln()
            - sigma.ln()
            - 0.5 * (d + 1.0) * (1.0 + z * z / d).ln()
    }

    fn grad_eta(&self, k: usize, y: f64, theta: &[f64]) -> f64 {
        let (mu, sigma, d) = (theta[0], theta[1], theta[2]);
        let z = (y - mu) / sigma;
        let denom = d + z * z;
        match k {
            0 => (d + 1.0) * z / (denom * sigma),
            1 => -1.0 + (d + 1.0) * z * z / denom,
            2 => {
                d * (0.5 * (digamma(0.5 * (d + 1.0)) - digamma(0.5 * d)) - 0.5 / d
                    - 0.5 * (1.0 + z * z / d).ln()
                    + 0.5 * (d + 1.0) * z * z / (d * denom))
            }
            _ => panic!("studentt has three parameters"),
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
        let sd = weighted_var(y, weights).sqrt().max(1e-6);
        // Start moderately heavy-tailed; the coordinate search moves from here.
        vec![m, (0.8 * sd).ln(), (5.0f64).ln()]
    }
}

fn dist(theta: &[f64]) -> Result<StudentsT> {
    StudentsT::new(theta[0], theta[1], theta[2]).map_err(|e| {
        crate::error::Error::ParameterDomain(format!(
            "studentt(mu={}, sigma={}, df={}): {e}",
            theta[0], theta[1], theta[2]
        ))
    })
}
