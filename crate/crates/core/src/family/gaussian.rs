use super::{weighted_mean, weighted_var, Family, Link};
use crate::error::Result;
use statrs::distribution::{ContinuousCDF, Normal};

/// Normal distribution with mean `mu` (identity link) and standard
/// deviation `sigma` (log link).
pub struct Gaussian;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

// Floor for a degenerate scale estimate (all responses equal); keeps the
// starting offsets finite instead of failing the whole fit.
const SIGMA_FLOOR: f64 = 1e-10;

impl Family for Gaussian {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["mu", "sigma"]
    }

    fn links(&self) -> &'static [Link] {
        &[Link::Identity, Link::Log]
    }

    fn domain(&self) -> &'static str {
        "all finite reals"
    }

    fn valid_response(&self, y: f64) -> bool {
        y.is_finite()
    }

    fn loglik(&self, y: f64, theta: &[f64]) -> f64 {
        let (mu, sigma) = (theta[0], theta[1]);
        let z = (y - mu) / sigma;
        -LN_SQRT_2PI - sigma.ln() - 0.5 * z * z
    }

    fn grad_eta(&self, k: usize, y: f64, theta: &[f64]) -> f64 {
        let (mu, sigma) = (theta[0], theta[1]);
        let r = y - mu;
        match k {
            0 => r / (sigma * sigma),
            1 => -1.0 + r * r / (sigma * sigma),
            _ => panic!("gaussian has two parameters"),
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

    fn closed_form_offset(&self, y: &[f64], weights: &[f64]) -> Option<Vec<f64>> {
        let mean = weighted_mean(y, weights);
        let var = weighted_var(y, weights);
        let sd = var.sqrt();
        let sd = if sd < SIGMA_FLOOR {
            eprintln!(
                "warning: response is (nearly) constant, flooring the scale offset at {SIGMA_FLOOR:e}"
            );
            SIGMA_FLOOR
        } else {
            sd
        };
        Some(vec![mean, sd.ln()])
    }

    fn offset_init(&self, y: &[f64], weights: &[f64]) -> Vec<f64> {
        // Unused: the closed form always applies.
        vec![
            weighted_mean(y, weights),
            weighted_var(y, weights).sqrt().max(SIGMA_FLOOR).ln(),
        ]
    }
}

fn dist(theta: &[f64]) -> Result<Normal> {
    Normal::new(theta[0], theta[1]).map_err(|e| {
        crate::error::Error::ParameterDomain(format!("gaussian(mu={}, sigma={}): {e}", theta[0], theta[1]))
    })
}
