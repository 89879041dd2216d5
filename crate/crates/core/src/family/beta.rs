use super::{weighted_mean, weighted_var, Family, Link};
use crate::error::Result;
use statrs::distribution::ContinuousCDF;
use statrs::function::gamma::{digamma, ln_gamma};

/// Beta distribution on the open unit interval, parameterized by mean `mu`
/// (logit link) and precision `phi` (log link), with
/// Var(Y) = mu (1 - mu) / (1 + phi). Shape parameters are `mu * phi` and
/// `(1 - mu) * phi`.
pub struct Beta;

impl Family for Beta {
    fn name(&self) -> &'static str {
        "beta"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["mu", "phi"]
    }

    fn links(&self) -> &'static [Link] {
        &[Link::Logit, Link::Log]
    }

    fn domain(&self) -> &'static str {
        "open unit interval (0, 1)"
    }

    fn valid_response(&self, y: f64) -> bool {
        y.is_finite() && y > 0.0 && y < 1.0
    }

    fn loglik(&self, y: f64, theta: &[f64]) -> f64 {
        let (mu, phi) = (theta[0], theta[1]);
        let a = mu * phi;
        let b = (1.0 - mu) * phi;
        ln_gamma(phi) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * y.ln()
            + (b - 1.0) * (1.0 - y).ln()
    }

    fn grad_eta(&self, k: usize, y: f64, theta: &[f64]) -> f64 {
        let (mu, phi) = (theta[0], theta[1]);
        let a = mu * phi;
        let b = (1.0 - mu) * phi;
        match k {
            0 => {
                // d mu / d eta = mu (1 - mu) under the logit link
                mu * (1.0 - mu)
                    * phi
                    * ((y / (1.0 - y)).ln() - digamma(a) + digamma(b))
            }
            1 => {
                phi * (digamma(phi) - mu * digamma(a) - (1.0 - mu) * digamma(b)
                    + mu * y.ln()
                    + (1.0 - mu) * (1.0 - y).ln())
            }
            _ => panic!("beta has two parameters"),
        }
    }

    fn quantile(&self, p: f64, theta: &[f64]) -> Result<f64> {
        let d = dist(theta)?;
        // The numeric inverse can round onto a boundary for extreme p even
        // though the true quantile is interior; keep the result in the open
        // interval so sampled responses stay in the response domain.
        Ok(d.inverse_cdf(p).clamp(f64::EPSILON, 1.0 - f64::EPSILON))
    }

    fn cdf(&self, y: f64, theta: &[f64]) -> Result<f64> {
        let d = dist(theta)?;
        Ok(d.cdf(y))
    }

    fn offset_init(&self, y: &[f64], weights: &[f64]) -> Vec<f64> {
        let m = weighted_mean(y, weights).clamp(1e-4, 1.0 - 1e-4);
        let v = weighted_var(y, weights).max(1e-8);
        let phi0 = (m * (1.0 - m) / v - 1.0).clamp(1e-2, 1e6);
        vec![Link::Logit.to_eta(m), phi0.ln()]
    }
}

fn dist(theta: &[f64]) -> Result<statrs::distribution::Beta> {
    let (mu, phi) = (theta[0], theta[1]);
    statrs::distribution::Beta::new(mu * phi, (1.0 - mu) * phi).map_err(|e| {
        crate::error::Error::ParameterDomain(format!("beta(mu={mu}, phi={phi}): {e}"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::testutil::fd_grad;
    use crate::family::check_response;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_gradient_vanishes_at_symmetric_point() {
        let g = Beta.grad_eta(0, 0.5, &[0.5, 3.0]);
        assert_abs_diff_eq!(g, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn precision_gradient_matches_finite_difference() {
        // y=0.3, mu=0.4, phi=2; frozen from the central-difference oracle.
        let g = Beta.grad_eta(1, 0.3, &[0.4, 2.0]);
        assert_abs_diff_eq!(g, 0.573_235_223_285_243_2, epsilon = 1e-12);
        let etas = [Link::Logit.to_eta(0.4), (2.0f64).ln()];
        assert_abs_diff_eq!(g, fd_grad(&Beta, 1, 0.3, &etas), epsilon = 1e-7);
    }

    #[test]
    fn density_integrates_to_one() {
        let th = [0.3, 4.0];
        let n = 20_000;
        let total: f64 = (0..n)
            .map(|i| {
                let y = (i as f64 + 0.5) / n as f64;
                Beta.loglik(y, &th).exp() / n as f64
            })
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn rejects_boundary_and_outside_values() {
        assert!(check_response(&Beta, &[0.0]).is_err());
        assert!(check_response(&Beta, &[1.0]).is_err());
        assert!(check_response(&Beta, &[-0.1]).is_err());
        assert!(check_response(&Beta, &[1.1]).is_err());
        assert!(check_response(&Beta, &[0.5, 0.999]).is_ok());
    }

    #[test]
    fn quantile_round_trips_through_cdf() {
        let th = [0.4, 5.0];
        for y in [0.05, 0.2, 0.5, 0.9] {
            let p = Beta.cdf(y, &th).unwrap();
            assert_abs_diff_eq!(Beta.quantile(p, &th).unwrap(), y, epsilon = 1e-8);
        }
    }
}
