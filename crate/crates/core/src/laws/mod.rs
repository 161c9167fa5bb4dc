//! Error and covariate distributions.
//!
//! [`ErrorLaw`] is the law of the AFT error `U` (density `g`, survival `S`,
//! hazard `g/S`, mean `μ_g`). [`DerivedLaw`] wraps it into the length-biased
//! law `u g(u)/μ_g` or the recurrence-time law `S(u)/μ_g`. [`CovariateLaw`]
//! carries the covariate density `h` and its exponential tilt.

mod covariate;
mod derived;
mod tabulated;

pub use covariate::CovariateLaw;
pub use derived::{DerivedKind, DerivedLaw, InverseCdfTable};
pub use tabulated::TabulatedDensity;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Quadrature;
use crate::rng::Stream;
use crate::special::{norm_quantile, norm_sf, INV_SQRT_2PI};

/// Survival values at or below this raise a singularity error in hazard-type
/// computations.
pub const HAZARD_FLOOR: f64 = 1e-12;

/// Upper truncation probability for integrals against a law.
pub const TAIL_PROBABILITY: f64 = 1e-9;

pub(crate) fn check_positive(u: f64) -> Result<()> {
    if u > 0.0 && u.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "evaluation point must be positive and finite, got {u}"
        )))
    }
}

/// Common surface of every positive-valued law in the crate.
pub trait Law: Send + Sync {
    /// Density at `u > 0` without argument checks.
    fn pdf(&self, u: f64) -> f64;
    /// Survival `P(U > u)` without argument checks.
    fn sf(&self, u: f64) -> f64;
    fn mean(&self) -> Result<f64>;
    fn quantile(&self, p: f64) -> Result<f64>;
    fn sample(&self, n: usize, rng: &mut Stream) -> Vec<f64>;

    fn cdf(&self, u: f64) -> f64 {
        1.0 - self.sf(u)
    }

    fn density(&self, u: f64) -> Result<f64> {
        check_positive(u)?;
        Ok(self.pdf(u))
    }

    fn survival(&self, u: f64) -> Result<f64> {
        check_positive(u)?;
        Ok(self.sf(u))
    }

    fn hazard(&self, u: f64) -> Result<f64> {
        check_positive(u)?;
        let s = self.sf(u);
        if s <= HAZARD_FLOOR {
            return Err(Error::Singularity(format!(
                "survival {s:e} at u = {u} is below the floor"
            )));
        }
        Ok(self.pdf(u) / s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "camelCase")]
pub enum ErrorLaw {
    #[serde(rename_all = "camelCase")]
    LogNormal {
        log_mean: f64,
        log_sd: f64,
    },
    Exponential {
        rate: f64,
    },
    Tabulated(TabulatedDensity),
}

impl ErrorLaw {
    pub fn log_normal(log_mean: f64, log_sd: f64) -> Result<Self> {
        let law = ErrorLaw::LogNormal { log_mean, log_sd };
        law.validate()?;
        Ok(law)
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        let law = ErrorLaw::Exponential { rate };
        law.validate()?;
        Ok(law)
    }

    pub fn tabulated(grid: Vec<f64>, density_values: Vec<f64>) -> Result<Self> {
        Ok(ErrorLaw::Tabulated(TabulatedDensity::new(
            grid,
            density_values,
        )?))
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorLaw::LogNormal { log_mean, log_sd } => {
                if !log_mean.is_finite() || !(log_sd > 0.0 && log_sd.is_finite()) {
                    return Err(Error::InvalidLaw(format!(
                        "log-normal needs finite logMean and positive logSd, got ({log_mean}, {log_sd})"
                    )));
                }
            }
            ErrorLaw::Exponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(Error::InvalidLaw(format!(
                        "exponential rate must be positive, got {rate}"
                    )));
                }
            }
            ErrorLaw::Tabulated(_) => {}
        }
        Ok(())
    }

    /// `d/du log g(u)`.
    pub fn log_pdf_derivative(&self, u: f64) -> f64 {
        match self {
            ErrorLaw::LogNormal { log_mean, log_sd } => {
                let z = (u.ln() - log_mean) / log_sd;
                -(1.0 + z / log_sd) / u
            }
            ErrorLaw::Exponential { rate } => -rate,
            ErrorLaw::Tabulated(t) => t.log_pdf_derivative(u),
        }
    }

    /// `∫_u^∞ v g(v) dv`.
    pub fn upper_first_moment(&self, u: f64) -> f64 {
        match *self {
            ErrorLaw::LogNormal { log_mean, log_sd } => {
                let mu = (log_mean + 0.5 * log_sd * log_sd).exp();
                mu * norm_sf((u.ln() - log_mean - log_sd * log_sd) / log_sd)
            }
            ErrorLaw::Exponential { rate } => (u + 1.0 / rate) * (-rate * u).exp(),
            ErrorLaw::Tabulated(ref t) => t.upper_first_moment(u),
        }
    }

    pub fn analytic_mean(&self) -> f64 {
        match *self {
            ErrorLaw::LogNormal { log_mean, log_sd } => (log_mean + 0.5 * log_sd * log_sd).exp(),
            ErrorLaw::Exponential { rate } => 1.0 / rate,
            ErrorLaw::Tabulated(ref t) => t.mean(),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            ErrorLaw::LogNormal { log_mean, log_sd } => {
                (2.0 * log_mean + 2.0 * log_sd * log_sd).exp()
            }
            ErrorLaw::Exponential { rate } => 2.0 / (rate * rate),
            ErrorLaw::Tabulated(ref t) => t.second_moment(),
        }
    }

    /// `φ(u) = 1 − u g(u)/S(u)`.
    pub fn phi(&self, u: f64) -> Result<f64> {
        Ok(1.0 - u * self.hazard(u)?)
    }

    /// Breakpoints for integrals against this law: zero, a ladder of
    /// quantiles, and the `1 − 1e-9` quantile as the truncation point.
    pub fn quadrature_nodes(&self) -> Vec<f64> {
        if let ErrorLaw::Tabulated(t) = self {
            let mut nodes = vec![0.0];
            nodes.extend(t.grid().iter().copied().filter(|&x| x > 0.0));
            return nodes;
        }
        let probs = [
            1e-9,
            1e-6,
            1e-3,
            0.01,
            0.05,
            0.15,
            0.3,
            0.5,
            0.7,
            0.85,
            0.95,
            0.99,
            0.999,
            1e-5,
            1e-7,
            TAIL_PROBABILITY,
        ];
        let mut nodes = vec![0.0];
        for (k, &p) in probs.iter().enumerate() {
            // the last three entries are upper-tail probabilities
            let q = if k >= 13 {
                self.quantile_unchecked(1.0 - p)
            } else {
                self.quantile_unchecked(p)
            };
            nodes.push(q);
        }
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        nodes
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        match *self {
            ErrorLaw::LogNormal { log_mean, log_sd } => {
                (log_mean + log_sd * norm_quantile(p)).exp()
            }
            ErrorLaw::Exponential { rate } => -(-p).ln_1p() / rate,
            ErrorLaw::Tabulated(ref t) => t.quantile(p),
        }
    }

    pub fn sample_one(&self, rng: &mut Stream) -> f64 {
        match *self {
            ErrorLaw::LogNormal { log_mean, log_sd } => {
                let z: f64 = StandardNormal.sample(rng);
                (log_mean + log_sd * z).exp()
            }
            ErrorLaw::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            ErrorLaw::Tabulated(ref t) => t.quantile(rng.random::<f64>()),
        }
    }

    /// Mean by quadrature of `u g(u)`, independent of the closed forms.
    pub fn mean_by_quadrature(&self) -> Result<f64> {
        Quadrature::default().integrate_to_infinity(&|u| u * self.pdf(u), &self.quadrature_nodes())
    }
}

impl Law for ErrorLaw {
    fn pdf(&self, u: f64) -> f64 {
        match *self {
            ErrorLaw::LogNormal { log_mean, log_sd } => {
                if u <= 0.0 {
                    return 0.0;
                }
                let z = (u.ln() - log_mean) / log_sd;
                INV_SQRT_2PI * (-0.5 * z * z).exp() / (u * log_sd)
            }
            ErrorLaw::Exponential { rate } => rate * (-rate * u).exp(),
            ErrorLaw::Tabulated(ref t) => t.pdf(u),
        }
    }

    fn sf(&self, u: f64) -> f64 {
        match *self {
            ErrorLaw::LogNormal { log_mean, log_sd } => {
                if u <= 0.0 {
                    return 1.0;
                }
                norm_sf((u.ln() - log_mean) / log_sd)
            }
            ErrorLaw::Exponential { rate } => (-rate * u).exp(),
            ErrorLaw::Tabulated(ref t) => t.sf(u),
        }
    }

    fn mean(&self) -> Result<f64> {
        Ok(self.analytic_mean())
    }

    fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "quantile level must lie in (0, 1), got {p}"
            )));
        }
        Ok(self.quantile_unchecked(p))
    }

    fn sample(&self, n: usize, rng: &mut Stream) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

/// `φ(u) = 1 − u λ(u)` for an error law.
pub fn phi(law: &ErrorLaw, u: f64) -> Result<f64> {
    law.phi(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn lognormal_pdf_oracle(u: f64, m: f64, s: f64) -> f64 {
        let z = (u.ln() - m) / s;
        (-(z * z) / 2.0).exp() / (u * s * (2.0 * std::f64::consts::PI).sqrt())
    }

    #[test]
    fn lognormal_reference_values() {
        let law = ErrorLaw::log_normal(0.0, 1.0).unwrap();
        assert!((law.density(1.0).unwrap() - lognormal_pdf_oracle(1.0, 0.0, 1.0)).abs() < 1e-15);
        assert!((law.density(1.0).unwrap() - 0.398942).abs() < 1e-6);
        assert!((law.survival(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((law.hazard(1.0).unwrap() - 0.797885).abs() < 1e-6);
        assert!((law.phi(1.0).unwrap() - 0.202115).abs() < 1e-6);
        assert!((law.mean().unwrap() - 1.648721).abs() < 1e-6);
        assert!((law.mean_by_quadrature().unwrap() - 0.5f64.exp()).abs() < 1e-7);
    }

    #[test]
    fn exponential_reference_values() {
        let law = ErrorLaw::exponential(1.0).unwrap();
        assert!((law.density(1e-4).unwrap() - 1.0).abs() < 1e-3);
        for u in [0.1, 1.0, 7.5] {
            assert!((law.hazard(u).unwrap() - 1.0).abs() < 1e-12);
            assert!((law.phi(u).unwrap() - (1.0 - u)).abs() < 1e-12);
        }
        let law = ErrorLaw::exponential(2.5).unwrap();
        assert!((law.hazard(3.0).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn phi_tends_to_one_at_origin() {
        let law = ErrorLaw::log_normal(0.0, 1.0).unwrap();
        assert!((law.phi(1e-8).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn domain_and_singularity_errors() {
        let law = ErrorLaw::log_normal(0.0, 1.0).unwrap();
        assert!(matches!(law.density(0.0), Err(Error::Domain(_))));
        assert!(matches!(law.density(-1.0), Err(Error::Domain(_))));
        assert!(matches!(law.hazard(1e6), Err(Error::Singularity(_))));
        assert!(ErrorLaw::log_normal(0.0, 0.0).is_err());
        assert!(ErrorLaw::exponential(-1.0).is_err());
    }

    #[test]
    fn quantiles_invert_survival() {
        let law = ErrorLaw::log_normal(0.3, 0.7).unwrap();
        for p in [0.01, 0.3, 0.5, 0.9, 0.999] {
            let q = law.quantile(p).unwrap();
            assert!((law.cdf(q) - p).abs() < 1e-9);
        }
        assert!(law.quantile(1.0).is_err());
    }

    #[test]
    fn samples_are_deterministic() {
        let law = ErrorLaw::log_normal(0.0, 1.0).unwrap();
        let a = law.sample(8, &mut stream(3, 0));
        let b = law.sample(8, &mut stream(3, 0));
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn json_shape() {
        let law: ErrorLaw =
            serde_json::from_str(r#"{"family":"logNormal","logMean":0.0,"logSd":1.0}"#).unwrap();
        assert_eq!(
            law,
            ErrorLaw::LogNormal {
                log_mean: 0.0,
                log_sd: 1.0
            }
        );
        let law: ErrorLaw = serde_json::from_str(r#"{"family":"exponential","rate":2.0}"#).unwrap();
        assert_eq!(law, ErrorLaw::Exponential { rate: 2.0 });
    }
}
