//! Cohort generation under the four observation schemes.
//!
//! Each scenario seed drives four independent streams (covariates, errors,
//! the uniform split `V`, censoring), so a length-biased cohort and a
//! recurrence-time cohort built from the same seed share `Z̃` and `T_LB`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{CovariateLaw, DerivedLaw, ErrorLaw, Law};
use crate::rng::{derive_seed, stream};

const COVARIATE_STREAM: u64 = 0;
const ERROR_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const CENSOR_STREAM: u64 = 3;

const PILOT_SIZE: usize = 20_000;
const PILOT_SEED: u64 = 0x5eed_c0de;

/// Default compact parameter box half-width.
pub const DEFAULT_BOX: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ObservationScheme {
    Underlying,
    LengthBiased,
    ForwardRecurrence,
    BackwardRecurrence,
}

impl ObservationScheme {
    pub fn is_censorable(self) -> bool {
        matches!(
            self,
            ObservationScheme::LengthBiased | ObservationScheme::ForwardRecurrence
        )
    }

    pub fn is_recurrence(self) -> bool {
        matches!(
            self,
            ObservationScheme::ForwardRecurrence | ObservationScheme::BackwardRecurrence
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "underlying" => Ok(Self::Underlying),
            "lengthbiased" => Ok(Self::LengthBiased),
            "forwardrecurrence" | "forward" => Ok(Self::ForwardRecurrence),
            "backwardrecurrence" | "backward" | "currentduration" => Ok(Self::BackwardRecurrence),
            _ => Err(Error::Config(format!("unknown observation scheme '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubjectRecord {
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
    pub scheme: ObservationScheme,
}

impl SubjectRecord {
    pub fn new(
        time: f64,
        event: bool,
        covariates: Vec<f64>,
        scheme: ObservationScheme,
    ) -> Result<Self> {
        if !(time > 0.0 && time.is_finite()) {
            return Err(Error::Domain(format!(
                "observed time must be positive and finite, got {time}"
            )));
        }
        if covariates.iter().any(|z| !z.is_finite()) {
            return Err(Error::Domain("covariates must be finite".into()));
        }
        Ok(Self {
            time,
            event,
            covariates,
            scheme,
        })
    }
}

/// Censoring time law, either explicit or an exponential whose rate is
/// tuned to a target censoring fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CensoringSpec {
    Law(ErrorLaw),
    TargetFraction(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scenario {
    pub theta0: Vec<f64>,
    pub error_law: ErrorLaw,
    pub covariate_law: CovariateLaw,
    pub scheme: ObservationScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub censoring: Option<CensoringSpec>,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.error_law.validate()?;
        self.covariate_law.validate()?;
        if self.theta0.len() != self.covariate_law.dimension() {
            return Err(Error::Config(format!(
                "theta0 has length {} but covariates have dimension {}",
                self.theta0.len(),
                self.covariate_law.dimension()
            )));
        }
        if self.theta0.iter().any(|t| !(t.abs() < DEFAULT_BOX)) {
            return Err(Error::Config(
                "theta0 must lie inside the parameter box".into(),
            ));
        }
        if self.n == 0 {
            return Err(Error::Config("cohort size must be at least 1".into()));
        }
        if let Some(spec) = &self.censoring {
            if !self.scheme.is_censorable() {
                return Err(Error::Config(format!(
                    "scheme {:?} does not admit censoring",
                    self.scheme
                )));
            }
            match spec {
                CensoringSpec::Law(law) => law.validate()?,
                CensoringSpec::TargetFraction(f) => {
                    if !(*f > 0.0 && *f < 1.0) {
                        return Err(Error::Config(format!(
                            "target censoring fraction must lie in (0, 1), got {f}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Replaces a target-fraction censoring spec by the explicit law it
    /// resolves to, so repeated generation skips the calibration step.
    pub fn resolved(&self) -> Result<Scenario> {
        self.validate()?;
        let mut out = self.clone();
        if let Some(CensoringSpec::TargetFraction(f)) = self.censoring {
            out.censoring = Some(CensoringSpec::Law(calibrate_censoring(self, f)?));
        }
        Ok(out)
    }
}

/// Uncensored times `T = e^{θ'Z} U` (or the biased analogues) with covariates.
fn latent_times(s: &Scenario) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = s.n;
    let mut z_rng = stream(s.seed, COVARIATE_STREAM);
    let mut u_rng = stream(s.seed, ERROR_STREAM);
    let (z, u) = match s.scheme {
        ObservationScheme::Underlying => {
            let z = s.covariate_law.sample(n, &mut z_rng);
            let u = s.error_law.sample(n, &mut u_rng);
            (z, u)
        }
        _ => {
            let z = s.covariate_law.tilted_sample(&s.theta0, n, &mut z_rng)?;
            let lb = DerivedLaw::length_biased(s.error_law.clone())?;
            let u = lb.sample(n, &mut u_rng);
            (z, u)
        }
    };
    let mut t: Vec<f64> = z
        .iter()
        .zip(&u)
        .map(|(zi, ui)| {
            let lp: f64 = zi.iter().zip(&s.theta0).map(|(a, b)| a * b).sum();
            lp.exp() * ui
        })
        .collect();
    if s.scheme.is_recurrence() {
        let mut v_rng = stream(s.seed, SPLIT_STREAM);
        for ti in t.iter_mut() {
            // V in (0, 1); the open interval keeps times strictly positive
            let v: f64 = 1.0 - v_rng.random::<f64>();
            *ti *= v;
        }
    }
    Ok((z, t))
}

pub fn generate_cohort(s: &Scenario) -> Result<Vec<SubjectRecord>> {
    let s = s.resolved()?;
    let (z, t) = latent_times(&s)?;
    let censor = match &s.censoring {
        Some(CensoringSpec::Law(law)) => Some(law.sample(s.n, &mut stream(s.seed, CENSOR_STREAM))),
        _ => None,
    };
    Ok(z.into_iter()
        .zip(t)
        .enumerate()
        .map(|(i, (covariates, ti))| {
            let (time, event) = match &censor {
                Some(c) if c[i] < ti => (c[i], false),
                _ => (ti, true),
            };
            SubjectRecord {
                time,
                event,
                covariates,
                scheme: s.scheme,
            }
        })
        .collect())
}

/// Exponential censoring law whose expected censoring fraction on a pilot
/// cohort equals `target`. The pilot depends on the scenario laws only.
pub fn calibrate_censoring(s: &Scenario, target: f64) -> Result<ErrorLaw> {
    let mut pilot = s.clone();
    pilot.censoring = None;
    pilot.n = PILOT_SIZE;
    pilot.seed = derive_seed(PILOT_SEED, 0);
    let (_, t) = latent_times(&pilot)?;
    // P(C < T) for C ~ Exp(r) averaged over the pilot, increasing in r
    let fraction =
        |rate: f64| t.iter().map(|ti| -(-rate * ti).exp_m1()).sum::<f64>() / t.len() as f64;
    let mut lo = 1e-12;
    let mut hi = 1.0;
    while fraction(hi) < target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Config(
                "could not reach the target censoring fraction".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if fraction(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
    }
    ErrorLaw::exponential((lo * hi).sqrt())
}

/// `1 − mean(δ)`.
pub fn censoring_fraction(records: &[SubjectRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records".into()));
    }
    let events = records.iter().filter(|r| r.event).count();
    Ok(1.0 - events as f64 / records.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(scheme: ObservationScheme, theta: f64) -> Scenario {
        Scenario {
            theta0: vec![theta],
            error_law: ErrorLaw::log_normal(0.0, 1.0).unwrap(),
            covariate_law: CovariateLaw::uniform(-1.0, 1.0).unwrap(),
            scheme,
            censoring: None,
            n: 200,
            seed: 17,
        }
    }

    #[test]
    fn recurrence_times_split_length_biased_times() {
        let lb = generate_cohort(&scenario(ObservationScheme::LengthBiased, 1.0)).unwrap();
        let fw = generate_cohort(&scenario(ObservationScheme::ForwardRecurrence, 1.0)).unwrap();
        for (a, b) in lb.iter().zip(&fw) {
            assert_eq!(a.covariates, b.covariates);
            assert!(b.time <= a.time);
        }
    }

    #[test]
    fn backward_recurrence_is_uncensored() {
        let c = generate_cohort(&scenario(ObservationScheme::BackwardRecurrence, 0.5)).unwrap();
        assert!(c.iter().all(|r| r.event && r.time > 0.0));
        assert_eq!(censoring_fraction(&c).unwrap(), 0.0);
    }

    #[test]
    fn censoring_rules() {
        let mut s = scenario(ObservationScheme::BackwardRecurrence, 1.0);
        s.censoring = Some(CensoringSpec::TargetFraction(0.25));
        assert!(matches!(generate_cohort(&s), Err(Error::Config(_))));
        s.scheme = ObservationScheme::ForwardRecurrence;
        s.n = 4000;
        let c = generate_cohort(&s).unwrap();
        let f = censoring_fraction(&c).unwrap();
        assert!((f - 0.25).abs() < 0.03, "fraction {f}");
    }

    #[test]
    fn censoring_fraction_values() {
        let r = |e| {
            SubjectRecord::new(1.0, e, vec![0.0], ObservationScheme::ForwardRecurrence).unwrap()
        };
        assert_eq!(censoring_fraction(&[r(true), r(true)]).unwrap(), 0.0);
        assert_eq!(censoring_fraction(&[r(false), r(false)]).unwrap(), 1.0);
        assert_eq!(censoring_fraction(&[r(true), r(false)]).unwrap(), 0.5);
    }

    #[test]
    fn deterministic() {
        let s = scenario(ObservationScheme::ForwardRecurrence, 1.0);
        assert_eq!(generate_cohort(&s).unwrap(), generate_cohort(&s).unwrap());
    }

    #[test]
    fn scenario_json() {
        let s: Scenario = serde_json::from_str(
            r#"{"theta0":[1.0],"errorLaw":{"family":"logNormal","logMean":0,"logSd":1},
                "covariateLaw":{"family":"uniformBox","lower":[-1],"upper":[1]},
                "scheme":"backwardRecurrence","n":5,"seed":3}"#,
        )
        .unwrap();
        assert_eq!(s.n, 5);
        assert_eq!(s.scheme, ObservationScheme::BackwardRecurrence);
        let s: Scenario = serde_json::from_str(
            r#"{"theta0":[1.0],"errorLaw":{"family":"exponential","rate":1},
                "covariateLaw":{"family":"uniformBox","lower":[-1],"upper":[1]},
                "scheme":"forwardRecurrence","censoring":{"targetFraction":0.3},"n":5}"#,
        )
        .unwrap();
        assert_eq!(s.censoring, Some(CensoringSpec::TargetFraction(0.3)));
    }
}
