//! Monte Carlo study harness: replicate loops over scenarios, bias, SE and
//! coverage aggregation, and table rendering.
//!
//! Each replicate draws one cohort and fits every requested method to it.
//! Replicate `r` of a scenario uses seed `derive_seed(derive_seed(master,
//! scenario.seed), r)`, so results do not depend on scenario order or on the
//! thread count.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit, FitOptions, Method};
use crate::laws::CovariateLaw;
use crate::rng::derive_seed;
use crate::sampling::{generate_cohort, ObservationScheme, Scenario};

/// Fraction of failed replicates above which a result is unreliable.
pub const UNRELIABLE_FRACTION: f64 = 0.05;

const TABLE1: &str = include_str!("../configs/table1.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StudyScenario {
    /// Row key in rendered tables; defaults to the true coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    /// Covariate law handed to the known-h fit in place of the true one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub misspecified_analysis_law: Option<CovariateLaw>,
}

impl StudyScenario {
    pub fn key(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            let parts: Vec<String> = self
                .scenario
                .theta0
                .iter()
                .map(|t| format!("{t}"))
                .collect();
            format!("theta0={}", parts.join(","))
        })
    }

    fn analysis_law(&self) -> &CovariateLaw {
        self.misspecified_analysis_law
            .as_ref()
            .unwrap_or(&self.scenario.covariate_law)
    }
}

fn default_replicates() -> usize {
    1000
}

fn default_level() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", try_from = "RawStudyConfig")]
pub struct StudyConfig {
    pub scenarios: Vec<StudyScenario>,
    pub replicates: usize,
    pub ci_level: f64,
    pub master_seed: u64,
    pub fit: FitOptions,
}

/// Accepts either a `scenarios` list or a single `scenario` with top-level
/// `methods` and `misspecifiedAnalysisLaw`.
#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawStudyConfig {
    #[serde(default)]
    scenarios: Option<Vec<StudyScenario>>,
    #[serde(default)]
    scenario: Option<Scenario>,
    #[serde(default)]
    methods: Option<Vec<Method>>,
    #[serde(default)]
    misspecified_analysis_law: Option<CovariateLaw>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default = "default_replicates")]
    replicates: usize,
    #[serde(default = "default_level")]
    ci_level: f64,
    #[serde(default)]
    master_seed: u64,
    #[serde(default)]
    fit: FitOptions,
}

impl TryFrom<RawStudyConfig> for StudyConfig {
    type Error = String;

    fn try_from(raw: RawStudyConfig) -> std::result::Result<Self, String> {
        let scenarios = match (raw.scenarios, raw.scenario) {
            (Some(list), None) => list,
            (None, Some(scenario)) => vec![StudyScenario {
                label: raw.label,
                scenario,
                methods: raw.methods.unwrap_or_else(|| vec![Method::NaiveProfile]),
                misspecified_analysis_law: raw.misspecified_analysis_law,
            }],
            (Some(_), Some(_)) => {
                return Err("give either `scenarios` or `scenario`, not both".into())
            }
            (None, None) => return Err("study config needs `scenarios` or `scenario`".into()),
        };
        Ok(StudyConfig {
            scenarios,
            replicates: raw.replicates,
            ci_level: raw.ci_level,
            master_seed: raw.master_seed,
            fit: raw.fit,
        })
    }
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: StudyConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The bundled study: three coefficients at three sample sizes under a
    /// correct Uniform(−1, 1) covariate law, then two misspecified covariate
    /// laws Uniform(x, 1) analysed as if Uniform(−1, 1).
    pub fn table1() -> Self {
        Self::from_json(TABLE1).expect("bundled study config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Config(format!(
                "ciLevel must lie in (0, 1), got {}",
                self.ci_level
            )));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("study has no scenarios".into()));
        }
        for s in &self.scenarios {
            s.scenario.validate()?;
            if s.methods.is_empty() {
                return Err(Error::Config(format!(
                    "scenario {} lists no methods",
                    s.key()
                )));
            }
            let biased = s.scenario.scheme != ObservationScheme::Underlying;
            for m in &s.methods {
                if *m != Method::NaiveProfile && !biased {
                    return Err(Error::Config(format!(
                        "method {} needs a biased observation scheme in scenario {}",
                        m.label(),
                        s.key()
                    )));
                }
            }
            if let Some(law) = &s.misspecified_analysis_law {
                law.validate()?;
                if law.dimension() != s.scenario.theta0.len() {
                    return Err(Error::Config(format!(
                        "analysis law dimension mismatch in scenario {}",
                        s.key()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioResult {
    pub label: String,
    pub theta0: Vec<f64>,
    pub n: usize,
    pub method: Method,
    pub replicates: usize,
    pub bias: Vec<f64>,
    pub bias_mc_error: Vec<f64>,
    /// Sample SD of the estimates.
    pub empirical_se: Vec<f64>,
    pub mean_estimated_se: Vec<f64>,
    /// Share of converged replicates whose interval covers every coordinate
    /// of the truth; absent for methods without intervals.
    pub coverage: Option<f64>,
    pub failures: usize,
    pub unreliable: bool,
}

#[derive(Clone, Debug)]
enum Outcome {
    Fitted {
        theta: Vec<f64>,
        se: Option<Vec<f64>>,
        covered: Option<bool>,
    },
    Failed,
}

fn replicate(s: &StudyScenario, seed: u64, opts: &FitOptions) -> Vec<Outcome> {
    let mut scenario = s.scenario.clone();
    scenario.seed = seed;
    let cohort = match generate_cohort(&scenario) {
        Ok(c) => c,
        Err(_) => return vec![Outcome::Failed; s.methods.len()],
    };
    s.methods
        .iter()
        .map(|&m| match fit(m, &cohort, Some(s.analysis_law()), opts) {
            Ok(est) if est.converged => {
                let covered = est.ci.as_ref().map(|ci| {
                    ci.iter()
                        .zip(&s.scenario.theta0)
                        .all(|(c, t)| c[0] <= *t && *t <= c[1])
                });
                Outcome::Fitted {
                    theta: est.theta_hat,
                    se: est.se,
                    covered,
                }
            }
            _ => Outcome::Failed,
        })
        .collect()
}

fn aggregate(s: &StudyScenario, method: Method, outcomes: &[&Outcome]) -> ScenarioResult {
    let p = s.scenario.theta0.len();
    let fitted: Vec<_> = outcomes
        .iter()
        .filter_map(|o| match o {
            Outcome::Fitted { theta, se, covered } => Some((theta, se, covered)),
            Outcome::Failed => None,
        })
        .collect();
    let failures = outcomes.len() - fitted.len();
    let k = fitted.len() as f64;
    let mut bias = vec![f64::NAN; p];
    let mut sd = vec![f64::NAN; p];
    let mut mean_se = vec![f64::NAN; p];
    let mut mc = vec![f64::NAN; p];
    if !fitted.is_empty() {
        for j in 0..p {
            let mean = fitted.iter().map(|f| f.0[j]).sum::<f64>() / k;
            bias[j] = mean - s.scenario.theta0[j];
            if fitted.len() > 1 {
                let var = fitted.iter().map(|f| (f.0[j] - mean).powi(2)).sum::<f64>() / (k - 1.0);
                sd[j] = var.sqrt();
                mc[j] = sd[j] / k.sqrt();
            }
            let ses: Vec<f64> = fitted
                .iter()
                .filter_map(|f| f.1.as_ref().map(|v| v[j]))
                .collect();
            if !ses.is_empty() {
                mean_se[j] = ses.iter().sum::<f64>() / ses.len() as f64;
            }
        }
    }
    let coverage = if method.has_interval() && !fitted.is_empty() {
        let hits = fitted.iter().filter(|f| *f.2 == Some(true)).count();
        Some(hits as f64 / k)
    } else {
        None
    };
    ScenarioResult {
        label: s.key(),
        theta0: s.scenario.theta0.clone(),
        n: s.scenario.n,
        method,
        replicates: outcomes.len(),
        bias,
        bias_mc_error: mc,
        empirical_se: sd,
        mean_estimated_se: mean_se,
        coverage,
        failures,
        unreliable: failures as f64 > UNRELIABLE_FRACTION * outcomes.len() as f64,
    }
}

/// Runs every scenario × method and returns results in config order.
pub fn run_study(cfg: &StudyConfig) -> Result<Vec<ScenarioResult>> {
    cfg.validate()?;
    let mut opts = cfg.fit;
    opts.level = cfg.ci_level;
    let mut results = Vec::new();
    for s in &cfg.scenarios {
        let mut resolved = s.clone();
        resolved.scenario = s.scenario.resolved()?;
        let base = derive_seed(cfg.master_seed, s.scenario.seed);
        let outcomes: Vec<Vec<Outcome>> = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| replicate(&resolved, derive_seed(base, r), &opts))
            .collect();
        for (k, &m) in s.methods.iter().enumerate() {
            let column: Vec<&Outcome> = outcomes.iter().map(|o| &o[k]).collect();
            results.push(aggregate(s, m, &column));
        }
    }
    Ok(results)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedTable {
    pub text: String,
    pub csv: String,
}

fn fmt3(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        "-".into()
    }
}

/// Text table with one row per scenario × method ×
/// coordinate, and a CSV with shortest round-trip floats.
pub fn table_render(results: &[ScenarioResult]) -> Result<RenderedTable> {
    if results.is_empty() {
        return Err(Error::Config("no results to render".into()));
    }
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<14} {:>5} {:<10} {:>8} {:>7} {:>7} {:>6} {:>8}",
        "scenario", "n", "method", "bias", "SE", "estSE", "CP(%)", "failed"
    );
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record([
        "scenario",
        "n",
        "method",
        "coordinate",
        "bias",
        "bias_mc_error",
        "empirical_se",
        "mean_estimated_se",
        "coverage",
        "failures",
        "replicates",
        "unreliable",
    ])?;
    for r in results {
        for j in 0..r.bias.len() {
            let cp = r
                .coverage
                .map(|c| format!("{:.1}", 100.0 * c))
                .unwrap_or_default();
            let mark = if r.unreliable { " *" } else { "" };
            let coord = if r.bias.len() > 1 {
                format!("[{}]", j + 1)
            } else {
                String::new()
            };
            let _ = writeln!(
                text,
                "{:<14} {:>5} {:<10} {:>8} {:>7} {:>7} {:>6} {:>8}{mark}",
                format!("{}{coord}", r.label),
                r.n,
                r.method.label(),
                fmt3(r.bias[j]),
                fmt3(r.empirical_se[j]),
                fmt3(r.mean_estimated_se[j]),
                cp,
                r.failures,
            );
            csv.write_record([
                r.label.clone(),
                r.n.to_string(),
                r.method.label().to_string(),
                (j + 1).to_string(),
                r.bias[j].to_string(),
                r.bias_mc_error[j].to_string(),
                r.empirical_se[j].to_string(),
                r.mean_estimated_se[j].to_string(),
                r.coverage.map(|c| c.to_string()).unwrap_or_default(),
                r.failures.to_string(),
                r.replicates.to_string(),
                r.unreliable.to_string(),
            ])?;
        }
    }
    if results.iter().any(|r| r.unreliable) {
        text.push_str("* more than 5% of replicates failed\n");
    }
    let bytes = csv.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    let csv = String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))?;
    Ok(RenderedTable { text, csv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::ErrorLaw;

    fn small(methods: Vec<Method>, replicates: usize) -> StudyConfig {
        StudyConfig {
            scenarios: vec![StudyScenario {
                label: None,
                scenario: Scenario {
                    theta0: vec![1.0],
                    error_law: ErrorLaw::log_normal(0.0, 1.0).unwrap(),
                    covariate_law: CovariateLaw::uniform(-1.0, 1.0).unwrap(),
                    scheme: ObservationScheme::BackwardRecurrence,
                    censoring: None,
                    n: 60,
                    seed: 4,
                },
                methods,
                misspecified_analysis_law: None,
            }],
            replicates,
            ci_level: 0.95,
            master_seed: 11,
            fit: FitOptions::default(),
        }
    }

    #[test]
    fn single_replicate_bias_is_the_error() {
        let cfg = small(vec![Method::NaiveProfile], 1);
        let res = run_study(&cfg).unwrap();
        let mut s = cfg.scenarios[0].scenario.clone();
        s.seed = derive_seed(derive_seed(11, 4), 0);
        let est =
            crate::estimators::fit_naive(&generate_cohort(&s).unwrap(), &FitOptions::default())
                .unwrap();
        assert_eq!(res[0].bias[0], est.theta_hat[0] - 1.0);
        assert!(res[0].empirical_se[0].is_nan());
    }

    #[test]
    fn csv_is_deterministic_and_cp_blank_without_interval() {
        let cfg = small(vec![Method::NaiveProfile, Method::MeanZero], 3);
        let a = table_render(&run_study(&cfg).unwrap()).unwrap();
        let b = table_render(&run_study(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let lines: Vec<&str> = a.csv.lines().collect();
        assert_eq!(lines.len(), 3);
        let mz: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(mz[2], "mean-zero");
        assert_eq!(mz[8], "");
    }

    #[test]
    fn bundled_table1_has_fifteen_scenarios() {
        let cfg = StudyConfig::table1();
        assert_eq!(cfg.scenarios.len(), 15);
        assert_eq!(
            cfg.scenarios.iter().map(|s| s.methods.len()).sum::<usize>(),
            45
        );
        assert_eq!(cfg.replicates, 1000);
    }

    #[test]
    fn single_scenario_shorthand() {
        let cfg = StudyConfig::from_json(
            r#"{"scenario":{"theta0":[1.0],"errorLaw":{"family":"logNormal","logMean":0,"logSd":1},
                "covariateLaw":{"family":"uniformBox","lower":[-1],"upper":[1]},
                "scheme":"backwardRecurrence","n":50,"seed":2},
                "methods":["naiveProfile","meanZero"],"replicates":5,"masterSeed":9}"#,
        )
        .unwrap();
        assert_eq!(cfg.scenarios.len(), 1);
        assert_eq!(
            cfg.scenarios[0].methods,
            vec![Method::NaiveProfile, Method::MeanZero]
        );
        assert_eq!(cfg.replicates, 5);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(StudyConfig::from_json(&text).unwrap(), cfg);
        assert!(StudyConfig::from_json(r#"{"replicates":3}"#).is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = small(vec![Method::NaiveProfile], 1);
        cfg.replicates = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = small(vec![Method::KnownH], 1);
        cfg.scenarios[0].scenario.scheme = ObservationScheme::Underlying;
        assert!(cfg.validate().is_err());
        assert!(table_render(&[]).is_err());
    }
}
