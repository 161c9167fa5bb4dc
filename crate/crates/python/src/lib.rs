//! Python bindings: error laws, cohort simulation, the three estimators,
//! efficient-score diagnostics and the Monte Carlo study.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lbaft::estimators::{self, EstimateResult, FitOptions, Method};
use lbaft::kernel::{self, KernelSpec};
use lbaft::laws::{self as laws, CovariateLaw, Law};
use lbaft::sampling::{self, ObservationScheme, Scenario, SubjectRecord};
use lbaft::score::{self, OracleModel, WeightScheme};
use lbaft::study::{self, StudyConfig};
use lbaft::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Json(_)
        | Error::Domain(_)
        | Error::InvalidLaw(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Records from parallel columns.
fn records(
    times: Vec<f64>,
    status: Vec<bool>,
    covariates: Vec<Vec<f64>>,
    scheme: &str,
) -> Result<Vec<SubjectRecord>, Error> {
    let scheme = ObservationScheme::parse(scheme)?;
    if times.len() != status.len() || times.len() != covariates.len() {
        return Err(Error::Config(
            "times, status and covariates must have equal length".into(),
        ));
    }
    times
        .into_iter()
        .zip(status)
        .zip(covariates)
        .map(|((t, d), z)| SubjectRecord::new(t, d, z, scheme))
        .collect()
}

/// Error law of the AFT model.
#[pyclass(name = "ErrorLaw", frozen)]
struct PyErrorLaw {
    inner: laws::ErrorLaw,
}

#[pymethods]
impl PyErrorLaw {
    #[staticmethod]
    fn log_normal(log_mean: f64, log_sd: f64) -> PyResult<Self> {
        Ok(Self {
            inner: laws::ErrorLaw::log_normal(log_mean, log_sd).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn exponential(rate: f64) -> PyResult<Self> {
        Ok(Self {
            inner: laws::ErrorLaw::exponential(rate).map_err(to_py)?,
        })
    }

    fn pdf(&self, u: f64) -> f64 {
        self.inner.pdf(u)
    }

    fn sf(&self, u: f64) -> f64 {
        self.inner.sf(u)
    }

    fn mean(&self) -> PyResult<f64> {
        self.inner.mean().map_err(to_py)
    }

    /// `1 − u g(u)/S(u)`.
    fn phi(&self, u: f64) -> PyResult<f64> {
        self.inner.phi(u).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| to_py(e.into()))
    }
}

/// Fitted coefficients with standard errors and intervals.
#[pyclass(name = "Estimate", frozen)]
struct PyEstimate {
    inner: EstimateResult,
}

#[pymethods]
impl PyEstimate {
    #[getter]
    fn theta_hat(&self) -> Vec<f64> {
        self.inner.theta_hat.clone()
    }

    #[getter]
    fn se(&self) -> Option<Vec<f64>> {
        self.inner.se.clone()
    }

    #[getter]
    fn ci(&self) -> Option<Vec<(f64, f64)>> {
        self.inner
            .ci
            .as_ref()
            .map(|v| v.iter().map(|c| (c[0], c[1])).collect())
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.label()
    }

    /// `(ratio, lower, upper)` per covariate; bounds are `None` without an interval.
    fn time_ratios(&self) -> Vec<(f64, Option<f64>, Option<f64>)> {
        estimators::time_ratios(&self.inner)
            .into_iter()
            .map(|r| (r.ratio, r.lower, r.upper))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| to_py(e.into()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Estimate(method={}, theta_hat={:?}, se={}, converged={})",
            self.inner.method.label(),
            self.inner.theta_hat,
            self.inner
                .se
                .as_ref()
                .map_or("None".to_string(), |s| format!("{s:?}")),
            self.inner.converged
        )
    }
}

/// Simulates a cohort from a scenario JSON document.
/// Returns `(times, status, covariates)`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn simulate(scenario_json: &str) -> PyResult<(Vec<f64>, Vec<bool>, Vec<Vec<f64>>)> {
    let s: Scenario = serde_json::from_str(scenario_json).map_err(|e| to_py(e.into()))?;
    let cohort = sampling::generate_cohort(&s).map_err(to_py)?;
    let times = cohort.iter().map(|r| r.time).collect();
    let status = cohort.iter().map(|r| r.event).collect();
    let z = cohort.into_iter().map(|r| r.covariates).collect();
    Ok((times, status, z))
}

#[pyfunction]
#[pyo3(signature = (times, status, covariates, method = "naive", scheme = "backward-recurrence", bandwidth = None, level = 0.95, covariate_law_json = None))]
#[allow(clippy::too_many_arguments)]
fn fit(
    times: Vec<f64>,
    status: Vec<bool>,
    covariates: Vec<Vec<f64>>,
    method: &str,
    scheme: &str,
    bandwidth: Option<f64>,
    level: f64,
    covariate_law_json: Option<&str>,
) -> PyResult<PyEstimate> {
    let recs = records(times, status, covariates, scheme).map_err(to_py)?;
    let method = Method::parse(method).map_err(to_py)?;
    let law: Option<CovariateLaw> = covariate_law_json
        .map(serde_json::from_str)
        .transpose()
        .map_err(|e| to_py(e.into()))?;
    let opts = FitOptions {
        kernel: bandwidth.map_or_else(KernelSpec::default, KernelSpec::with_bandwidth),
        level,
        ..FitOptions::default()
    };
    let inner = estimators::fit(method, &recs, law.as_ref(), &opts).map_err(to_py)?;
    Ok(PyEstimate { inner })
}

/// Smoothed profile log-likelihood at `theta`.
#[pyfunction]
#[pyo3(signature = (theta, times, status, covariates, scheme = "backward-recurrence", bandwidth = None))]
fn profile_loglik(
    theta: Vec<f64>,
    times: Vec<f64>,
    status: Vec<bool>,
    covariates: Vec<Vec<f64>>,
    scheme: &str,
    bandwidth: Option<f64>,
) -> PyResult<f64> {
    let recs = records(times, status, covariates, scheme).map_err(to_py)?;
    let spec = bandwidth.map_or_else(KernelSpec::default, KernelSpec::with_bandwidth);
    kernel::profile_loglik(&theta, &recs, &spec).map_err(to_py)
}

/// Efficient score under a known error law: `(per_subject, total, information)`.
#[pyfunction]
#[pyo3(signature = (theta, times, status, covariates, law, scheme = "backward-recurrence"))]
#[allow(clippy::type_complexity)]
fn efficient_score(
    theta: Vec<f64>,
    times: Vec<f64>,
    status: Vec<bool>,
    covariates: Vec<Vec<f64>>,
    law: &PyErrorLaw,
    scheme: &str,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>)> {
    let recs = records(times, status, covariates, scheme).map_err(to_py)?;
    let scheme = ObservationScheme::parse(scheme).map_err(to_py)?;
    let weights = WeightScheme::for_scheme(scheme).map_err(to_py)?;
    let model = OracleModel::new(law.inner.clone(), weights).map_err(to_py)?;
    let s = score::efficient_score(&recs, &theta, &model).map_err(to_py)?;
    Ok((s.per_subject, s.total, s.information))
}

/// Runs a study configuration and returns `(text_table, csv)`.
#[pyfunction]
#[pyo3(signature = (config_json, replicates = None))]
fn run_study(
    py: Python<'_>,
    config_json: &str,
    replicates: Option<usize>,
) -> PyResult<(String, String)> {
    let mut cfg = StudyConfig::from_json(config_json).map_err(to_py)?;
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    let results = py.detach(|| study::run_study(&cfg)).map_err(to_py)?;
    let table = study::table_render(&results).map_err(to_py)?;
    Ok((table.text, table.csv))
}

#[pymodule]
fn lbaft_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyErrorLaw>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(profile_loglik, m)?)?;
    m.add_function(wrap_pyfunction!(efficient_score, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    Ok(())
}
