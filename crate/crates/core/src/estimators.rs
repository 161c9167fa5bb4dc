//! Naive profile-likelihood, known-covariate-law and vanishing-mean
//! estimators of the AFT coefficient, with curvature and plug-in standard
//! errors, Wald intervals and time ratios.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, dot, KernelSpec, ResidualSet};
use crate::laws::CovariateLaw;
use crate::optim::{self, Optimum, Options};
use crate::sampling::{SubjectRecord, DEFAULT_BOX};
use crate::special::norm_quantile;

pub const MIN_RECORDS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Method {
    NaiveProfile,
    KnownH,
    MeanZero,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "naive" | "naiveprofile" | "profile" => Ok(Method::NaiveProfile),
            "knownh" | "known" => Ok(Method::KnownH),
            "meanzero" | "vanishingmean" => Ok(Method::MeanZero),
            _ => Err(Error::Config(format!("unknown method '{s}'"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::NaiveProfile => "naive",
            Method::KnownH => "known-h",
            Method::MeanZero => "mean-zero",
        }
    }

    /// Whether the method reports a confidence interval.
    pub fn has_interval(self) -> bool {
        self != Method::MeanZero
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct FitOptions {
    pub kernel: KernelSpec,
    /// Half-width of the parameter box `[-b, b]^p`.
    pub box_bound: f64,
    pub level: f64,
    pub tol: f64,
    pub max_evaluations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            box_bound: DEFAULT_BOX,
            level: 0.95,
            tol: 1e-6,
            max_evaluations: 500,
        }
    }
}

impl FitOptions {
    fn optim(&self) -> Options {
        Options {
            tol: self.tol,
            max_evaluations: self.max_evaluations,
            ..Options::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EstimateResult {
    pub theta_hat: Vec<f64>,
    /// Primary standard error.
    pub se: Option<Vec<f64>>,
    pub curvature_se: Option<Vec<f64>>,
    pub plugin_se: Option<Vec<f64>>,
    pub ci: Option<Vec<[f64; 2]>>,
    pub level: f64,
    pub method: Method,
    pub converged: bool,
    pub evaluations: usize,
    pub bandwidth: f64,
    pub flags: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TimeRatio {
    pub ratio: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

fn check_records(records: &[SubjectRecord]) -> Result<usize> {
    if records.len() < MIN_RECORDS {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_RECORDS} records, got {}",
            records.len()
        )));
    }
    let p = records[0].covariates.len();
    if p == 0 {
        return Err(Error::InsufficientData(
            "records carry no covariates".into(),
        ));
    }
    if records.iter().any(|r| r.covariates.len() != p) {
        return Err(Error::Domain(
            "records have inconsistent covariate dimensions".into(),
        ));
    }
    if records.iter().any(|r| r.scheme != records[0].scheme) {
        return Err(Error::Config("records mix observation schemes".into()));
    }
    Ok(p)
}

/// Least-squares slope of `log t` on the covariates, used as a start value.
pub fn ols_pilot(records: &[SubjectRecord]) -> Result<Vec<f64>> {
    let n = records.len();
    let p = records[0].covariates.len();
    let x = DMatrix::from_fn(n, p + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            records[i].covariates[j - 1]
        }
    });
    let y = DVector::from_iterator(n, records.iter().map(|r| r.time.ln()));
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::DegenerateData("covariate design is rank deficient".into()))?;
    let beta = chol.solve(&xty);
    Ok(beta.iter().skip(1).copied().collect())
}

fn covariate_covariance(records: &[SubjectRecord]) -> DMatrix<f64> {
    let n = records.len() as f64;
    let p = records[0].covariates.len();
    let mean: Vec<f64> = (0..p)
        .map(|j| records.iter().map(|r| r.covariates[j]).sum::<f64>() / n)
        .collect();
    DMatrix::from_fn(p, p, |a, b| {
        records
            .iter()
            .map(|r| (r.covariates[a] - mean[a]) * (r.covariates[b] - mean[b]))
            .sum::<f64>()
            / n
    })
}

fn covariate_mean(records: &[SubjectRecord]) -> Vec<f64> {
    let n = records.len() as f64;
    let p = records[0].covariates.len();
    (0..p)
        .map(|j| records.iter().map(|r| r.covariates[j]).sum::<f64>() / n)
        .collect()
}

/// Shared state for one fit: data, resolved bandwidth, difference step.
struct Problem<'a> {
    records: &'a [SubjectRecord],
    spec: KernelSpec,
    h: f64,
    step: f64,
    pilot: Vec<f64>,
    opts: FitOptions,
}

impl<'a> Problem<'a> {
    fn new(records: &'a [SubjectRecord], opts: &FitOptions) -> Result<Self> {
        check_records(records)?;
        let bound = opts.box_bound;
        let pilot: Vec<f64> = ols_pilot(records)?
            .into_iter()
            .map(|t| t.clamp(-bound, bound))
            .collect();
        let rs = kernel::residuals(&pilot, records)?;
        let h = opts.kernel.resolve(&rs)?;
        let spec = KernelSpec {
            bandwidth: kernel::Bandwidth::Fixed(h),
            ..opts.kernel
        };
        let n = records.len() as f64;
        Ok(Self {
            records,
            spec,
            h,
            step: (h / n.sqrt()).max(1e-3),
            pilot,
            opts: *opts,
        })
    }

    fn residuals(&self, theta: &[f64]) -> Result<ResidualSet> {
        kernel::residuals(theta, self.records)
    }

    fn profile(&self, theta: &[f64]) -> Result<f64> {
        kernel::profile_loglik_residuals(&self.residuals(theta)?, self.h, &self.spec)
    }

    fn maximize<F: FnMut(&[f64]) -> Result<f64>>(&self, f: F) -> Result<Optimum> {
        let b = self.opts.box_bound;
        optim::maximize(f, &self.pilot, -b, b, &self.opts.optim())
    }

    /// `sqrt(diag((−H)^{-1}))`, or `None` when `−H` is not positive definite.
    fn curvature_se<F: FnMut(&[f64]) -> Result<f64>>(
        &self,
        f: F,
        at: &[f64],
    ) -> Result<Option<Vec<f64>>> {
        let hm = optim::hessian(f, at, self.step)?;
        Ok(inverse_sqrt_diag(-hm))
    }

    fn plugin_se(&self, theta: &[f64]) -> Result<Option<Vec<f64>>> {
        let rs = self.residuals(theta)?;
        let j = kernel::loo_score_second_moment(&rs, self.h)?;
        let info = covariate_covariance(self.records) * (j * self.records.len() as f64);
        Ok(inverse_sqrt_diag(info))
    }

    fn result(&self, method: Method, opt: &Optimum, se: Option<Vec<f64>>) -> EstimateResult {
        let mut flags = Vec::new();
        if opt.at_boundary {
            flags.push("boundary".to_string());
        }
        if opt.evaluations >= self.opts.max_evaluations {
            flags.push("evaluation-cap".to_string());
        }
        EstimateResult {
            theta_hat: opt.x.clone(),
            se,
            curvature_se: None,
            plugin_se: None,
            ci: None,
            level: self.opts.level,
            method,
            converged: opt.converged,
            evaluations: opt.evaluations,
            bandwidth: self.h,
            flags,
        }
    }
}

fn inverse_sqrt_diag(m: DMatrix<f64>) -> Option<Vec<f64>> {
    let chol = m.cholesky()?;
    let inv = chol.inverse();
    let se: Vec<f64> = inv.diagonal().iter().map(|v| v.sqrt()).collect();
    if se.iter().all(|s| s.is_finite()) {
        Some(se)
    } else {
        None
    }
}

fn finish(
    mut est: EstimateResult,
    curvature: Option<Vec<f64>>,
    plugin: Option<Vec<f64>>,
    all_events: bool,
) -> EstimateResult {
    if curvature.is_none() {
        est.flags.push("singular-hessian".to_string());
    }
    est.se = if all_events && plugin.is_some() {
        plugin.clone()
    } else {
        curvature.clone()
    };
    est.curvature_se = curvature;
    est.plugin_se = plugin;
    if est.method.has_interval() {
        est.ci = wald_ci(&est, est.level).ok();
    }
    est
}

/// Maximizer of the smoothed profile log-likelihood.
///
/// On fully observed data the primary standard error is the plug-in
/// `[n Cov(Z̃) Ê φ²]^{-1/2}` with `Ê φ²` the mean squared leave-one-out
/// kernel score of the residuals; otherwise it is the profile curvature.
pub fn fit_naive(records: &[SubjectRecord], opts: &FitOptions) -> Result<EstimateResult> {
    let prob = Problem::new(records, opts)?;
    let opt = prob.maximize(|t| prob.profile(t))?;
    let curvature = prob.curvature_se(|t| prob.profile(t), &opt.x)?;
    let all_events = records.iter().all(|r| r.event);
    let plugin = if all_events {
        prob.plugin_se(&opt.x)?
    } else {
        None
    };
    let est = prob.result(Method::NaiveProfile, &opt, None);
    Ok(finish(est, curvature, plugin, all_events))
}

/// Profile likelihood plus the tilted covariate log-likelihood
/// `Σ_i [θ'Z̃_i − log ∫ e^{θ'z} h(z) dz]` for a known `h`.
pub fn fit_known_h(
    records: &[SubjectRecord],
    h: &CovariateLaw,
    opts: &FitOptions,
) -> Result<EstimateResult> {
    let p = check_records(records)?;
    if h.dimension() != p {
        return Err(Error::Config(format!(
            "covariate law has dimension {} but records have {p}",
            h.dimension()
        )));
    }
    let prob = Problem::new(records, opts)?;
    let n = records.len() as f64;
    let zbar = covariate_mean(records);
    let objective = |t: &[f64]| -> Result<f64> {
        Ok(prob.profile(t)? + n * (dot(t, &zbar) - h.log_normalizer(t)?))
    };
    let opt = prob.maximize(objective)?;
    let curvature = prob.curvature_se(objective, &opt.x)?;
    let est = prob.result(Method::KnownH, &opt, None);
    Ok(finish(est, curvature, None, false))
}

/// `(1/n) Σ_i e^{−θ'Z̃_i} Z̃_i`, which vanishes at the truth when `E Z = 0`.
pub fn mean_zero_moment(theta: &[f64], records: &[SubjectRecord]) -> Vec<f64> {
    let p = theta.len();
    let n = records.len() as f64;
    let mut g = vec![0.0; p];
    for r in records {
        let w = (-dot(theta, &r.covariates)).exp();
        for (gj, zj) in g.iter_mut().zip(&r.covariates) {
            *gj += w * zj;
        }
    }
    g.iter().map(|v| v / n).collect()
}

/// Minimizes `|ℓ'(θ)/n|² + |(1/n) Σ e^{−θ'Z̃}Z̃|²`, stacking the profile score
/// with the moment that a mean-zero covariate law imposes on the tilted data.
pub fn fit_mean_zero(records: &[SubjectRecord], opts: &FitOptions) -> Result<EstimateResult> {
    let p = check_records(records)?;
    for j in 0..p {
        let pos = records.iter().any(|r| r.covariates[j] > 0.0);
        let neg = records.iter().any(|r| r.covariates[j] < 0.0);
        if !(pos && neg) {
            return Err(Error::Infeasible(format!(
                "covariate {} takes one sign only, so the mean-zero moment has no root",
                j + 1
            )));
        }
    }
    let prob = Problem::new(records, opts)?;
    let n = records.len() as f64;
    let objective = |t: &[f64]| -> Result<f64> {
        let g1 = optim::gradient(|u| prob.profile(u), t, prob.step)?;
        let g2 = mean_zero_moment(t, records);
        let q: f64 = g1.iter().map(|v| (v / n) * (v / n)).sum::<f64>()
            + g2.iter().map(|v| v * v).sum::<f64>();
        Ok(-q)
    };
    let opt = prob.maximize(objective)?;
    let curvature = prob.curvature_se(|t| prob.profile(t), &opt.x)?;
    let est = prob.result(Method::MeanZero, &opt, None);
    Ok(finish(est, curvature, None, false))
}

pub fn fit(
    method: Method,
    records: &[SubjectRecord],
    h: Option<&CovariateLaw>,
    opts: &FitOptions,
) -> Result<EstimateResult> {
    match method {
        Method::NaiveProfile => fit_naive(records, opts),
        Method::MeanZero => fit_mean_zero(records, opts),
        Method::KnownH => {
            let h = h.ok_or_else(|| Error::Config("known-h fit needs a covariate law".into()))?;
            fit_known_h(records, h, opts)
        }
    }
}

/// `θ̂ ± z_{(1+level)/2} · se` per coordinate.
pub fn wald_ci(est: &EstimateResult, level: f64) -> Result<Vec<[f64; 2]>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let se = est.se.as_ref().ok_or(Error::MissingSe)?;
    let z = norm_quantile(0.5 * (1.0 + level));
    Ok(est
        .theta_hat
        .iter()
        .zip(se)
        .map(|(t, s)| [t - z * s, t + z * s])
        .collect())
}

/// `e^{θ̂}` with exponentiated interval endpoints.
pub fn time_ratios(est: &EstimateResult) -> Vec<TimeRatio> {
    est.theta_hat
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let ci = est.ci.as_ref().map(|c| c[j]);
            TimeRatio {
                ratio: t.exp(),
                lower: ci.map(|c| c[0].exp()),
                upper: ci.map(|c| c[1].exp()),
            }
        })
        .collect()
}

/// Text table of time ratios, one row per covariate, followed by reference
/// categories of indicator-coded covariates listed with ratio 1.
pub fn time_ratio_table(names: &[String], est: &EstimateResult, references: &[String]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
    let mut out = format!(
        "{:<20} {:>9} {:>9} {:>9}\n",
        "covariate", "ratio", "lower", "upper"
    );
    for (name, r) in names.iter().zip(time_ratios(est)) {
        out.push_str(&format!(
            "{:<20} {:>9} {:>9} {:>9}\n",
            name,
            fmt(Some(r.ratio)),
            fmt(r.lower),
            fmt(r.upper)
        ));
    }
    for name in references {
        out.push_str(&format!("{:<20} {:>9} {:>9} {:>9}\n", name, "1", "-", "-"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(theta: f64, se: Option<f64>) -> EstimateResult {
        EstimateResult {
            theta_hat: vec![theta],
            se: se.map(|s| vec![s]),
            curvature_se: None,
            plugin_se: None,
            ci: None,
            level: 0.95,
            method: Method::NaiveProfile,
            converged: true,
            evaluations: 1,
            bandwidth: 1.0,
            flags: vec![],
        }
    }

    #[test]
    fn wald_interval_examples() {
        let ci = wald_ci(&est(1.0, Some(0.1)), 0.95).unwrap();
        assert!((ci[0][0] - 0.804).abs() < 5e-4 && (ci[0][1] - 1.196).abs() < 5e-4);
        let ci = wald_ci(&est(1.0, Some(0.0)), 0.95).unwrap();
        assert_eq!(ci[0], [1.0, 1.0]);
        assert!(matches!(
            wald_ci(&est(1.0, None), 0.95),
            Err(Error::MissingSe)
        ));
    }

    #[test]
    fn time_ratio_examples() {
        assert_eq!(time_ratios(&est(0.0, None))[0].ratio, 1.0);
        let mut e = est(2f64.ln(), Some(0.1));
        e.ci = Some(vec![[2f64.ln() - 0.1, 2f64.ln() + 0.1]]);
        let r = time_ratios(&e)[0];
        assert!((r.ratio - 2.0).abs() < 1e-15);
        assert!((r.lower.unwrap() - 2.0 * (-0.1f64).exp()).abs() < 1e-14);
        assert!((r.upper.unwrap() - 2.0 * 0.1f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn method_names() {
        assert_eq!(Method::parse("known-h").unwrap(), Method::KnownH);
        assert_eq!(Method::parse("mean-zero").unwrap(), Method::MeanZero);
        assert_eq!(Method::parse("naive").unwrap(), Method::NaiveProfile);
        assert!(Method::parse("bogus").is_err());
    }

    #[test]
    fn reference_rows_render_as_one() {
        let mut e = est(2f64.ln(), Some(0.1));
        e.ci = Some(vec![[2f64.ln() - 0.2, 2f64.ln() + 0.2]]);
        let t = time_ratio_table(&["smoker".into()], &e, &["non-smoker".into()]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[1].contains("2.000"));
        let reference: Vec<&str> = lines[2].split_whitespace().collect();
        assert_eq!(reference, ["non-smoker", "1", "-", "-"]);
    }
}
