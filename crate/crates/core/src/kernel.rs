//! Residuals, the IQR bandwidth rule, kernel-smoothed hazards and the
//! smoothed profile log-likelihood.
//!
//! Residuals live on the log scale, `e_i = log t_i − θ'z_i`. The hazard
//! estimate is a Gaussian-kernel event intensity over an at-risk count whose
//! threshold sits one bandwidth to the left of the evaluation point. By
//! default that threshold is smoothed with a triweight CDF of half-width `h`,
//! which keeps the likelihood differentiable in `θ`; the hard indicator is
//! available as [`RiskSet::Indicator`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::cumulative_trapezoid;
use crate::sampling::SubjectRecord;
use crate::special::INV_SQRT_2PI;

// Gaussian kernel terms beyond this many bandwidths are below 1e-31.
const CUTOFF: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Bandwidth {
    Fixed(f64),
    /// `IQR · n^{-1/5}` of the residuals.
    IqrRule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RiskSet {
    Smoothed,
    Indicator,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct KernelSpec {
    pub bandwidth: Bandwidth,
    pub floor: f64,
    /// At-risk threshold offset in bandwidths.
    pub at_risk_slack: f64,
    pub risk: RiskSet,
    /// Trapezoid nodes for the cumulative hazard.
    pub grid_nodes: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::IqrRule,
            floor: 1e-10,
            at_risk_slack: 1.0,
            risk: RiskSet::Smoothed,
            grid_nodes: 256,
        }
    }
}

impl KernelSpec {
    pub fn with_bandwidth(h: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed(h),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!(
                    "bandwidth must be positive, got {h}"
                )));
            }
        }
        if !(self.floor > 0.0) || !(self.at_risk_slack >= 0.0) || self.grid_nodes < 8 {
            return Err(Error::Config(
                "kernel spec needs floor > 0, slack >= 0 and at least 8 grid nodes".into(),
            ));
        }
        Ok(())
    }

    pub fn resolve(&self, rs: &ResidualSet) -> Result<f64> {
        self.validate()?;
        match self.bandwidth {
            Bandwidth::Fixed(h) => Ok(h),
            Bandwidth::IqrRule => bandwidth(rs),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResidualSet {
    pub residuals: Vec<f64>,
    pub events: Vec<bool>,
    pub theta: Vec<f64>,
}

impl ResidualSet {
    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.events.iter().filter(|&&d| d).count()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `e_i = log t_i − θ'z_i`.
pub fn residuals(theta: &[f64], records: &[SubjectRecord]) -> Result<ResidualSet> {
    let mut residuals = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.covariates.len() != theta.len() {
            return Err(Error::Domain(format!(
                "record {i} has {} covariates, expected {}",
                r.covariates.len(),
                theta.len()
            )));
        }
        let e = r.time.ln() - dot(theta, &r.covariates);
        if !e.is_finite() {
            return Err(Error::Domain(format!(
                "record {i} gives a non-finite residual"
            )));
        }
        residuals.push(e);
    }
    Ok(ResidualSet {
        residuals,
        events: records.iter().map(|r| r.event).collect(),
        theta: theta.to_vec(),
    })
}

/// Linear-interpolation sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    if k + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[k] + frac * (sorted[k + 1] - sorted[k])
}

/// `IQR · n^{-1/5}`.
pub fn bandwidth(rs: &ResidualSet) -> Result<f64> {
    let n = rs.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "bandwidth rule needs at least 4 residuals, got {n}"
        )));
    }
    let mut sorted = rs.residuals.clone();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    if !(iqr > 0.0) {
        return Err(Error::DegenerateData(
            "residual interquartile range is zero".into(),
        ));
    }
    Ok(iqr * (n as f64).powf(-0.2))
}

#[inline]
fn gauss(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Triweight CDF on `[-1, 1]`.
#[inline]
fn triweight_cdf(x: f64) -> f64 {
    if x <= -1.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let x2 = x * x;
        0.5 + 35.0 / 32.0 * x * (1.0 - x2 + x2 * x2 * (3.0 / 5.0) - x2 * x2 * x2 / 7.0)
    }
}

#[inline]
fn triweight_pdf(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        let a = 1.0 - x * x;
        35.0 / 32.0 * a * a * a
    }
}

/// Kernel hazard estimate on a fixed residual set and bandwidth.
#[derive(Clone, Debug)]
pub struct SmoothedHazard {
    h: f64,
    slack: f64,
    risk: RiskSet,
    sorted: Vec<f64>,
    sorted_events: Vec<f64>,
}

impl SmoothedHazard {
    pub fn new(rs: &ResidualSet, h: f64, spec: &KernelSpec) -> Self {
        let mut sorted = rs.residuals.clone();
        sorted.sort_by(f64::total_cmp);
        let mut sorted_events: Vec<f64> = rs
            .residuals
            .iter()
            .zip(&rs.events)
            .filter(|(_, &d)| d)
            .map(|(&e, _)| e)
            .collect();
        sorted_events.sort_by(f64::total_cmp);
        Self {
            h,
            slack: spec.at_risk_slack,
            risk: spec.risk,
            sorted,
            sorted_events,
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    fn window(&self, xs: &[f64], t: f64) -> (usize, usize) {
        let reach = CUTOFF * self.h;
        (
            xs.partition_point(|&e| e < t - reach),
            xs.partition_point(|&e| e <= t + reach),
        )
    }

    /// `Σ_k δ_k K_h(t − e_k)`.
    pub fn intensity(&self, t: f64) -> f64 {
        let (a, b) = self.window(&self.sorted_events, t);
        self.sorted_events[a..b]
            .iter()
            .map(|&e| gauss((t - e) / self.h))
            .sum::<f64>()
            / self.h
    }

    /// Derivative of [`Self::intensity`] in `t`.
    pub fn intensity_derivative(&self, t: f64) -> f64 {
        let (a, b) = self.window(&self.sorted_events, t);
        let h = self.h;
        -self.sorted_events[a..b]
            .iter()
            .map(|&e| {
                let x = (t - e) / h;
                x * gauss(x)
            })
            .sum::<f64>()
            / (h * h)
    }

    /// At-risk count at `t`, floored at 1.
    pub fn at_risk(&self, t: f64) -> f64 {
        let h = self.h;
        let count = match self.risk {
            RiskSet::Indicator => {
                let threshold = t - self.slack * h;
                (self.sorted.len() - self.sorted.partition_point(|&e| e < threshold)) as f64
            }
            RiskSet::Smoothed => {
                // weight Ψ((e − t)/h + slack): 1 above t + (1 − slack)h, 0 below t − (1 + slack)h
                let lo = t - (1.0 + self.slack) * h;
                let hi = t + (1.0 - self.slack) * h;
                let a = self.sorted.partition_point(|&e| e <= lo);
                let b = self.sorted.partition_point(|&e| e < hi);
                let partial: f64 = self.sorted[a..b]
                    .iter()
                    .map(|&e| triweight_cdf((e - t) / h + self.slack))
                    .sum();
                (self.sorted.len() - b) as f64 + partial
            }
        };
        count.max(1.0)
    }

    /// Derivative of the unfloored smoothed at-risk count (zero for the indicator).
    pub fn at_risk_derivative(&self, t: f64) -> f64 {
        if self.risk == RiskSet::Indicator {
            return 0.0;
        }
        let h = self.h;
        let lo = t - (1.0 + self.slack) * h;
        let hi = t + (1.0 - self.slack) * h;
        let a = self.sorted.partition_point(|&e| e <= lo);
        let b = self.sorted.partition_point(|&e| e < hi);
        -self.sorted[a..b]
            .iter()
            .map(|&e| triweight_pdf((e - t) / h + self.slack))
            .sum::<f64>()
            / h
    }

    pub fn hazard(&self, t: f64) -> f64 {
        self.intensity(t) / self.at_risk(t)
    }

    /// `d/dt log λ̂(t)`.
    pub fn log_hazard_derivative(&self, t: f64) -> f64 {
        let num = self.intensity(t);
        let risk = self.at_risk(t);
        let d_risk = if risk > 1.0 {
            self.at_risk_derivative(t)
        } else {
            0.0
        };
        self.intensity_derivative(t) / num - d_risk / risk
    }

    /// Trapezoid cumulative hazard on `grid_nodes` points from
    /// `min residual − 5h` to `upper`.
    pub fn cumulative_grid(&self, nodes: usize, upper: f64) -> CumulativeHazard {
        let lo = self.sorted[0] - 5.0 * self.h;
        let hi = upper.max(lo + self.h);
        let step = (hi - lo) / (nodes - 1) as f64;
        let xs: Vec<f64> = (0..nodes).map(|k| lo + step * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| self.hazard(x)).collect();
        let cum = cumulative_trapezoid(&xs, &ys);
        CumulativeHazard { xs, ys, cum }
    }
}

/// Tabulated `Λ̂` with trapezoid interpolation.
#[derive(Clone, Debug)]
pub struct CumulativeHazard {
    xs: Vec<f64>,
    ys: Vec<f64>,
    cum: Vec<f64>,
}

impl CumulativeHazard {
    /// `Λ̂(t)`, closing the last partial panel with the supplied `λ̂(t)`.
    pub fn at(&self, t: f64, hazard_at_t: f64) -> f64 {
        if t <= self.xs[0] {
            return 0.0;
        }
        let k = (self.xs.partition_point(|&x| x <= t) - 1).min(self.xs.len() - 1);
        self.cum[k] + 0.5 * (self.ys[k] + hazard_at_t) * (t - self.xs[k])
    }
}

/// Per-subject pieces of the profile log-likelihood.
#[derive(Clone, Debug)]
pub struct ProfileTerms {
    /// `λ̂_{−i}(e_i)` before flooring (zero for censored subjects).
    pub loo_hazard: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub at_risk: Vec<f64>,
    pub value: f64,
}

fn check_events(rs: &ResidualSet) -> Result<()> {
    let events = rs.event_count();
    if events < 5 {
        return Err(Error::InsufficientData(format!(
            "profile likelihood needs at least 5 events, got {events}"
        )));
    }
    Ok(())
}

/// Profile log-likelihood on a residual set at a resolved bandwidth.
pub fn profile_terms(rs: &ResidualSet, h: f64, spec: &KernelSpec) -> Result<ProfileTerms> {
    check_events(rs)?;
    let sh = SmoothedHazard::new(rs, h, spec);
    let upper = *sh.sorted.last().unwrap();
    let grid = sh.cumulative_grid(spec.grid_nodes, upper);
    let loo = loo_intensities(rs, h);
    let n = rs.len();
    let mut loo_hazard = vec![0.0; n];
    let mut cumulative = vec![0.0; n];
    let mut at_risk = vec![0.0; n];
    let mut value = 0.0;
    for i in 0..n {
        let e = rs.residuals[i];
        let risk = sh.at_risk(e);
        at_risk[i] = risk;
        let full = if rs.events[i] {
            loo_hazard[i] = loo[i] / risk;
            value += loo_hazard[i].max(spec.floor).ln();
            loo[i] + INV_SQRT_2PI / h
        } else {
            sh.intensity(e)
        };
        // the last trapezoid panel is closed with the full-sample λ̂(e_i)
        cumulative[i] = grid.at(e, full / risk);
        value -= cumulative[i];
    }
    Ok(ProfileTerms {
        loo_hazard,
        cumulative,
        at_risk,
        value,
    })
}

/// Leave-one-out event intensities `Σ_{k≠i} δ_k K_h(e_i − e_k)` at every
/// event residual (zero for censored subjects), one pass over sorted pairs.
fn loo_intensities(rs: &ResidualSet, h: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..rs.len()).filter(|&i| rs.events[i]).collect();
    order.sort_by(|&a, &b| rs.residuals[a].total_cmp(&rs.residuals[b]));
    let e: Vec<f64> = order.iter().map(|&i| rs.residuals[i]).collect();
    let reach = CUTOFF * h;
    let inv_h = 1.0 / h;
    let mut sums = vec![0.0; e.len()];
    for i in 0..e.len() {
        let mut acc = 0.0;
        for k in i + 1..e.len() {
            let d = e[k] - e[i];
            if d > reach {
                break;
            }
            let w = gauss(d * inv_h);
            acc += w;
            sums[k] += w;
        }
        sums[i] += acc;
    }
    let mut out = vec![0.0; rs.len()];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = sums[pos] * inv_h;
    }
    out
}

pub fn profile_loglik_residuals(rs: &ResidualSet, h: f64, spec: &KernelSpec) -> Result<f64> {
    Ok(profile_terms(rs, h, spec)?.value)
}

/// `ℓ(θ)`; a bandwidth rule is resolved on the residuals at this `θ`.
pub fn profile_loglik(theta: &[f64], records: &[SubjectRecord], spec: &KernelSpec) -> Result<f64> {
    let rs = residuals(theta, records)?;
    let h = spec.resolve(&rs)?;
    profile_loglik_residuals(&rs, h, spec)
}

/// `λ̂(t)` on a residual set.
pub fn smoothed_hazard(rs: &ResidualSet, spec: &KernelSpec, t: f64) -> Result<f64> {
    let h = spec.resolve(rs)?;
    Ok(SmoothedHazard::new(rs, h, spec).hazard(t))
}

/// Density-form evaluation for fully observed data: leave-one-out kernel
/// density by a direct double loop, converted to a hazard by the at-risk
/// factor, minus the same cumulative-hazard correction.
pub fn profile_loglik_density_form(rs: &ResidualSet, h: f64, spec: &KernelSpec) -> Result<f64> {
    if rs.events.iter().any(|&d| !d) {
        return Err(Error::Config(
            "density form requires fully observed data".into(),
        ));
    }
    check_events(rs)?;
    let n = rs.len();
    let sh = SmoothedHazard::new(rs, h, spec);
    let grid = sh.cumulative_grid(spec.grid_nodes, *sh.sorted.last().unwrap());
    let mut total = 0.0;
    for i in 0..n {
        let e = rs.residuals[i];
        let mut dens = 0.0;
        for (j, &x) in rs.residuals.iter().enumerate() {
            if j != i {
                dens += gauss((e - x) / h);
            }
        }
        dens /= (n - 1) as f64 * h;
        let full_dens = (dens * (n - 1) as f64 + INV_SQRT_2PI / h) / n as f64;
        let risk = sh.at_risk(e);
        let hazard = dens * (n - 1) as f64 / risk;
        total += hazard.max(spec.floor).ln();
        total -= grid.at(e, full_dens * n as f64 / risk);
    }
    Ok(total)
}

/// Mean over events of the squared leave-one-out kernel score `f̂'/f̂` at
/// each residual: the plug-in for `E φ(Ũ)²` on the log scale.
pub fn loo_score_second_moment(rs: &ResidualSet, h: f64) -> Result<f64> {
    let ev: Vec<f64> = rs
        .residuals
        .iter()
        .zip(&rs.events)
        .filter(|(_, &d)| d)
        .map(|(&e, _)| e)
        .collect();
    if ev.len() < 5 {
        return Err(Error::InsufficientData(
            "score plug-in needs at least 5 events".into(),
        ));
    }
    let mut acc = 0.0;
    let mut used = 0usize;
    for (i, &e) in ev.iter().enumerate() {
        let (mut f, mut df) = (0.0, 0.0);
        for (j, &x) in ev.iter().enumerate() {
            if j != i {
                let u = (e - x) / h;
                let k = gauss(u);
                f += k;
                df -= u * k;
            }
        }
        if f > 1e-300 {
            let s = df / (f * h);
            acc += s * s;
            used += 1;
        }
    }
    Ok(acc / used.max(1) as f64)
}
