//! Scores, efficient scores and information on the residual scale
//! `U_i(θ) = e^{−θ'Z̃_i} t_i`.
//!
//! Write `q` for the density of the observed error (`S/μ_g` for recurrence
//! times, `u g(u)/μ_g` for length-biased times), `Q` for its tail and
//! `λ = q/Q`. The score kernel is `φ = 1 + u q'(u)/q(u)`, which is
//! `1 − u g/S` for recurrence times and `2 + u g'/g` for length-biased
//! times. With `R` the tail-averaging operator under weight `q`, one has
//! `Rφ(u) = φ(u) + u λ(u)` and `∫_a^b Rφ λ ds = bλ(b) − aλ(a)`, so every
//! stochastic integral below is evaluated in closed form.
//!
//! Scores carry the sign of the log-likelihood derivative in `θ`, so the
//! mean efficient score decreases through zero at the truth.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{dot, KernelSpec, ResidualSet, SmoothedHazard};
use crate::laws::{DerivedKind, DerivedLaw, ErrorLaw, Law, HAZARD_FLOOR};
use crate::quadrature::Quadrature;
use crate::sampling::{ObservationScheme, SubjectRecord};

/// Weight under which `R` averages tails.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum WeightScheme {
    /// Weight `S(u)`: forward and backward recurrence times.
    RecurrenceWeights,
    /// Weight `u g(u)`: length-biased times.
    LengthBiasWeights,
}

impl WeightScheme {
    pub fn for_scheme(scheme: ObservationScheme) -> Result<Self> {
        match scheme {
            ObservationScheme::ForwardRecurrence | ObservationScheme::BackwardRecurrence => {
                Ok(Self::RecurrenceWeights)
            }
            ObservationScheme::LengthBiased => Ok(Self::LengthBiasWeights),
            ObservationScheme::Underlying => Err(Error::Config(
                "score machinery is defined for length-biased and recurrence-time data only".into(),
            )),
        }
    }

    fn kind(self) -> DerivedKind {
        match self {
            Self::RecurrenceWeights => DerivedKind::Recurrence,
            Self::LengthBiasWeights => DerivedKind::LengthBiased,
        }
    }

    /// Unnormalized weight `w(u)`.
    pub fn weight(self, law: &ErrorLaw, u: f64) -> f64 {
        match self {
            Self::RecurrenceWeights => law.sf(u),
            Self::LengthBiasWeights => u * law.pdf(u),
        }
    }
}

/// Hazard-side description of the observed error law.
pub trait ScoreModel: Send + Sync {
    /// `u λ(u)`.
    fn scaled_hazard(&self, u: f64) -> Result<f64>;
    /// `φ(u)`.
    fn phi(&self, u: f64) -> Result<f64>;
    /// `Rφ(u)`.
    fn r_phi(&self, u: f64) -> Result<f64> {
        Ok(self.phi(u)? + self.scaled_hazard(u)?)
    }
    /// `Λ(u) = ∫_0^u λ`.
    fn cumulative_hazard(&self, u: f64) -> Result<f64>;

    fn hazard(&self, u: f64) -> Result<f64> {
        Ok(self.scaled_hazard(u)? / u)
    }
}

/// Score model at a known error law.
#[derive(Clone, Debug)]
pub struct OracleModel {
    pub law: ErrorLaw,
    pub weights: WeightScheme,
    observed: DerivedLaw,
}

impl OracleModel {
    pub fn new(law: ErrorLaw, weights: WeightScheme) -> Result<Self> {
        let observed = DerivedLaw::new(weights.kind(), law.clone())?;
        Ok(Self {
            law,
            weights,
            observed,
        })
    }

    pub fn observed_law(&self) -> &DerivedLaw {
        &self.observed
    }

    fn tail(&self, u: f64) -> Result<f64> {
        let q = self.observed.sf(u);
        if q <= HAZARD_FLOOR {
            return Err(Error::Singularity(format!(
                "observed tail {q:e} at u = {u} is below the floor"
            )));
        }
        Ok(q)
    }
}

impl ScoreModel for OracleModel {
    fn scaled_hazard(&self, u: f64) -> Result<f64> {
        Ok(u * self.observed.pdf(u) / self.tail(u)?)
    }

    fn phi(&self, u: f64) -> Result<f64> {
        match self.weights {
            WeightScheme::RecurrenceWeights => self.law.phi(u),
            WeightScheme::LengthBiasWeights => Ok(2.0 + u * self.law.log_pdf_derivative(u)),
        }
    }

    fn cumulative_hazard(&self, u: f64) -> Result<f64> {
        Ok(-self.tail(u)?.ln())
    }
}

/// Score model built from the kernel hazard of the residuals. On the log
/// scale `y = log u` it uses `u λ(u) = λ̂_ε(y)` and `Rφ = λ̂_ε'/λ̂_ε`.
#[derive(Clone, Debug)]
pub struct EstimatedModel {
    hazard: SmoothedHazard,
    floor: f64,
    grid: Vec<f64>,
    cum: Vec<f64>,
}

impl EstimatedModel {
    pub fn new(rs: &ResidualSet, spec: &KernelSpec) -> Result<Self> {
        let h = spec.resolve(rs)?;
        let hazard = SmoothedHazard::new(rs, h, spec);
        let lo = rs.residuals.iter().copied().fold(f64::INFINITY, f64::min) - 5.0 * h;
        let hi = rs
            .residuals
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            + 5.0 * h;
        let nodes = spec.grid_nodes.max(512);
        let step = (hi - lo) / (nodes - 1) as f64;
        let grid: Vec<f64> = (0..nodes).map(|k| lo + step * k as f64).collect();
        let ys: Vec<f64> = grid.iter().map(|&y| hazard.hazard(y)).collect();
        let cum = crate::quadrature::cumulative_trapezoid(&grid, &ys);
        Ok(Self {
            hazard,
            floor: spec.floor,
            grid,
            cum,
        })
    }
}

impl ScoreModel for EstimatedModel {
    fn scaled_hazard(&self, u: f64) -> Result<f64> {
        crate::laws::check_positive(u)?;
        Ok(self.hazard.hazard(u.ln()))
    }

    fn phi(&self, u: f64) -> Result<f64> {
        Ok(self.r_phi(u)? - self.scaled_hazard(u)?)
    }

    fn r_phi(&self, u: f64) -> Result<f64> {
        crate::laws::check_positive(u)?;
        let y = u.ln();
        if self.hazard.intensity(y) <= self.floor {
            return Ok(0.0);
        }
        Ok(self.hazard.log_hazard_derivative(y))
    }

    fn cumulative_hazard(&self, u: f64) -> Result<f64> {
        crate::laws::check_positive(u)?;
        let y = u.ln();
        if y <= self.grid[0] {
            return Ok(0.0);
        }
        let k = (self.grid.partition_point(|&g| g <= y) - 1).min(self.grid.len() - 1);
        let lam_k = self.hazard.hazard(self.grid[k]);
        Ok(self.cum[k] + 0.5 * (lam_k + self.hazard.hazard(y)) * (y - self.grid[k]))
    }
}

fn tail_nodes(law: &ErrorLaw, t: f64) -> Vec<f64> {
    let mut nodes = vec![t];
    nodes.extend(law.quadrature_nodes().into_iter().filter(|&x| x > t));
    nodes
}

/// `Ra(t) = a(t) − ∫_t^∞ a w / ∫_t^∞ w` with the scheme weight `w`.
pub fn r_apply(
    a: &dyn Fn(f64) -> f64,
    weights: WeightScheme,
    law: &ErrorLaw,
    t: f64,
) -> Result<f64> {
    crate::laws::check_positive(t)?;
    let q = Quadrature::default();
    let nodes = tail_nodes(law, t);
    let den = q.integrate_to_infinity(&|u| weights.weight(law, u), &nodes)?;
    if den < 1e-14 {
        return Err(Error::Singularity(format!(
            "weight tail {den:e} at t = {t} is below 1e-14"
        )));
    }
    let num = q.integrate_to_infinity(&|u| a(u) * weights.weight(law, u), &nodes)?;
    Ok(a(t) - num / den)
}

/// Counting-process martingale of one subject on the residual scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MartingalePath {
    /// Observed residual `U_i(θ) ∧ U^c_i(θ)`.
    pub observed: f64,
    pub event: bool,
    /// Compensator `Λ(observed)`.
    pub compensator: f64,
}

impl MartingalePath {
    /// `M(t) = 1{U ≤ t, δ = 1} − Λ(t ∧ U)`, given `Λ(t)` for `t` before the
    /// observation time.
    pub fn value(&self, t: f64, model: &dyn ScoreModel) -> Result<f64> {
        if t >= self.observed {
            return Ok(self.terminal());
        }
        Ok(-model.cumulative_hazard(t)?)
    }

    pub fn terminal(&self) -> f64 {
        f64::from(u8::from(self.event)) - self.compensator
    }
}

pub fn residual_time(record: &SubjectRecord, theta: &[f64]) -> f64 {
    (-dot(theta, &record.covariates)).exp() * record.time
}

pub fn martingale_path(
    record: &SubjectRecord,
    theta: &[f64],
    model: &dyn ScoreModel,
) -> Result<MartingalePath> {
    let u = residual_time(record, theta);
    Ok(MartingalePath {
        observed: u,
        event: record.event,
        compensator: model.cumulative_hazard(u)?,
    })
}

/// Per-subject score vectors with their sum and an information estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScorePieces {
    pub per_subject: Vec<Vec<f64>>,
    pub total: Vec<f64>,
    pub information: Vec<Vec<f64>>,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl ScorePieces {
    fn new(per_subject: Vec<Vec<f64>>, information: DMatrix<f64>, flags: Vec<String>) -> Self {
        let p = information.nrows();
        let mut total = vec![0.0; p];
        for s in &per_subject {
            for (t, v) in total.iter_mut().zip(s) {
                *t += v;
            }
        }
        let information = (0..p)
            .map(|a| {
                (0..p)
                    .map(|b| 0.5 * (information[(a, b)] + information[(b, a)]))
                    .collect()
            })
            .collect();
        Self {
            per_subject,
            total,
            information,
            flags,
        }
    }

    pub fn information_matrix(&self) -> DMatrix<f64> {
        let p = self.information.len();
        DMatrix::from_fn(p, p, |a, b| self.information[a][b])
    }

    /// Empirical covariance of the per-subject contributions.
    pub fn empirical_variance(&self) -> DMatrix<f64> {
        let n = self.per_subject.len() as f64;
        let p = self.total.len();
        let mean: Vec<f64> = self.total.iter().map(|t| t / n).collect();
        DMatrix::from_fn(p, p, |a, b| {
            self.per_subject
                .iter()
                .map(|s| (s[a] - mean[a]) * (s[b] - mean[b]))
                .sum::<f64>()
                / n
        })
    }
}

fn dimension(records: &[SubjectRecord], theta: &[f64]) -> Result<usize> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records".into()));
    }
    let p = theta.len();
    if records.iter().any(|r| r.covariates.len() != p) {
        return Err(Error::Domain(format!("records must carry {p} covariates")));
    }
    Ok(p)
}

fn covariate_mean(records: &[SubjectRecord], p: usize) -> Vec<f64> {
    let n = records.len() as f64;
    (0..p)
        .map(|j| records.iter().map(|r| r.covariates[j]).sum::<f64>() / n)
        .collect()
}

/// `(δ Rφ(X), X λ(X))` for each subject, computed in parallel.
fn kernel_terms(
    records: &[SubjectRecord],
    theta: &[f64],
    model: &dyn ScoreModel,
) -> Result<Vec<(f64, f64, f64)>> {
    records
        .par_iter()
        .map(|r| {
            let u = residual_time(r, theta);
            let scaled = model.scaled_hazard(u)?;
            let rphi = if r.event { model.r_phi(u)? } else { 0.0 };
            Ok((u, rphi, scaled))
        })
        .collect()
}

/// `l̇_i = −Z̃_i ∫_0^{X_i} Rφ dM_i + (Z̃_i − Z̄)`.
pub fn ordinary_score(
    records: &[SubjectRecord],
    theta: &[f64],
    model: &dyn ScoreModel,
) -> Result<ScorePieces> {
    let p = dimension(records, theta)?;
    let zbar = covariate_mean(records, p);
    let terms = kernel_terms(records, theta, model)?;
    let per: Vec<Vec<f64>> = records
        .iter()
        .zip(&terms)
        .map(|(r, &(_, rphi, scaled))| {
            let integral = rphi - scaled;
            r.covariates
                .iter()
                .zip(&zbar)
                .map(|(z, m)| -z * integral + (z - m))
                .collect()
        })
        .collect();
    let info = outer_mean(&per);
    Ok(ScorePieces::new(per, info, vec![]))
}

fn outer_mean(per: &[Vec<f64>]) -> DMatrix<f64> {
    let p = per.first().map_or(0, Vec::len);
    let n = per.len() as f64;
    DMatrix::from_fn(p, p, |a, b| {
        per.iter().map(|s| s[a] * s[b]).sum::<f64>() / n
    })
}

/// Estimate of `E(Z̃ | U^c ≥ s)` on the intervals between sorted distinct
/// residual times. Because `Ũ` is independent of `(Z̃, U^c)`, this equals
/// `E(Z̃ | X ≥ s)`, estimated by the covariate mean over the risk set
/// `{j : X_j ≥ s}`. Without censoring `U^c = ∞` and the estimate is the
/// overall covariate mean.
struct AtRiskMean {
    /// Distinct sorted times `v_1 < … < v_m`.
    times: Vec<f64>,
    /// Mean on `(v_{g−1}, v_g]`.
    means: Vec<Vec<f64>>,
}

impl AtRiskMean {
    fn build(x: &[f64], events: &[bool], z: &[&[f64]], p: usize) -> Self {
        let n = x.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        for k in 1..=n {
            if k == n || x[order[k]] != x[order[start]] {
                groups.push((start, k));
                start = k;
            }
        }
        let times: Vec<f64> = groups.iter().map(|&(s, _)| x[order[s]]).collect();
        let m = groups.len();
        if events.iter().all(|&d| d) {
            let mean: Vec<f64> = (0..p)
                .map(|j| z.iter().map(|zi| zi[j]).sum::<f64>() / n as f64)
                .collect();
            return Self {
                times,
                means: vec![mean; m],
            };
        }
        let mut means = vec![Vec::new(); m];
        let mut count = 0.0;
        let mut acc = vec![0.0; p];
        for g in (0..m).rev() {
            let (s, e) = groups[g];
            count += (e - s) as f64;
            for &i in &order[s..e] {
                for j in 0..p {
                    acc[j] += z[i][j];
                }
            }
            means[g] = acc.iter().map(|v| v / count).collect();
        }
        Self { times, means }
    }

    fn group_of(&self, x: f64) -> usize {
        self.times.partition_point(|&v| v < x)
    }
}

/// Efficient score `l̃_i = −∫_0^{X_i} (Z̃_i − Ē(s)) Rφ(s) dM_i(s)` and the
/// information `(1/n) Σ_i δ_i D_i D_i' Rφ(X_i)²` with `D_i = Z̃_i − Ē(X_i)`.
pub fn efficient_score(
    records: &[SubjectRecord],
    theta: &[f64],
    model: &dyn ScoreModel,
) -> Result<ScorePieces> {
    let p = dimension(records, theta)?;
    let n = records.len();
    let terms = kernel_terms(records, theta, model)?;
    let x: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    let z: Vec<&[f64]> = records.iter().map(|r| r.covariates.as_slice()).collect();
    let at_risk = AtRiskMean::build(&x, &events, &z, p);
    let m = at_risk.times.len();
    // a_g = v_g λ(v_g) at each distinct time, and C_g = Σ_{k ≤ g} Ē_k (a_k − a_{k−1})
    let mut scaled_at = vec![0.0; m];
    for (i, &(u, _, scaled)) in terms.iter().enumerate() {
        let g = at_risk.group_of(u);
        scaled_at[g] = scaled;
        let _ = i;
    }
    let mut prefix = vec![vec![0.0; p]; m];
    let mut acc = vec![0.0; p];
    let mut a_prev = 0.0;
    for g in 0..m {
        let da = scaled_at[g] - a_prev;
        for (a, mean) in acc.iter_mut().zip(&at_risk.means[g]) {
            *a += mean * da;
        }
        prefix[g] = acc.clone();
        a_prev = scaled_at[g];
    }
    let mut per = Vec::with_capacity(n);
    let mut info = DMatrix::zeros(p, p);
    for (i, &(u, rphi, scaled)) in terms.iter().enumerate() {
        let g = at_risk.group_of(u);
        let mean = &at_risk.means[g];
        let zi = z[i];
        let score: Vec<f64> = (0..p)
            .map(|j| {
                let jump = if events[i] {
                    (zi[j] - mean[j]) * rphi
                } else {
                    0.0
                };
                let compensator = zi[j] * scaled - prefix[g][j];
                -(jump - compensator)
            })
            .collect();
        if events[i] {
            for a in 0..p {
                for b in 0..p {
                    info[(a, b)] += (zi[a] - mean[a]) * (zi[b] - mean[b]) * rphi * rphi;
                }
            }
        }
        per.push(score);
    }
    info /= n as f64;
    Ok(ScorePieces::new(per, info, vec![]))
}

/// `l̃_i = −(Z̃_i − Z̄) φ(U_i)` for fully observed data, with information
/// `Cov(Z̃) · mean φ(U_i)²`.
pub fn efficient_score_uncensored(
    records: &[SubjectRecord],
    theta: &[f64],
    model: &dyn ScoreModel,
) -> Result<ScorePieces> {
    let p = dimension(records, theta)?;
    if records.iter().any(|r| !r.event) {
        return Err(Error::Config(
            "uncensored efficient score needs all events observed".into(),
        ));
    }
    let zbar = covariate_mean(records, p);
    let phis: Vec<f64> = records
        .par_iter()
        .map(|r| model.phi(residual_time(r, theta)))
        .collect::<Result<_>>()?;
    let n = records.len() as f64;
    let per: Vec<Vec<f64>> = records
        .iter()
        .zip(&phis)
        .map(|(r, f)| {
            r.covariates
                .iter()
                .zip(&zbar)
                .map(|(z, m)| -(z - m) * f)
                .collect()
        })
        .collect();
    let phi2 = phis.iter().map(|f| f * f).sum::<f64>() / n;
    let cov = DMatrix::from_fn(p, p, |a, b| {
        records
            .iter()
            .map(|r| (r.covariates[a] - zbar[a]) * (r.covariates[b] - zbar[b]))
            .sum::<f64>()
            / n
    });
    Ok(ScorePieces::new(per, cov * phi2, vec![]))
}

pub type CovariateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Nuisance direction for the orthogonality check.
#[derive(Clone)]
pub enum Direction {
    /// `b(u)` on the error scale; enters through `∫ Rb dM`.
    Error {
        name: String,
        b: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
    /// `k(z)` on the covariates.
    Covariate { name: String, k: CovariateFn },
}

impl Direction {
    pub fn name(&self) -> &str {
        match self {
            Direction::Error { name, .. } | Direction::Covariate { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OrthogonalityRow {
    pub direction: String,
    pub coordinate: usize,
    pub mean: f64,
    pub mc_error: f64,
    pub passes: bool,
}

/// Tail integral `T_b(x) = ∫_x^∞ b q` of a direction against the observed
/// law, tabulated on a log grid and closed by quadrature to the next node.
struct TailTable<'a> {
    b: &'a (dyn Fn(f64) -> f64 + Send + Sync),
    q: &'a DerivedLaw,
    nodes: Vec<f64>,
    tails: Vec<f64>,
}

impl<'a> TailTable<'a> {
    fn new(b: &'a (dyn Fn(f64) -> f64 + Send + Sync), q: &'a DerivedLaw) -> Result<Self> {
        let lo = q.quantile(1e-12)?;
        let hi = q.quantile(1.0 - 1e-12)?;
        let count = 2048;
        let (a, c) = (lo.ln(), hi.ln());
        let nodes: Vec<f64> = (0..count)
            .map(|k| (a + (c - a) * k as f64 / (count - 1) as f64).exp())
            .collect();
        let quad = Quadrature::with_abs_tol(1e-12);
        let f = |u: f64| b(u) * q.pdf(u);
        let mut tails = vec![0.0; count];
        for k in (0..count - 1).rev() {
            tails[k] = tails[k + 1] + quad.integrate_panels(&f, nodes[k], nodes[k + 1], 1);
        }
        Ok(Self { b, q, nodes, tails })
    }

    fn at(&self, x: f64) -> f64 {
        let last = self.nodes.len() - 1;
        if x >= self.nodes[last] {
            return 0.0;
        }
        if x <= self.nodes[0] {
            return self.tails[0] + (self.b)(x) * (self.q.cdf(self.nodes[0]) - self.q.cdf(x));
        }
        let k = self.nodes.partition_point(|&v| v <= x);
        let quad = Quadrature::with_abs_tol(1e-13);
        self.tails[k] + quad.integrate_panels(&|u| (self.b)(u) * self.q.pdf(u), x, self.nodes[k], 1)
    }

    fn mean(&self) -> f64 {
        self.at(1e-300)
    }
}

/// `∫_0^X Rb dM = δ (b(X) − T_b(X)/Q(X)) − E b + T_b(X)/Q(X)`.
fn nuisance_score(table: &TailTable, u: f64, event: bool, eb: f64) -> Result<f64> {
    let tail = table.q.sf(u);
    if tail <= HAZARD_FLOOR {
        return Err(Error::Singularity(format!(
            "observed tail {tail:e} at u = {u}"
        )));
    }
    let ratio = table.at(u) / tail;
    let jump = if event { (table.b)(u) - ratio } else { 0.0 };
    Ok(jump - eb + ratio)
}

/// Monte Carlo inner products of the efficient score with nuisance scores
/// `∫ Rb dM` and covariate directions `k(Z̃)`, each with its MC error.
pub fn orthogonality_check(
    records: &[SubjectRecord],
    theta: &[f64],
    model: &OracleModel,
    directions: &[Direction],
) -> Result<Vec<OrthogonalityRow>> {
    let eff = efficient_score(records, theta, model)?;
    let p = theta.len();
    let n = records.len() as f64;
    let mut rows = Vec::new();
    for dir in directions {
        let values: Vec<f64> = match dir {
            Direction::Error { b, .. } => {
                let table = TailTable::new(b.as_ref(), model.observed_law())?;
                let eb = table.mean();
                records
                    .par_iter()
                    .map(|r| nuisance_score(&table, residual_time(r, theta), r.event, eb))
                    .collect::<Result<_>>()?
            }
            Direction::Covariate { k, .. } => records.iter().map(|r| k(&r.covariates)).collect(),
        };
        for j in 0..p {
            let prods: Vec<f64> = eff
                .per_subject
                .iter()
                .zip(&values)
                .map(|(s, v)| s[j] * v)
                .collect();
            let mean = prods.iter().sum::<f64>() / n;
            let var =
                prods.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
            let mc_error = (var / n).sqrt();
            rows.push(OrthogonalityRow {
                direction: dir.name().to_string(),
                coordinate: j,
                mean,
                mc_error,
                passes: mean.abs() <= 4.0 * mc_error,
            });
        }
    }
    Ok(rows)
}

/// Score diagnostics at one `θ`, serializable as a JSON report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiagnosticReport {
    pub theta: Vec<f64>,
    pub n: usize,
    pub mode: String,
    pub efficient_score_mean: Vec<f64>,
    pub efficient_score_mc_error: Vec<f64>,
    pub ordinary_score_mean: Vec<f64>,
    pub information: Vec<Vec<f64>>,
    pub score_variance: Vec<Vec<f64>>,
    pub orthogonality: Vec<OrthogonalityRow>,
}

pub fn diagnose(
    records: &[SubjectRecord],
    theta: &[f64],
    model: &dyn ScoreModel,
    mode: &str,
    orthogonality: Vec<OrthogonalityRow>,
) -> Result<DiagnosticReport> {
    let eff = efficient_score(records, theta, model)?;
    let ord = ordinary_score(records, theta, model)?;
    let n = records.len();
    let var = eff.empirical_variance();
    let p = theta.len();
    let to_rows = |m: &DMatrix<f64>| {
        (0..p)
            .map(|a| (0..p).map(|b| m[(a, b)]).collect())
            .collect()
    };
    Ok(DiagnosticReport {
        theta: theta.to_vec(),
        n,
        mode: mode.to_string(),
        efficient_score_mean: eff.total.iter().map(|t| t / n as f64).collect(),
        efficient_score_mc_error: (0..p).map(|j| (var[(j, j)] / n as f64).sqrt()).collect(),
        ordinary_score_mean: ord.total.iter().map(|t| t / n as f64).collect(),
        information: eff.information.clone(),
        score_variance: to_rows(&var),
        orthogonality,
    })
}
