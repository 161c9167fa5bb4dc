use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ErrorLaw, Law, TAIL_PROBABILITY};
use crate::error::{Error, Result};
use crate::quadrature::Quadrature;
use crate::rng::Stream;

const TABLE_NODES: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DerivedKind {
    /// Density `u g(u)/μ_g`.
    LengthBiased,
    /// Density `S(u)/μ_g`, the law of forward and backward recurrence times.
    Recurrence,
}

/// A length-biased or recurrence-time transform of an [`ErrorLaw`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivedLaw {
    pub kind: DerivedKind,
    pub base: ErrorLaw,
    #[serde(skip)]
    table: OnceLock<InverseCdfTable>,
}

impl PartialEq for DerivedLaw {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.base == other.base
    }
}

impl DerivedLaw {
    pub fn new(kind: DerivedKind, base: ErrorLaw) -> Result<Self> {
        base.validate()?;
        Ok(Self {
            kind,
            base,
            table: OnceLock::new(),
        })
    }

    pub fn length_biased(base: ErrorLaw) -> Result<Self> {
        Self::new(DerivedKind::LengthBiased, base)
    }

    pub fn recurrence(base: ErrorLaw) -> Result<Self> {
        Self::new(DerivedKind::Recurrence, base)
    }

    fn base_mean(&self) -> f64 {
        self.base.analytic_mean()
    }

    /// `∫_u^∞ S(v) dv`, via `∫_u^∞ v g(v) dv − u S(u)`.
    pub fn integrated_survival(&self, u: f64) -> f64 {
        (self.base.upper_first_moment(u) - u * self.base.sf(u)).max(0.0)
    }

    /// `d/du log q(u)` for the derived density `q`.
    pub fn log_pdf_derivative(&self, u: f64) -> f64 {
        match self.kind {
            DerivedKind::LengthBiased => 1.0 / u + self.base.log_pdf_derivative(u),
            DerivedKind::Recurrence => {
                let s = self.base.sf(u);
                -self.base.pdf(u) / s
            }
        }
    }

    /// Second moment of the derived law by quadrature.
    pub fn second_moment_by_quadrature(&self) -> Result<f64> {
        Quadrature::default()
            .integrate_to_infinity(&|u| u * u * self.pdf(u), &self.base.quadrature_nodes())
    }

    /// Tabulated inverse CDF, built on first use.
    pub fn inverse_table(&self) -> &InverseCdfTable {
        self.table
            .get_or_init(|| InverseCdfTable::build(self, TABLE_NODES))
    }

    fn exact_sample(&self, rng: &mut Stream) -> Option<f64> {
        match (self.kind, &self.base) {
            (DerivedKind::LengthBiased, ErrorLaw::LogNormal { log_mean, log_sd }) => {
                let z: f64 = StandardNormal.sample(rng);
                Some((log_mean + log_sd * log_sd + log_sd * z).exp())
            }
            (DerivedKind::LengthBiased, ErrorLaw::Exponential { rate }) => {
                // Gamma(2, rate) as a sum of two exponentials
                let a: f64 = rng.random();
                let b: f64 = rng.random();
                Some(-((1.0 - a).ln() + (1.0 - b).ln()) / rate)
            }
            (DerivedKind::Recurrence, ErrorLaw::Exponential { .. }) => {
                Some(self.base.sample_one(rng))
            }
            _ => None,
        }
    }

    pub fn sample_one(&self, rng: &mut Stream) -> f64 {
        match self.exact_sample(rng) {
            Some(x) => x,
            None => {
                let table = self.inverse_table();
                table.invert(rng.random::<f64>())
            }
        }
    }
}

impl Law for DerivedLaw {
    fn pdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match self.kind {
            DerivedKind::LengthBiased => u * self.base.pdf(u) / self.base_mean(),
            DerivedKind::Recurrence => self.base.sf(u) / self.base_mean(),
        }
    }

    fn sf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 1.0;
        }
        match self.kind {
            DerivedKind::LengthBiased => self.base.upper_first_moment(u) / self.base_mean(),
            DerivedKind::Recurrence => self.integrated_survival(u) / self.base_mean(),
        }
    }

    fn mean(&self) -> Result<f64> {
        Quadrature::default()
            .integrate_to_infinity(&|u| u * self.pdf(u), &self.base.quadrature_nodes())
    }

    fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "quantile level must lie in (0, 1), got {p}"
            )));
        }
        if let (DerivedKind::LengthBiased, ErrorLaw::LogNormal { log_mean, log_sd }) =
            (self.kind, &self.base)
        {
            return ErrorLaw::LogNormal {
                log_mean: log_mean + log_sd * log_sd,
                log_sd: *log_sd,
            }
            .quantile(p);
        }
        if let (DerivedKind::Recurrence, ErrorLaw::Exponential { .. }) = (self.kind, &self.base) {
            return self.base.quantile(p);
        }
        Ok(self.inverse_table().invert(p))
    }

    fn sample(&self, n: usize, rng: &mut Stream) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }
}

/// CDF tabulated on log-spaced nodes and inverted by monotone cubic
/// (Fritsch–Carlson) interpolation of `log u` against `F(u)`.
#[derive(Clone, Debug)]
pub struct InverseCdfTable {
    probs: Vec<f64>,
    log_u: Vec<f64>,
    slopes: Vec<f64>,
}

impl InverseCdfTable {
    pub fn build<L: Law + ?Sized>(law: &L, nodes: usize) -> Self {
        let tiny = TAIL_PROBABILITY * 1e-3;
        let mut lo = 1.0;
        while law.cdf(lo) > tiny && lo > 1e-300 {
            lo *= 0.5;
        }
        let mut hi = 1.0;
        while law.sf(hi) > tiny && hi < 1e300 {
            hi *= 2.0;
        }
        let (a, b) = (lo.ln(), hi.ln());
        let mut probs = Vec::with_capacity(nodes);
        let mut log_u = Vec::with_capacity(nodes);
        for k in 0..nodes {
            let x = a + (b - a) * k as f64 / (nodes - 1) as f64;
            let u = x.exp();
            let s = law.sf(u);
            let p = if s < 0.5 { 1.0 - s } else { law.cdf(u) };
            if probs.last().is_none_or(|&last| p > last) {
                probs.push(p);
                log_u.push(x);
            }
        }
        let slopes = monotone_slopes(&probs, &log_u);
        Self {
            probs,
            log_u,
            slopes,
        }
    }

    pub fn invert(&self, p: f64) -> f64 {
        let n = self.probs.len();
        if p <= self.probs[0] {
            return self.log_u[0].exp();
        }
        if p >= self.probs[n - 1] {
            return self.log_u[n - 1].exp();
        }
        let k = self.probs.partition_point(|&q| q <= p) - 1;
        let (x0, x1) = (self.probs[k], self.probs[k + 1]);
        let (y0, y1) = (self.log_u[k], self.log_u[k + 1]);
        let h = x1 - x0;
        let t = (p - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let y = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * self.slopes[k]
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * self.slopes[k + 1];
        y.exp()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn monotone_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let secants: Vec<f64> = (0..n - 1)
        .map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k]))
        .collect();
    let mut m = vec![0.0; n];
    m[0] = secants[0];
    m[n - 1] = secants[n - 2];
    for k in 1..n - 1 {
        m[k] = if secants[k - 1] * secants[k] <= 0.0 {
            0.0
        } else {
            0.5 * (secants[k - 1] + secants[k])
        };
    }
    for k in 0..n - 1 {
        let d = secants[k];
        if d == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let (a, b) = (m[k] / d, m[k + 1] / d);
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[k] = tau * a * d;
            m[k + 1] = tau * b * d;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn ln01() -> ErrorLaw {
        ErrorLaw::log_normal(0.0, 1.0).unwrap()
    }

    #[test]
    fn recurrence_over_exponential_is_exponential() {
        let law = DerivedLaw::recurrence(ErrorLaw::exponential(1.0).unwrap()).unwrap();
        for t in [0.01, 0.5, 2.0, 9.0] {
            assert!((law.density(t).unwrap() - (-t).exp()).abs() < 1e-14);
            assert!((law.survival(t).unwrap() - (-t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn biased_means_match_moment_formulas() {
        let lb = DerivedLaw::length_biased(ln01()).unwrap();
        let rec = DerivedLaw::recurrence(ln01()).unwrap();
        assert!((lb.mean().unwrap() - 1.5f64.exp()).abs() < 1e-6 * 1.5f64.exp());
        assert!((lb.mean().unwrap() - 4.48169).abs() < 1e-5);
        assert!((rec.mean().unwrap() - 1.5f64.exp() / 2.0).abs() < 1e-6 * 2.3);
        assert!((rec.mean().unwrap() - 2.24084).abs() < 1e-5);
    }

    #[test]
    fn survival_matches_density_integral() {
        let q = Quadrature::default();
        for kind in [DerivedKind::LengthBiased, DerivedKind::Recurrence] {
            let law = DerivedLaw::new(kind, ln01()).unwrap();
            for u in [0.2, 1.0, 3.0] {
                let mut nodes: Vec<f64> = law
                    .base
                    .quadrature_nodes()
                    .into_iter()
                    .filter(|&x| x > u)
                    .collect();
                nodes.insert(0, u);
                let tail = q.integrate_to_infinity(&|v| law.pdf(v), &nodes).unwrap();
                assert!((tail - law.sf(u)).abs() < 1e-8, "{kind:?} u={u}");
            }
        }
    }

    #[test]
    fn table_inverts_cdf() {
        let law = DerivedLaw::recurrence(ln01()).unwrap();
        for p in [1e-4, 0.1, 0.5, 0.9, 0.9999] {
            let u = law.quantile(p).unwrap();
            assert!((law.cdf(u) - p).abs() < 1e-7, "p={p}");
        }
    }

    #[test]
    fn log_derivative_matches_finite_difference() {
        for kind in [DerivedKind::LengthBiased, DerivedKind::Recurrence] {
            let law = DerivedLaw::new(kind, ln01()).unwrap();
            for u in [0.3, 1.0, 2.5] {
                let h = 1e-5;
                let fd = (law.pdf(u + h).ln() - law.pdf(u - h).ln()) / (2.0 * h);
                assert!((fd - law.log_pdf_derivative(u)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let law = DerivedLaw::recurrence(ln01()).unwrap();
        let a = law.sample(5, &mut stream(11, 2));
        let b = law.sample(5, &mut stream(11, 2));
        assert_eq!(a, b);
    }
}
