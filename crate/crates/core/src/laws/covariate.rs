use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Covariate density `h` on `R^p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "camelCase")]
pub enum CovariateLaw {
    /// Independent uniforms on `[lower_k, upper_k]`.
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    /// Uniform mass on a finite set of points.
    Empirical { points: Vec<Vec<f64>> },
}

/// `log(expm1(x)/x)`, continuous through zero.
fn log_expm1_over_x(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        x / 2.0 + x * x / 24.0
    } else if x > 0.0 {
        x + (-(-x).exp_m1()).ln() - x.ln()
    } else {
        (-x.exp_m1()).ln() - (-x).ln()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl CovariateLaw {
    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let law = CovariateLaw::UniformBox { lower, upper };
        law.validate()?;
        Ok(law)
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        Self::uniform_box(vec![lower], vec![upper])
    }

    pub fn empirical(points: Vec<Vec<f64>>) -> Result<Self> {
        let law = CovariateLaw::Empirical { points };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CovariateLaw::UniformBox { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::InvalidLaw(
                        "uniform box needs matching nonempty bounds".into(),
                    ));
                }
                if lower
                    .iter()
                    .zip(upper)
                    .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
                {
                    return Err(Error::InvalidLaw(
                        "uniform box needs finite lower < upper in every coordinate".into(),
                    ));
                }
            }
            CovariateLaw::Empirical { points } => {
                let p = points.first().map_or(0, Vec::len);
                if p == 0
                    || points
                        .iter()
                        .any(|z| z.len() != p || z.iter().any(|v| !v.is_finite()))
                {
                    return Err(Error::InvalidLaw(
                        "empirical law needs nonempty finite points of one dimension".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match self {
            CovariateLaw::UniformBox { lower, .. } => lower.len(),
            CovariateLaw::Empirical { points } => points[0].len(),
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dimension() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain(format!(
                "tilt parameter must be a finite vector of length {}",
                self.dimension()
            )));
        }
        Ok(())
    }

    /// `log ∫ e^{θ'z} h(z) dz`.
    pub fn log_normalizer(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let value = match self {
            CovariateLaw::UniformBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .zip(theta)
                .map(|((l, u), t)| t * l + log_expm1_over_x(t * (u - l)))
                .sum(),
            CovariateLaw::Empirical { points } => {
                let a: Vec<f64> = points.iter().map(|z| dot(theta, z)).collect();
                log_sum_exp(&a) - (points.len() as f64).ln()
            }
        };
        if !value.is_finite() {
            return Err(Error::Domain(format!(
                "tilting normalizer is not finite at θ = {theta:?}"
            )));
        }
        Ok(value)
    }

    /// Untilted density (or point mass for the empirical law).
    pub fn density(&self, z: &[f64]) -> f64 {
        match self {
            CovariateLaw::UniformBox { lower, upper } => {
                let inside = z
                    .iter()
                    .zip(lower)
                    .zip(upper)
                    .all(|((v, l), u)| *v >= *l && *v <= *u);
                if !inside || z.len() != lower.len() {
                    return 0.0;
                }
                lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| 1.0 / (u - l))
                    .product()
            }
            CovariateLaw::Empirical { points } => {
                points.iter().filter(|p| p.as_slice() == z).count() as f64 / points.len() as f64
            }
        }
    }

    /// `e^{θ'z} h(z) / ∫ e^{θ'u} h(u) du`.
    pub fn tilted_density(&self, theta: &[f64], z: &[f64]) -> Result<f64> {
        let log_norm = self.log_normalizer(theta)?;
        let base = self.density(z);
        if base == 0.0 {
            return Ok(0.0);
        }
        Ok(base * (dot(theta, z) - log_norm).exp())
    }

    pub fn sample(&self, n: usize, rng: &mut Stream) -> Vec<Vec<f64>> {
        let zero = vec![0.0; self.dimension()];
        self.tilted_sample(&zero, n, rng)
            .expect("zero tilt is always valid")
    }

    /// Exact draws from the tilted law.
    pub fn tilted_sample(
        &self,
        theta: &[f64],
        n: usize,
        rng: &mut Stream,
    ) -> Result<Vec<Vec<f64>>> {
        self.log_normalizer(theta)?;
        Ok(match self {
            CovariateLaw::UniformBox { lower, upper } => (0..n)
                .map(|_| {
                    lower
                        .iter()
                        .zip(upper)
                        .zip(theta)
                        .map(|((&l, &u), &t)| {
                            let p: f64 = rng.random();
                            tilted_uniform_inverse(l, u, t, p)
                        })
                        .collect()
                })
                .collect(),
            CovariateLaw::Empirical { points } => {
                let logits: Vec<f64> = points.iter().map(|z| dot(theta, z)).collect();
                let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut cum = Vec::with_capacity(points.len());
                let mut acc = 0.0;
                for a in &logits {
                    acc += (a - m).exp();
                    cum.push(acc);
                }
                (0..n)
                    .map(|_| {
                        let target = rng.random::<f64>() * acc;
                        let k = cum.partition_point(|&c| c <= target).min(points.len() - 1);
                        points[k].clone()
                    })
                    .collect()
            }
        })
    }

    /// Mean of the tilted law.
    pub fn tilted_mean(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let log_norm = self.log_normalizer(theta)?;
        Ok(match self {
            CovariateLaw::UniformBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .zip(theta)
                .map(|((&l, &u), &t)| {
                    let w = u - l;
                    l + w * tilted_unit_mean(t * w)
                })
                .collect(),
            CovariateLaw::Empirical { points } => {
                let mut mean = vec![0.0; self.dimension()];
                for z in points {
                    let w = (dot(theta, z) - log_norm).exp() / points.len() as f64;
                    for (m, v) in mean.iter_mut().zip(z) {
                        *m += w * v;
                    }
                }
                mean
            }
        })
    }

    /// Covariance matrix of the tilted law.
    pub fn tilted_covariance(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.dimension();
        let log_norm = self.log_normalizer(theta)?;
        Ok(match self {
            CovariateLaw::UniformBox { lower, upper } => {
                let diag: Vec<f64> = lower
                    .iter()
                    .zip(upper)
                    .zip(theta)
                    .map(|((&l, &u), &t)| {
                        let w = u - l;
                        w * w * tilted_unit_variance(t * w)
                    })
                    .collect();
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
            }
            CovariateLaw::Empirical { points } => {
                let mean = self.tilted_mean(theta)?;
                let mut cov = DMatrix::zeros(p, p);
                for z in points {
                    let w = (dot(theta, z) - log_norm).exp() / points.len() as f64;
                    for a in 0..p {
                        for b in 0..p {
                            cov[(a, b)] += w * (z[a] - mean[a]) * (z[b] - mean[b]);
                        }
                    }
                }
                cov
            }
        })
    }
}

/// Inverse CDF of the density proportional to `e^{t z}` on `[l, u]`.
fn tilted_uniform_inverse(l: f64, u: f64, t: f64, p: f64) -> f64 {
    let w = u - l;
    let x = t * w;
    let z = if x.abs() < 1e-10 {
        l + p * w
    } else if x > 0.0 {
        // anchor at the upper end to avoid overflow of expm1(x)
        u + (p + (1.0 - p) * (-x).exp()).ln() / t
    } else {
        l + (p * x.exp_m1()).ln_1p() / t
    };
    z.clamp(l, u)
}

/// Mean of `e^{x s}` on `[0, 1]`, normalized.
fn tilted_unit_mean(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        0.5 + x / 12.0
    } else {
        1.0 / (-(-x).exp_m1()) - 1.0 / x
    }
}

fn tilted_unit_variance(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        1.0 / 12.0 - x * x / 720.0
    } else {
        let s = (0.5 * x).sinh();
        1.0 / (x * x) - 1.0 / (4.0 * s * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Quadrature;
    use crate::rng::stream;

    #[test]
    fn tilted_uniform_reference_values() {
        let h = CovariateLaw::uniform(-1.0, 1.0).unwrap();
        let e = 1f64.exp();
        assert!((h.tilted_density(&[1.0], &[0.0]).unwrap() - 1.0 / (e - 1.0 / e)).abs() < 1e-14);
        assert!((h.tilted_density(&[1.0], &[0.0]).unwrap() - 0.425459).abs() < 1e-6);
        for z in [-1.0, -0.3, 0.9] {
            assert!((h.tilted_density(&[0.0], &[z]).unwrap() - 0.5).abs() < 1e-15);
        }
        assert_eq!(h.tilted_density(&[1.0], &[1.5]).unwrap(), 0.0);
    }

    #[test]
    fn tilted_moments_match_quadrature() {
        let q = Quadrature::default();
        let h = CovariateLaw::uniform(-1.0, 1.0).unwrap();
        for t in [-3.0, -0.5, 1e-7, 0.5, 1.0, 2.0, 7.0] {
            let f = |z: f64| h.tilted_density(&[t], &[z]).unwrap();
            let mass = q.integrate(&f, -1.0, 1.0);
            let m1 = q.integrate(&|z| z * f(z), -1.0, 1.0);
            let m2 = q.integrate(&|z| z * z * f(z), -1.0, 1.0);
            assert!((mass - 1.0).abs() < 1e-9, "t={t}");
            assert!((h.tilted_mean(&[t]).unwrap()[0] - m1).abs() < 1e-9, "t={t}");
            let var = h.tilted_covariance(&[t]).unwrap()[(0, 0)];
            assert!((var - (m2 - m1 * m1)).abs() < 1e-9, "t={t}");
        }
        assert!((h.tilted_mean(&[1.0]).unwrap()[0] - 0.313035).abs() < 1e-6);
        assert!((h.tilted_covariance(&[1.0]).unwrap()[(0, 0)] - 0.27594).abs() < 1e-5);
    }

    #[test]
    fn empirical_normalizer_and_moments() {
        let h = CovariateLaw::empirical(vec![vec![-1.0], vec![0.0], vec![2.0]]).unwrap();
        let t = 0.7;
        let w: Vec<f64> = [-1.0f64, 0.0, 2.0].iter().map(|z| (t * z).exp()).collect();
        let s: f64 = w.iter().sum();
        assert!((h.log_normalizer(&[t]).unwrap() - (s / 3.0).ln()).abs() < 1e-14);
        let mean = (-w[0] + 2.0 * w[2]) / s;
        assert!((h.tilted_mean(&[t]).unwrap()[0] - mean).abs() < 1e-14);
        assert!((h.tilted_density(&[t], &[2.0]).unwrap() - w[2] / s).abs() < 1e-14);
    }

    #[test]
    fn inverse_cdf_is_monotone_and_bounded() {
        for t in [-20.0, -1.0, 0.0, 1.0, 20.0] {
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=100 {
                let z = tilted_uniform_inverse(-1.0, 1.0, t, k as f64 / 100.0);
                assert!(z >= prev && (-1.0..=1.0).contains(&z));
                prev = z;
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let h = CovariateLaw::uniform_box(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let a = h.tilted_sample(&[1.0, -0.5], 4, &mut stream(5, 1)).unwrap();
        let b = h.tilted_sample(&[1.0, -0.5], 4, &mut stream(5, 1)).unwrap();
        assert_eq!(a, b);
        assert!(h.tilted_sample(&[1.0], 4, &mut stream(5, 1)).is_err());
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(CovariateLaw::uniform(1.0, 1.0).is_err());
        assert!(CovariateLaw::uniform_box(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(CovariateLaw::empirical(vec![]).is_err());
    }

    #[test]
    fn json_shape() {
        let h: CovariateLaw =
            serde_json::from_str(r#"{"family":"uniformBox","lower":[-1],"upper":[1]}"#).unwrap();
        assert_eq!(h, CovariateLaw::uniform(-1.0, 1.0).unwrap());
    }
}
