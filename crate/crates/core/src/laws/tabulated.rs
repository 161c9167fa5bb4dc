use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear density on an increasing positive grid, zero outside it.
/// Values are renormalized to integrate to one on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct TabulatedDensity {
    grid: Vec<f64>,
    values: Vec<f64>,
    // CDF, ∫ v g and ∫ v² g accumulated up to each grid node
    cum: Vec<f64>,
    cum_first: Vec<f64>,
    cum_second: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawTable {
    grid: Vec<f64>,
    density_values: Vec<f64>,
}

impl TryFrom<RawTable> for TabulatedDensity {
    type Error = Error;
    fn try_from(raw: RawTable) -> Result<Self> {
        TabulatedDensity::new(raw.grid, raw.density_values)
    }
}

impl From<TabulatedDensity> for RawTable {
    fn from(t: TabulatedDensity) -> Self {
        RawTable {
            grid: t.grid,
            density_values: t.values,
        }
    }
}

// Exact segment integrals of 1, v and v² against a linear density.
fn segment_moments(a: f64, b: f64, fa: f64, fb: f64) -> (f64, f64, f64) {
    let w = b - a;
    let m0 = 0.5 * w * (fa + fb);
    let m1 = w / 6.0 * (fa * (2.0 * a + b) + fb * (a + 2.0 * b));
    let m2 = w / 12.0
        * (fa * (3.0 * a * a + 2.0 * a * b + b * b) + fb * (a * a + 2.0 * a * b + 3.0 * b * b));
    (m0, m1, m2)
}

impl TabulatedDensity {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::InvalidLaw(
                "tabulated law needs matching grid and density vectors of length >= 2".into(),
            ));
        }
        if grid[0] <= 0.0
            || grid.windows(2).any(|w| !(w[1] > w[0]))
            || grid.iter().any(|x| !x.is_finite())
        {
            return Err(Error::InvalidLaw(
                "tabulated grid must be positive and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidLaw(
                "tabulated density values must be finite and nonnegative".into(),
            ));
        }
        let mass: f64 = grid
            .windows(2)
            .zip(values.windows(2))
            .map(|(x, f)| segment_moments(x[0], x[1], f[0], f[1]).0)
            .sum();
        if !(mass > 0.0) {
            return Err(Error::InvalidLaw("tabulated density has zero mass".into()));
        }
        let values: Vec<f64> = values.iter().map(|v| v / mass).collect();
        let mut cum = vec![0.0];
        let mut cum_first = vec![0.0];
        let mut cum_second = vec![0.0];
        for k in 1..grid.len() {
            let (m0, m1, m2) = segment_moments(grid[k - 1], grid[k], values[k - 1], values[k]);
            cum.push(cum[k - 1] + m0);
            cum_first.push(cum_first[k - 1] + m1);
            cum_second.push(cum_second[k - 1] + m2);
        }
        Ok(Self {
            grid,
            values,
            cum,
            cum_first,
            cum_second,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    // index k with grid[k] <= u < grid[k+1], or None outside the support
    fn segment(&self, u: f64) -> Option<usize> {
        if u < self.grid[0] || u >= *self.grid.last().unwrap() {
            return None;
        }
        Some(self.grid.partition_point(|&x| x <= u) - 1)
    }

    fn linear(&self, k: usize, u: f64) -> f64 {
        let (a, b) = (self.grid[k], self.grid[k + 1]);
        self.values[k] + (self.values[k + 1] - self.values[k]) * (u - a) / (b - a)
    }

    pub fn pdf(&self, u: f64) -> f64 {
        self.segment(u).map_or(0.0, |k| self.linear(k, u))
    }

    pub fn log_pdf_derivative(&self, u: f64) -> f64 {
        match self.segment(u) {
            Some(k) => {
                let slope =
                    (self.values[k + 1] - self.values[k]) / (self.grid[k + 1] - self.grid[k]);
                slope / self.linear(k, u)
            }
            None => 0.0,
        }
    }

    pub fn sf(&self, u: f64) -> f64 {
        if u < self.grid[0] {
            return 1.0;
        }
        match self.segment(u) {
            None => 0.0,
            Some(k) => {
                let (m0, _, _) =
                    segment_moments(self.grid[k], u, self.values[k], self.linear(k, u));
                (1.0 - self.cum[k] - m0).max(0.0)
            }
        }
    }

    pub fn upper_first_moment(&self, u: f64) -> f64 {
        let total = *self.cum_first.last().unwrap();
        if u < self.grid[0] {
            return total;
        }
        match self.segment(u) {
            None => 0.0,
            Some(k) => {
                let (_, m1, _) =
                    segment_moments(self.grid[k], u, self.values[k], self.linear(k, u));
                (total - self.cum_first[k] - m1).max(0.0)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        *self.cum_first.last().unwrap()
    }

    pub fn second_moment(&self) -> f64 {
        *self.cum_second.last().unwrap()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let k = self
            .cum
            .partition_point(|&c| c < p)
            .clamp(1, self.grid.len() - 1)
            - 1;
        let (a, b) = (self.grid[k], self.grid[k + 1]);
        let (fa, fb) = (self.values[k], self.values[k + 1]);
        let target = p - self.cum[k];
        let slope = (fb - fa) / (b - a);
        // solve fa x + slope x²/2 = target for x in [0, b - a]
        let x = if slope.abs() < 1e-300 {
            if fa > 0.0 {
                target / fa
            } else {
                0.0
            }
        } else {
            let disc = (fa * fa + 2.0 * slope * target).max(0.0);
            // stable root of the quadratic
            2.0 * target / (fa + disc.sqrt())
        };
        (a + x).clamp(a, b)
    }
}
