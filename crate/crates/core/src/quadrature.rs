//! Adaptive Simpson quadrature with panel splitting and tail extension.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-10,
            max_depth: 48,
        }
    }
}

impl Quadrature {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    /// Integrates `f` over `[a, b]` split into `panels` equal pieces.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> f64 {
        self.integrate_panels(f, a, b, 8)
    }

    pub fn integrate_panels<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64, panels: usize) -> f64 {
        if b == a {
            return 0.0;
        }
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        // coarse pass to size the relative tolerance
        let mut pieces = Vec::with_capacity(panels);
        let mut coarse = 0.0;
        for k in 0..panels {
            let lo = a + width * k as f64;
            let hi = if k + 1 == panels { b } else { lo + width };
            let mid = 0.5 * (lo + hi);
            let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
            let s = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            coarse += s.abs();
            pieces.push((lo, hi, flo, fmid, fhi, s));
        }
        let eps = self.abs_tol.max(self.rel_tol * coarse) / panels as f64;
        pieces
            .into_iter()
            .map(|(lo, hi, flo, fmid, fhi, s)| {
                simpson_recurse(f, lo, hi, flo, fmid, fhi, s, eps, self.max_depth)
            })
            .sum()
    }

    /// Integrates over consecutive intervals `[nodes[k], nodes[k+1]]`.
    pub fn integrate_nodes<F: Fn(f64) -> f64>(&self, f: &F, nodes: &[f64]) -> f64 {
        nodes
            .windows(2)
            .map(|w| self.integrate_panels(f, w[0], w[1], 2))
            .sum()
    }

    /// Integrates `f` over `[nodes[0], ∞)`: first across `nodes`, then over
    /// doubling intervals past the last node until the added piece is
    /// negligible. Fails with a non-finite-moment error if it never settles.
    pub fn integrate_to_infinity<F: Fn(f64) -> f64>(&self, f: &F, nodes: &[f64]) -> Result<f64> {
        let mut total = self.integrate_nodes(f, nodes);
        let mut lo = *nodes.last().expect("at least one node");
        let mut width = (lo - nodes[0]).max(lo.abs()).max(1.0);
        for _ in 0..64 {
            let hi = lo + width;
            let piece = self.integrate_panels(f, lo, hi, 4);
            total += piece;
            if !total.is_finite() {
                break;
            }
            if piece.abs() <= self.abs_tol.max(self.rel_tol * total.abs()) * 1e-2 {
                return Ok(total);
            }
            lo = hi;
            width *= 2.0;
        }
        Err(Error::NonfiniteMoment(format!(
            "tail integral did not settle (running total {total})"
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps || !delta.is_finite() {
        return left + right + delta / 15.0;
    }
    simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// Cumulative trapezoid integral of samples `ys` taken at increasing `xs`.
pub fn cumulative_trapezoid(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..xs.len() {
        acc += 0.5 * (ys[k] + ys[k - 1]) * (xs[k] - xs[k - 1]);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = Quadrature::default();
        let v = q.integrate(&|x: f64| x * x * x - 2.0 * x, 0.0, 2.0);
        assert!((v - 0.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_tail() {
        let q = Quadrature::default();
        let v = q
            .integrate_to_infinity(&|x: f64| (-0.5 * x * x).exp(), &[0.0, 1.0, 3.0])
            .unwrap();
        assert!((v - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn divergent_tail_errors() {
        let q = Quadrature::default();
        assert!(matches!(
            q.integrate_to_infinity(&|x: f64| 1.0 / (1.0 + x), &[0.0, 1.0]),
            Err(Error::NonfiniteMoment(_))
        ));
    }

    #[test]
    fn trapezoid_on_line() {
        let xs = [0.0, 1.0, 3.0];
        let c = cumulative_trapezoid(&xs, &xs);
        assert_eq!(c, vec![0.0, 0.5, 4.5]);
    }
}
