//! Derivative-free maximization on a box: golden section in one dimension,
//! Nelder–Mead with clamping otherwise, plus finite-difference curvature.

use nalgebra::DMatrix;

use crate::error::Result;

const GOLDEN: f64 = 1.618_033_988_749_895;
const INV_GOLDEN: f64 = 0.618_033_988_749_895;

#[derive(Clone, Copy, Debug)]
pub struct Options {
    pub tol: f64,
    pub max_evaluations: usize,
    pub initial_step: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_evaluations: 500,
            initial_step: 0.25,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub at_boundary: bool,
}

struct Counted<F> {
    f: F,
    count: usize,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        self.count += 1;
        let v = (self.f)(x)?;
        // treat NaN as the worst possible value so comparisons stay total
        Ok(if v.is_nan() { f64::NEG_INFINITY } else { v })
    }
}

/// Maximizes `f` over `[lower, upper]^p` starting from `start`.
pub fn maximize<F>(f: F, start: &[f64], lower: f64, upper: f64, opts: &Options) -> Result<Optimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut counted = Counted { f, count: 0 };
    let start: Vec<f64> = start.iter().map(|x| x.clamp(lower, upper)).collect();
    let mut out = if start.len() == 1 {
        golden_section(&mut counted, start[0], lower, upper, opts)?
    } else {
        nelder_mead(&mut counted, &start, lower, upper, opts)?
    };
    out.evaluations = counted.count;
    if out.evaluations >= opts.max_evaluations {
        out.converged = false;
    }
    let margin = 10.0 * opts.tol;
    out.at_boundary = out
        .x
        .iter()
        .any(|&x| x - lower <= margin || upper - x <= margin);
    if out.at_boundary {
        out.converged = false;
    }
    Ok(out)
}

fn golden_section<F>(
    f: &mut Counted<F>,
    x0: f64,
    lower: f64,
    upper: f64,
    opts: &Options,
) -> Result<Optimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    // bracket a maximum by stepping uphill with geometric growth
    let mut a = x0;
    let mut fa = f.eval(&[a])?;
    let mut step = if a + opts.initial_step <= upper {
        opts.initial_step
    } else {
        -opts.initial_step
    };
    let mut b = (a + step).clamp(lower, upper);
    let mut fb = f.eval(&[b])?;
    if fb < fa {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
        step = -step;
    }
    let mut c = (b + GOLDEN * step).clamp(lower, upper);
    let mut fc = f.eval(&[c])?;
    while fc > fb && f.count < opts.max_evaluations {
        if c == lower || c == upper {
            break;
        }
        a = b;
        b = c;
        fb = fc;
        step *= GOLDEN;
        c = (b + GOLDEN * step).clamp(lower, upper);
        fc = f.eval(&[c])?;
    }
    let (mut lo, mut hi) = if a < c { (a, c) } else { (c, a) };
    let mut x1 = hi - INV_GOLDEN * (hi - lo);
    let mut x2 = lo + INV_GOLDEN * (hi - lo);
    let mut f1 = f.eval(&[x1])?;
    let mut f2 = f.eval(&[x2])?;
    while hi - lo > opts.tol && f.count < opts.max_evaluations {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_GOLDEN * (hi - lo);
            f1 = f.eval(&[x1])?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_GOLDEN * (hi - lo);
            f2 = f.eval(&[x2])?;
        }
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for (x, v) in [(b, fb), (c, fc)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok(Optimum {
        x: vec![best.0],
        value: best.1,
        evaluations: 0,
        converged: hi - lo <= opts.tol,
        at_boundary: false,
    })
}

fn nelder_mead<F>(
    f: &mut Counted<F>,
    start: &[f64],
    lower: f64,
    upper: f64,
    opts: &Options,
) -> Result<Optimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let p = start.len();
    let clamp =
        |x: Vec<f64>| -> Vec<f64> { x.into_iter().map(|v| v.clamp(lower, upper)).collect() };
    // minimize −f
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(p + 1);
    simplex.push((start.to_vec(), -f.eval(start)?));
    for k in 0..p {
        let mut x = start.to_vec();
        x[k] += if x[k] + opts.initial_step <= upper {
            opts.initial_step
        } else {
            -opts.initial_step
        };
        let x = clamp(x);
        let v = -f.eval(&x)?;
        simplex.push((x, v));
    }
    let mut converged = false;
    while f.count < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex
            .iter()
            .skip(1)
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter <= opts.tol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..p)
            .map(|j| simplex[..p].iter().map(|(x, _)| x[j]).sum::<f64>() / p as f64)
            .collect();
        let worst = simplex[p].clone();
        let toward = |t: f64| -> Vec<f64> {
            clamp(
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect(),
            )
        };
        let xr = toward(-1.0);
        let fr = -f.eval(&xr)?;
        if fr < simplex[0].1 {
            let xe = toward(-2.0);
            let fe = -f.eval(&xe)?;
            simplex[p] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[p - 1].1 {
            simplex[p] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = toward(-0.5);
                let v = -f.eval(&x)?;
                (x, v)
            } else {
                let x = toward(0.5);
                let v = -f.eval(&x)?;
                (x, v)
            };
            if fc < worst.1.min(fr) {
                simplex[p] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best
                        .iter()
                        .zip(&item.0)
                        .map(|(b, x)| b + 0.5 * (x - b))
                        .collect();
                    let v = -f.eval(&x)?;
                    *item = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(Optimum {
        x: simplex[0].0.clone(),
        value: -simplex[0].1,
        evaluations: 0,
        converged,
        at_boundary: false,
    })
}

/// Central second-difference Hessian of `f` at `x` with step `s`.
pub fn hessian<F>(mut f: F, x: &[f64], s: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let p = x.len();
    let f0 = f(x)?;
    let mut hm = DMatrix::zeros(p, p);
    let shifted = |deltas: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(j, d) in deltas {
            y[j] += d;
        }
        y
    };
    for j in 0..p {
        let fp = f(&shifted(&[(j, s)]))?;
        let fm = f(&shifted(&[(j, -s)]))?;
        hm[(j, j)] = (fp - 2.0 * f0 + fm) / (s * s);
    }
    for j in 0..p {
        for k in j + 1..p {
            let fpp = f(&shifted(&[(j, s), (k, s)]))?;
            let fpm = f(&shifted(&[(j, s), (k, -s)]))?;
            let fmp = f(&shifted(&[(j, -s), (k, s)]))?;
            let fmm = f(&shifted(&[(j, -s), (k, -s)]))?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * s * s);
            hm[(j, k)] = v;
            hm[(k, j)] = v;
        }
    }
    Ok(hm)
}

/// Central-difference gradient.
pub fn gradient<F>(mut f: F, x: &[f64], s: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut g = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let mut y = x.to_vec();
        y[j] = x[j] + s;
        let fp = f(&y)?;
        y[j] = x[j] - s;
        let fm = f(&y)?;
        g.push((fp - fm) / (2.0 * s));
    }
    Ok(g)
}
