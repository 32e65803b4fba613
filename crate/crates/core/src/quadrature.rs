//! One-dimensional quadrature, interpolation and spectral differentiation.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `P_n(z)` and its derivative.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    (
        x.iter().map(|t| a + h * (t + 1.0)).collect(),
        w.iter().map(|v| v * h).collect(),
    )
}

/// `∫₀¹ f` for 1-periodic `f` with `n` equispaced nodes.
pub fn periodic_trapezoid<F: FnMut(f64) -> f64>(mut f: F, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    (0..n).map(|k| f(k as f64 * h)).sum::<f64>() * h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicQuadrature {
    pub value: f64,
    pub n: usize,
    /// Difference between the last two refinements.
    pub change: f64,
    pub converged: bool,
}

/// Periodic trapezoid starting at `n0` nodes and doubling until successive
/// values differ by less than `tol` or `n_max` is reached. Earlier nodes are
/// reused. Fallible integrands stop the refinement with their error.
pub fn periodic_trapezoid_adaptive<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    n0: usize,
    tol: f64,
    n_max: usize,
) -> Result<PeriodicQuadrature> {
    if n0 == 0 {
        return Err(Error::InvalidParameter("n0 must be positive".into()));
    }
    let mut n = n0;
    let mut sum = 0.0;
    for k in 0..n {
        sum += f(k as f64 / n as f64)?;
    }
    let mut value = sum / n as f64;
    loop {
        if 2 * n > n_max {
            return Ok(PeriodicQuadrature {
                value,
                n,
                change: f64::NAN,
                converged: false,
            });
        }
        let m = 2 * n;
        for k in 0..n {
            sum += f((2 * k + 1) as f64 / m as f64)?;
        }
        n = m;
        let next = sum / n as f64;
        let change = (next - value).abs();
        value = next;
        if change < tol {
            return Ok(PeriodicQuadrature {
                value,
                n,
                change,
                converged: true,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Adaptive Simpson quadrature on `[a, b]` with Richardson correction.
pub fn adaptive_simpson<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<AdaptiveResult> {
    if a == b {
        return Ok(AdaptiveResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut evals = 3;
    let mut err = 0.0;
    let value = simpson_rec(
        &mut f, a, b, fa, fm, fb, whole, tol, max_depth, &mut evals, &mut err,
    )?;
    Ok(AdaptiveResult {
        value,
        error: err,
        evaluations: evals,
    })
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: FnMut(f64) -> Result<f64>>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    evals: &mut usize,
    err: &mut f64,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    *evals += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        *err += delta.abs() / 15.0;
        return Ok(left + right + delta / 15.0);
    }
    Ok(
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, evals, err)?
            + simpson_rec(
                f,
                m,
                b,
                fm,
                frm,
                fb,
                right,
                0.5 * tol,
                depth - 1,
                evals,
                err,
            )?,
    )
}

/// Adaptive Gauss–Legendre quadrature on `[a, b]`: a 7-point rule on each
/// interval is compared with the rule on its two halves. The endpoints are
/// never evaluated, which suits integrands undefined at a boundary.
pub fn adaptive_gauss<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<AdaptiveResult> {
    let (x, w) = gauss_legendre(GAUSS_ORDER);
    let rule = |f: &mut F, a: f64, b: f64| -> Result<f64> {
        let h = 0.5 * (b - a);
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            s += wi * f(a + h * (xi + 1.0))?;
        }
        Ok(s * h)
    };
    let mut out = AdaptiveResult {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };
    if a == b {
        return Ok(out);
    }
    let whole = rule(&mut f, a, b)?;
    out.evaluations += GAUSS_ORDER;
    // explicit stack, left to right, so the summation order is fixed
    let mut stack = vec![(a, b, whole, tol, max_depth)];
    while let Some((a, b, whole, tol, depth)) = stack.pop() {
        let m = 0.5 * (a + b);
        let left = rule(&mut f, a, m)?;
        let right = rule(&mut f, m, b)?;
        out.evaluations += 2 * GAUSS_ORDER;
        let delta = (left + right - whole).abs();
        if depth == 0 || delta <= tol {
            out.value += left + right;
            out.error += delta;
        } else {
            stack.push((m, b, right, 0.5 * tol, depth - 1));
            stack.push((a, m, left, 0.5 * tol, depth - 1));
        }
    }
    Ok(out)
}

const GAUSS_ORDER: usize = 7;

/// Natural cubic spline through `(x_i, y_i)` with increasing `x`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InsufficientData(
                "spline needs two or more points".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "spline abscissae must increase".into(),
            ));
        }
        // tridiagonal system for the second derivatives
        let mut m = vec![0.0; n];
        if n > 2 {
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let a = h0 / 6.0;
                let b = (h0 + h1) / 3.0;
                let cc = h1 / 6.0;
                let rhs = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
                let denom = b - a * c[i - 1];
                c[i] = cc / denom;
                d[i] = (rhs - a * d[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        Ok(Self { x, y, m })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = self.x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Spectral derivative `d/dθ` of samples of a 1-periodic function on `n`
/// equispaced nodes. The Nyquist mode is dropped for even `n`.
pub fn spectral_derivative(values: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let freq = if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        if n % 2 == 0 && k == n / 2 {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c *= Complex64::new(0.0, 2.0 * PI * freq);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Trigonometric interpolant of samples of a 1-periodic function.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl TrigInterpolant {
    pub fn new(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::InsufficientData("no samples".into()));
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        for c in buf.iter_mut() {
            *c /= n as f64;
        }
        Ok(Self { n, coeffs: buf })
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let n = self.n;
        let mut s = self.coeffs[0].re;
        for k in 1..=(n - 1) / 2 {
            let e = Complex64::from_polar(1.0, 2.0 * PI * k as f64 * theta);
            s += 2.0 * (self.coeffs[k] * e).re;
        }
        if n % 2 == 0 {
            s += self.coeffs[n / 2].re * (PI * n as f64 * theta).cos();
        }
        s
    }
}
