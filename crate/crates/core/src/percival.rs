//! The Percival functional `P_ω(x) = ∫ A(x(θ))·x_{,i}(θ) ω^i d²θ` on torus
//! embeddings `x: 𝕋² → ℝ³`, its first variation, and a stationary solve.
//!
//! Embeddings are stored in cylindrical form: `R(θ)`, `Z(θ)` and
//! `φ(θ) = 2π(w₁θ¹ + w₂θ²) + λ(θ)` with `R`, `Z`, `λ` real Fourier series of
//! cutoff `K` in each angle and integer windings `(w₁, w₂)`.

use std::f64::consts::TAU;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{eval_a, eval_b, FieldModel};
use crate::fluxes::{FnLoop, Homology, Loop};
use crate::geometry::{Point3, Vec3};
use crate::volume::SurfaceMesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    pub w1: f64,
    pub w2: f64,
}

impl FrequencyVector {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        if !(w1.is_finite() && w2.is_finite()) || (w1 == 0.0 && w2 == 0.0) {
            return Err(Error::InvalidParameter(
                "frequency vector must be finite and nonzero".into(),
            ));
        }
        Ok(Self { w1, w2 })
    }

    /// `ω = (1, ι)`.
    pub fn from_iota(iota: f64) -> Result<Self> {
        Self::new(1.0, iota)
    }

    pub fn iota(&self) -> f64 {
        self.w2 / self.w1
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(s * self.w1, s * self.w2)
    }
}

/// Evaluation grid `n1 × n2` on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub n1: usize,
    pub n2: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self { n1: 64, n2: 64 }
    }
}

impl Grid {
    fn len(&self) -> usize {
        self.n1 * self.n2
    }

    fn theta(&self, j: usize) -> [f64; 2] {
        [
            (j / self.n2) as f64 / self.n1 as f64,
            (j % self.n2) as f64 / self.n2 as f64,
        ]
    }
}

/// Real Fourier modes of one component: `(0, 0)` then the half-plane
/// `m > 0 or (m = 0, n > 0)`, each with a cosine and a sine coefficient.
fn half_plane(k: usize) -> Vec<(i32, i32)> {
    let k = k as i32;
    let mut out: Vec<(i32, i32)> = (1..=k).map(|n| (0, n)).collect();
    for m in 1..=k {
        for n in -k..=k {
            out.push((m, n));
        }
    }
    out
}

/// Component index in [`TorusEmbedding::coeffs`].
pub const R: usize = 0;
pub const Z: usize = 1;
pub const LAMBDA: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusEmbedding {
    pub k: usize,
    pub winding: [i32; 2],
    /// `R`, `Z`, `λ`, each `[a₀₀, a₁, b₁, a₂, b₂, …]` over the half-plane modes.
    pub coeffs: [Vec<f64>; 3],
}

impl TorusEmbedding {
    pub fn n_coeffs(k: usize) -> usize {
        (2 * k + 1) * (2 * k + 1)
    }

    pub fn zeros(k: usize, winding: [i32; 2]) -> Self {
        let n = Self::n_coeffs(k);
        Self {
            k,
            winding,
            coeffs: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    pub fn modes(&self) -> Vec<(i32, i32)> {
        half_plane(self.k)
    }

    /// Coefficient slot of the cosine (`sine = false`) or sine term of a mode.
    pub fn index(&self, mode: (i32, i32), sine: bool) -> Option<usize> {
        if mode == (0, 0) {
            return (!sine).then_some(0);
        }
        let pos = self.modes().iter().position(|m| *m == mode)?;
        Some(1 + 2 * pos + usize::from(sine))
    }

    /// Projects `f(θ¹, θ²) = (R, Z, λ)` onto the modes by sampling on a fine
    /// grid.
    pub fn from_fn<F: Fn(f64, f64) -> [f64; 3]>(k: usize, winding: [i32; 2], f: F) -> Result<Self> {
        let n = (4 * k + 4).next_power_of_two();
        let grid = Grid { n1: n, n2: n };
        let spec = Spectral::new(grid);
        let mut out = Self::zeros(k, winding);
        let samples: Vec<[f64; 3]> = (0..grid.len())
            .map(|j| {
                let t = grid.theta(j);
                f(t[0], t[1])
            })
            .collect();
        for c in 0..3 {
            let vals: Vec<f64> = samples.iter().map(|s| s[c]).collect();
            let w = spec.adjoint_transform(&vals);
            let scale = 1.0 / grid.len() as f64;
            out.coeffs[c][0] = w[0].re * scale;
            for (p, &(m, nn)) in out.modes().iter().enumerate() {
                let wk = w[spec.slot(m, nn)];
                out.coeffs[c][1 + 2 * p] = 2.0 * wk.re * scale;
                out.coeffs[c][2 + 2 * p] = 2.0 * wk.im * scale;
            }
        }
        if out.coeffs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "embedding samples are not finite".into(),
            ));
        }
        Ok(out)
    }

    /// `R = r_c + r cos 2πθ²`, `Z = z_c ∓ r sin 2πθ²`, `φ = 2πθ¹`; the minus
    /// sign (clockwise) when `clockwise`.
    pub fn circular(k: usize, r_c: f64, z_c: f64, r: f64, clockwise: bool) -> Self {
        let mut e = Self::zeros(k.max(1), [1, 0]);
        let s = if clockwise { -1.0 } else { 1.0 };
        e.coeffs[R][0] = r_c;
        e.coeffs[Z][0] = z_c;
        let a = e.index((0, 1), false).unwrap_or(1);
        e.coeffs[R][a] = r;
        e.coeffs[Z][a + 1] = s * r;
        e
    }

    /// The same surface with cutoff `k`, truncating or zero-padding modes.
    pub fn with_cutoff(&self, k: usize) -> Self {
        let mut out = Self::zeros(k, self.winding);
        for c in 0..3 {
            out.coeffs[c][0] = self.coeffs[c][0];
            for (p, &m) in self.modes().iter().enumerate() {
                if let Some(i) = out.index(m, false) {
                    out.coeffs[c][i] = self.coeffs[c][1 + 2 * p];
                    out.coeffs[c][i + 1] = self.coeffs[c][2 + 2 * p];
                }
            }
        }
        out
    }

    /// `(R, Z, λ)` and their derivatives at a single point, by direct summation.
    fn local(&self, th: [f64; 2]) -> [[f64; 3]; 3] {
        let mut u = [[0.0; 3]; 3];
        for c in 0..3 {
            u[c][0] = self.coeffs[c][0];
        }
        for (p, &(m, n)) in self.modes().iter().enumerate() {
            let arg = TAU * (m as f64 * th[0] + n as f64 * th[1]);
            let (s, co) = arg.sin_cos();
            for c in 0..3 {
                let (a, b) = (self.coeffs[c][1 + 2 * p], self.coeffs[c][2 + 2 * p]);
                u[c][0] += a * co + b * s;
                let d = -a * s + b * co;
                u[c][1] += TAU * m as f64 * d;
                u[c][2] += TAU * n as f64 * d;
            }
        }
        u
    }

    /// `x`, `∂x/∂θ¹`, `∂x/∂θ²` at `θ`.
    pub fn eval(&self, th: [f64; 2]) -> (Point3, Vec3, Vec3) {
        let u = self.local(th);
        let p = Local::from_components(&u, th, self.winding);
        (p.x, p.dx[0], p.dx[1])
    }

    /// The loop `s ↦ x(θ)` along `θ^i` at fixed other angle.
    pub fn coordinate_loop(&self, i: usize, other: f64) -> impl Loop + '_ {
        let th = move |s: f64| if i == 0 { [s, other] } else { [other, s] };
        FnLoop {
            point: move |s| self.eval(th(s)).0,
            tangent: move |s| {
                let (_, a, b) = self.eval(th(s));
                if i == 0 {
                    a
                } else {
                    b
                }
            },
            homology: if i == 0 {
                Homology::Toroidal
            } else {
                Homology::Poloidal
            },
        }
    }

    pub fn mesh(&self, grid: Grid) -> Result<SurfaceMesh> {
        let spec = Spectral::new(grid);
        let g = spec.evaluate(self);
        SurfaceMesh::new(grid.n1, grid.n2, g.points.iter().map(|p| p.x).collect())
    }

    /// Mean distance of the grid points from the circle `R = r_c, Z = z_c`.
    pub fn mean_radius(&self, r_c: f64, z_c: f64, grid: Grid) -> f64 {
        let g = Spectral::new(grid).evaluate(self);
        g.points
            .iter()
            .map(|p| (p.u[R][0] - r_c).hypot(p.u[Z][0] - z_c))
            .sum::<f64>()
            / g.points.len() as f64
    }
}

/// Geometry at one grid point.
#[derive(Debug, Clone, Copy)]
struct Local {
    /// `[component][value, ∂₁, ∂₂]`.
    u: [[f64; 3]; 3],
    x: Point3,
    dx: [Vec3; 2],
    /// Unit vectors `e_R`, `e_φ`.
    e_r: Vec3,
    e_phi: Vec3,
}

impl Local {
    fn from_components(u: &[[f64; 3]; 3], th: [f64; 2], winding: [i32; 2]) -> Self {
        let phi = TAU * (winding[0] as f64 * th[0] + winding[1] as f64 * th[1]) + u[LAMBDA][0];
        let (s, c) = phi.sin_cos();
        let e_r = Vec3::new(c, s, 0.0);
        let e_phi = Vec3::new(-s, c, 0.0);
        let rr = u[R][0];
        let x = e_r * rr + Vec3::new(0.0, 0.0, u[Z][0]);
        let d = |i: usize| {
            let dphi = TAU * winding[i] as f64 + u[LAMBDA][i + 1];
            e_r * u[R][i + 1] + e_phi * (rr * dphi) + Vec3::new(0.0, 0.0, u[Z][i + 1])
        };
        Self {
            u: *u,
            x,
            dx: [d(0), d(1)],
            e_r,
            e_phi,
        }
    }

    fn d_omega(&self, omega: &FrequencyVector) -> Vec3 {
        self.dx[0] * omega.w1 + self.dx[1] * omega.w2
    }
}

struct GridEval {
    points: Vec<Local>,
}

/// 2D FFTs on a fixed grid.
struct Spectral {
    grid: Grid,
    f1: Arc<dyn Fft<f64>>,
    f2: Arc<dyn Fft<f64>>,
    i1: Arc<dyn Fft<f64>>,
    i2: Arc<dyn Fft<f64>>,
}

impl Spectral {
    fn new(grid: Grid) -> Self {
        let mut p = FftPlanner::new();
        Self {
            grid,
            f1: p.plan_fft_forward(grid.n1),
            f2: p.plan_fft_forward(grid.n2),
            i1: p.plan_fft_inverse(grid.n1),
            i2: p.plan_fft_inverse(grid.n2),
        }
    }

    fn slot(&self, m: i32, n: i32) -> usize {
        let a = m.rem_euclid(self.grid.n1 as i32) as usize;
        let b = n.rem_euclid(self.grid.n2 as i32) as usize;
        a * self.grid.n2 + b
    }

    fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let (a, b) = if inverse {
            (&self.i1, &self.i2)
        } else {
            (&self.f1, &self.f2)
        };
        for row in buf.chunks_mut(n2) {
            b.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n1];
        for j in 0..n2 {
            for i in 0..n1 {
                col[i] = buf[i * n2 + j];
            }
            a.process(&mut col);
            for i in 0..n1 {
                buf[i * n2 + j] = col[i];
            }
        }
    }

    /// `W_k = Σ_j w_j e^{2πi k·θ_j}` for all grid wavenumbers.
    fn adjoint_transform(&self, w: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = w.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, true);
        buf
    }

    /// Grid values of a component or its derivative (`which` = 0, 1, 2).
    fn synthesize(&self, coeffs: &[f64], modes: &[(i32, i32)], which: usize) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        if which == 0 {
            buf[0] += coeffs[0];
        }
        for (p, &(m, n)) in modes.iter().enumerate() {
            let c = Complex64::new(coeffs[1 + 2 * p], -coeffs[2 + 2 * p]) * 0.5;
            let mult = multiplier(m, n, which);
            buf[self.slot(m, n)] += mult * c;
            buf[self.slot(-m, -n)] += mult.conj() * c.conj();
        }
        self.fft2(&mut buf, true);
        buf.iter().map(|c| c.re).collect()
    }

    /// Transpose of [`Self::synthesize`].
    fn synthesize_adjoint(&self, w: &[f64], modes: &[(i32, i32)], which: usize, out: &mut [f64]) {
        let wk = self.adjoint_transform(w);
        if which == 0 {
            out[0] += wk[0].re;
        }
        for (p, &(m, n)) in modes.iter().enumerate() {
            let v = multiplier(m, n, which) * wk[self.slot(m, n)];
            out[1 + 2 * p] += v.re;
            out[2 + 2 * p] += v.im;
        }
    }

    fn evaluate(&self, x: &TorusEmbedding) -> GridEval {
        let modes = x.modes();
        let mut u = vec![[[0.0; 3]; 3]; self.grid.len()];
        for c in 0..3 {
            for which in 0..3 {
                for (j, v) in self
                    .synthesize(&x.coeffs[c], &modes, which)
                    .into_iter()
                    .enumerate()
                {
                    u[j][c][which] = v;
                }
            }
        }
        let points = u
            .iter()
            .enumerate()
            .map(|(j, u)| Local::from_components(u, self.grid.theta(j), x.winding))
            .collect();
        GridEval { points }
    }
}

fn multiplier(m: i32, n: i32, which: usize) -> Complex64 {
    match which {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, TAU * m as f64),
        _ => Complex64::new(0.0, TAU * n as f64),
    }
}

fn check_grid(x: &TorusEmbedding, grid: Grid) -> Result<()> {
    let need = 2 * x.k + 1;
    if grid.n1 < need || grid.n2 < need {
        return Err(Error::InvalidParameter(format!(
            "grid {}×{} does not resolve cutoff {}",
            grid.n1, grid.n2, x.k
        )));
    }
    if x.coeffs
        .iter()
        .any(|c| c.len() != TorusEmbedding::n_coeffs(x.k))
    {
        return Err(Error::InvalidParameter(
            "coefficient count does not match the cutoff".into(),
        ));
    }
    Ok(())
}

/// `P_ω(x)` by the periodic trapezoid rule on `grid`.
pub fn eval_p(
    field: &dyn FieldModel,
    x: &TorusEmbedding,
    omega: &FrequencyVector,
    grid: Grid,
) -> Result<f64> {
    if !field.capabilities().vector_potential {
        return Err(Error::MissingCapability("a vector potential"));
    }
    check_grid(x, grid)?;
    let g = Spectral::new(grid).evaluate(x);
    let terms = g
        .points
        .par_iter()
        .map(|p| Ok(eval_a(field, &p.x)?.dot(&p.d_omega(omega))))
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercivalResult {
    /// `P_ω`, when the field has a vector potential.
    pub p: Option<f64>,
    /// RMS over the grid of `|D − cB|` with `D = x_{,i} ω^i`.
    pub residual: f64,
    /// `c = D·B/|B|²` on the grid.
    pub c_field: Vec<f64>,
    pub c_bar: f64,
}

impl PercivalResult {
    pub fn c_single_signed(&self) -> bool {
        self.c_field.iter().all(|c| *c > 0.0) || self.c_field.iter().all(|c| *c < 0.0)
    }
}

fn perpendicular(d: &Vec3, b: &Vec3) -> Result<(Vec3, f64)> {
    let b2 = b.norm_squared();
    if b2 == 0.0 || !b2.is_finite() {
        return Err(Error::SingularField);
    }
    let c = d.dot(b) / b2;
    Ok((d - b * c, c))
}

/// Defect of `D = x_{,i} ω^i` from parallelism with `B`, with `c` eliminated
/// pointwise.
pub fn first_variation_residual(
    field: &dyn FieldModel,
    x: &TorusEmbedding,
    omega: &FrequencyVector,
    grid: Grid,
) -> Result<PercivalResult> {
    check_grid(x, grid)?;
    let g = Spectral::new(grid).evaluate(x);
    let local = g
        .points
        .par_iter()
        .map(|p| {
            let b = eval_b(field, &p.x)?;
            let (r, c) = perpendicular(&p.d_omega(omega), &b)?;
            Ok((r.norm_squared(), c))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = local.len() as f64;
    let residual = (local.iter().map(|l| l.0).sum::<f64>() / n).sqrt();
    let c_field: Vec<f64> = local.iter().map(|l| l.1).collect();
    let c_bar = c_field.iter().sum::<f64>() / n;
    let p = if field.capabilities().vector_potential {
        Some(eval_p(field, x, omega, grid)?)
    } else {
        None
    };
    Ok(PercivalResult {
        p,
        residual,
        c_field,
        c_bar,
    })
}

/// `∂P/∂(coefficients)` from the Euler–Lagrange density `δP = ∫ δx·(D × B)`,
/// laid out as `[R, Z, λ]`.
pub fn percival_gradient(
    field: &dyn FieldModel,
    x: &TorusEmbedding,
    omega: &FrequencyVector,
    grid: Grid,
) -> Result<Vec<f64>> {
    check_grid(x, grid)?;
    let spec = Spectral::new(grid);
    let g = spec.evaluate(x);
    let n = g.points.len() as f64;
    let dens = g
        .points
        .par_iter()
        .map(|p| {
            let gv = p.d_omega(omega).cross(&eval_b(field, &p.x)?) / n;
            Ok([gv.dot(&p.e_r), gv.z, p.u[R][0] * gv.dot(&p.e_phi)])
        })
        .collect::<Result<Vec<[f64; 3]>>>()?;
    let modes = x.modes();
    let nc = TorusEmbedding::n_coeffs(x.k);
    let mut out = vec![0.0; 3 * nc];
    for c in 0..3 {
        let w: Vec<f64> = dens.iter().map(|d| d[c]).collect();
        spec.synthesize_adjoint(&w, &modes, 0, &mut out[c * nc..(c + 1) * nc]);
    }
    Ok(out)
}

/// `(Φ₁, Φ₂) = ∂P/∂ω` by central differences of `P` at the embeddings
/// returned by `stationary(ω)`.
pub fn flux_from_dp_domega(
    field: &dyn FieldModel,
    stationary: &dyn Fn(&FrequencyVector) -> Result<TorusEmbedding>,
    omega: &FrequencyVector,
    h: f64,
    grid: Grid,
) -> Result<[f64; 2]> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    let p_at = |w1: f64, w2: f64| {
        let w = FrequencyVector::new(w1, w2)?;
        eval_p(field, &stationary(&w)?, &w, grid)
    };
    let d1 = (p_at(omega.w1 + h, omega.w2)? - p_at(omega.w1 - h, omega.w2)?) / (2.0 * h);
    let d2 = (p_at(omega.w1, omega.w2 + h)? - p_at(omega.w1, omega.w2 - h)?) / (2.0 * h);
    Ok([d1, d2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub grid: Grid,
    pub tol: f64,
    pub max_iter: usize,
    pub max_cg: usize,
    /// Coefficients held fixed to remove the translations of `θ`, as
    /// `(component, mode, sine)`.
    pub pins: [(usize, (i32, i32), bool); 2],
    /// Hold `λ` at its initial value. With `λ = 0` the torus is solved for in
    /// straight-field-line form, which removes the freedom to slide the
    /// parametrization along the field lines.
    pub freeze_lambda: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grid: Grid::default(),
            tol: 1e-8,
            max_iter: 60,
            max_cg: 400,
            pins: [(LAMBDA, (0, 0), false), (Z, (0, 1), false)],
            freeze_lambda: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

/// Residual vector `(D − cB)/√n` and the local Jacobians with respect to
/// `[component][value, ∂₁, ∂₂]` at every grid point.
struct Linearization {
    residual: Vec<Vec3>,
    jac: Vec<[[Vec3; 3]; 3]>,
}

fn local_residual(
    field: &dyn FieldModel,
    u: &[[f64; 3]; 3],
    th: [f64; 2],
    winding: [i32; 2],
    omega: &FrequencyVector,
) -> Result<Vec3> {
    let p = Local::from_components(u, th, winding);
    let b = eval_b(field, &p.x)?;
    Ok(perpendicular(&p.d_omega(omega), &b)?.0)
}

fn residual_only(
    field: &dyn FieldModel,
    spec: &Spectral,
    x: &TorusEmbedding,
    omega: &FrequencyVector,
) -> Result<Vec<Vec3>> {
    let g = spec.evaluate(x);
    let scale = 1.0 / (g.points.len() as f64).sqrt();
    g.points
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            Ok(local_residual(field, &p.u, spec.grid.theta(j), x.winding, omega)? * scale)
        })
        .collect()
}

fn linearize(
    field: &dyn FieldModel,
    spec: &Spectral,
    x: &TorusEmbedding,
    omega: &FrequencyVector,
) -> Result<Linearization> {
    let g = spec.evaluate(x);
    let scale = 1.0 / (g.points.len() as f64).sqrt();
    let out = g
        .points
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            let th = spec.grid.theta(j);
            let r = local_residual(field, &p.u, th, x.winding, omega)? * scale;
            let mut jac = [[Vec3::zeros(); 3]; 3];
            for c in 0..3 {
                for w in 0..3 {
                    let h = 1e-6 * p.u[c][w].abs().max(1.0);
                    let mut up = p.u;
                    let mut dn = p.u;
                    up[c][w] += h;
                    dn[c][w] -= h;
                    let d = local_residual(field, &up, th, x.winding, omega)?
                        - local_residual(field, &dn, th, x.winding, omega)?;
                    jac[c][w] = d * (scale / (2.0 * h));
                }
            }
            Ok((r, jac))
        })
        .collect::<Result<Vec<_>>>()?;
    let (residual, jac) = out.into_iter().unzip();
    Ok(Linearization { residual, jac })
}

fn rms(r: &[Vec3]) -> f64 {
    r.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
}

/// Matrix-free `J` and `Jᵀ` for the coefficient vector `[R, Z, λ]`, with a
/// diagonal column scaling (zero for pinned coefficients).
struct Operator<'a> {
    spec: &'a Spectral,
    lin: &'a Linearization,
    modes: Vec<(i32, i32)>,
    nc: usize,
    scale: Vec<f64>,
}

impl Operator<'_> {
    fn apply(&self, y: &[f64]) -> Vec<Vec3> {
        let v: Vec<f64> = y.iter().zip(&self.scale).map(|(a, s)| a * s).collect();
        let mut out = vec![Vec3::zeros(); self.lin.jac.len()];
        for c in 0..3 {
            let coeffs = &v[c * self.nc..(c + 1) * self.nc];
            for w in 0..3 {
                let vals = self.spec.synthesize(coeffs, &self.modes, w);
                for (j, val) in vals.iter().enumerate() {
                    out[j] += self.lin.jac[j][c][w] * *val;
                }
            }
        }
        out
    }

    fn adjoint(&self, r: &[Vec3]) -> Vec<f64> {
        let mut out = vec![0.0; 3 * self.nc];
        for c in 0..3 {
            for w in 0..3 {
                let weights: Vec<f64> = r
                    .iter()
                    .zip(&self.lin.jac)
                    .map(|(rv, jj)| jj[c][w].dot(rv))
                    .collect();
                self.spec.synthesize_adjoint(
                    &weights,
                    &self.modes,
                    w,
                    &mut out[c * self.nc..(c + 1) * self.nc],
                );
            }
        }
        for (o, s) in out.iter_mut().zip(&self.scale) {
            *o *= s;
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// CGLS for `min ‖J y + r‖² + μ‖y‖²`.
fn cgls(op: &Operator, r: &[Vec3], mu: f64, max_iter: usize) -> Vec<f64> {
    let n = 3 * op.nc;
    let mut y = vec![0.0; n];
    let mut res: Vec<Vec3> = r.iter().map(|v| -v).collect();
    let mut s = op.adjoint(&res);
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let gamma0 = gamma;
    for _ in 0..max_iter {
        if gamma <= 1e-24 * gamma0 || gamma == 0.0 {
            break;
        }
        let q = op.apply(&p);
        let qq: f64 = q.iter().map(|v| v.norm_squared()).sum::<f64>() + mu * dot(&p, &p);
        let alpha = gamma / qq;
        for i in 0..n {
            y[i] += alpha * p[i];
        }
        for (rv, qv) in res.iter_mut().zip(&q) {
            *rv -= qv * alpha;
        }
        s = op.adjoint(&res);
        for i in 0..n {
            s[i] -= mu * y[i];
        }
        let gnew = dot(&s, &s);
        let beta = gnew / gamma;
        gamma = gnew;
        for i in 0..n {
            p[i] = s[i] + beta * p[i];
        }
    }
    y
}

/// Levenberg–Marquardt on the grid residual `D − cB` over the Fourier
/// coefficients, with the linear least-squares steps solved matrix-free by
/// CGLS. Stops when the RMS residual is below `opts.tol`.
pub fn solve_stationary(
    field: &dyn FieldModel,
    omega: &FrequencyVector,
    init: &TorusEmbedding,
    opts: &SolverOptions,
) -> Result<(TorusEmbedding, PercivalResult, SolveReport)> {
    check_grid(init, opts.grid)?;
    let spec = Spectral::new(opts.grid);
    let modes = init.modes();
    let nc = TorusEmbedding::n_coeffs(init.k);
    let mut scale = vec![0.0; 3 * nc];
    for c in 0..3 {
        scale[c * nc] = 1.0;
        for (p, &(m, n)) in modes.iter().enumerate() {
            let s = 1.0 / (1.0 + (m.abs() + n.abs()) as f64);
            scale[c * nc + 1 + 2 * p] = s;
            scale[c * nc + 2 + 2 * p] = s;
        }
    }
    for &(c, mode, sine) in &opts.pins {
        let i = init.index(mode, sine).ok_or_else(|| {
            Error::InvalidParameter(format!("pinned mode {mode:?} is beyond the cutoff"))
        })?;
        scale[c * nc + i] = 0.0;
    }
    if opts.freeze_lambda {
        scale[LAMBDA * nc..].fill(0.0);
    }

    let mut x = init.clone();
    let mut lin = linearize(field, &spec, &x, omega)?;
    let mut res = rms(&lin.residual);
    let mut history = vec![res];
    let mut mu = 1e-3 * res * res;
    let mut iterations = 0;
    while res >= opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let op = Operator {
            spec: &spec,
            lin: &lin,
            modes: modes.clone(),
            nc,
            scale: scale.clone(),
        };
        let mut accepted = false;
        for _ in 0..12 {
            let y = cgls(&op, &lin.residual, mu, opts.max_cg);
            let mut trial = x.clone();
            for c in 0..3 {
                for i in 0..nc {
                    trial.coeffs[c][i] += scale[c * nc + i] * y[c * nc + i];
                }
            }
            match residual_only(field, &spec, &trial, omega) {
                Ok(r) if rms(&r) < res => {
                    x = trial;
                    mu = (mu / 4.0).max(1e-30);
                    accepted = true;
                    break;
                }
                _ => mu = (mu * 8.0).max(1e-20),
            }
        }
        if !accepted {
            break;
        }
        lin = linearize(field, &spec, &x, omega)?;
        res = rms(&lin.residual);
        history.push(res);
        log::debug!("percival iteration {iterations}: residual {res:e}");
    }
    if res >= opts.tol {
        return Err(Error::NoConvergence {
            iterations,
            residual: res,
            last: history,
        });
    }
    let result = first_variation_residual(field, &x, omega, opts.grid)?;
    Ok((
        x,
        result,
        SolveReport {
            iterations,
            residual_history: history,
        },
    ))
}
