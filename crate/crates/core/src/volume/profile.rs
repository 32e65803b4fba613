//! Volume profiles from one-dimensional integrals of `dV/dlabel`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{VolumeMethod, VolumeProfile};
use crate::diagnostics::{
    collect_returns, detect_period, estimate_iota_closest_returns, mean_return_time,
};
use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::fluxes::{flux_derivative, Homology, Loop, DEFAULT_N_QUAD};
use crate::geometry::{Point3, PoloidalAngle, Vec3};
use crate::ode::Tolerances;
use crate::quadrature::{adaptive_gauss, gauss_legendre_on, TrigInterpolant};
use crate::symmetry::{find_lattice_generators, ActionFlow, LatticeOptions};
use crate::tracer::{returns, SectionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileRule {
    /// Adaptive Gauss–Legendre on each grid interval.
    AdaptiveGauss { tol: f64, max_depth: u32 },
    /// Fixed Gauss–Legendre rule on each grid interval.
    Gauss { nodes: usize },
}

impl Default for ProfileRule {
    fn default() -> Self {
        ProfileRule::AdaptiveGauss {
            tol: 1e-9,
            max_depth: 12,
        }
    }
}

/// Integrates `dV/dlabel = f(label)` outward from the reference. `f` returns
/// the value and an error estimate for it. Intervals are integrated in
/// parallel and summed in grid order.
pub fn integrate_profile(
    labels: &[f64],
    reference_label: f64,
    reference_volume: f64,
    f: &(dyn Fn(f64) -> Result<(f64, f64)> + Sync),
    rule: ProfileRule,
    method: VolumeMethod,
) -> Result<VolumeProfile> {
    if labels.is_empty() {
        return Err(Error::Empty("label grid"));
    }
    if labels.iter().any(|l| !l.is_finite()) || labels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "labels must be finite and strictly increasing".into(),
        ));
    }
    if labels[0] < reference_label {
        return Err(Error::InvalidParameter(
            "labels must not precede the reference label".into(),
        ));
    }
    let bounds: Vec<(f64, f64)> = labels
        .iter()
        .scan(reference_label, |prev, &l| {
            let a = *prev;
            *prev = l;
            Some((a, l))
        })
        .collect();
    let pieces: Vec<Result<(f64, f64)>> = bounds
        .par_iter()
        .map(|&(a, b)| integrate_interval(f, a, b, rule, labels.len()))
        .collect();
    let span = labels[labels.len() - 1] - reference_label;
    let derivs: Vec<Result<(f64, f64)>> = labels
        .par_iter()
        .map(|&l| {
            f(l).or_else(|e| {
                if l == reference_label && span > 0.0 {
                    // the reference is often a degenerate surface (the axis)
                    f(l + 1e-9 * span)
                } else {
                    Err(e)
                }
            })
        })
        .collect();

    let mut volumes = Vec::with_capacity(labels.len());
    let mut errors = Vec::with_capacity(labels.len());
    let (mut v, mut e) = (reference_volume, 0.0);
    for p in pieces {
        let (dv, de) = p?;
        v += dv;
        e += de;
        volumes.push(v);
        errors.push(e);
    }
    let dv_dlabel = derivs
        .into_iter()
        .map(|d| d.map(|d| d.0))
        .collect::<Result<Vec<_>>>()?;
    let profile = VolumeProfile {
        labels: labels.to_vec(),
        volumes,
        dv_dlabel,
        error_estimate: errors,
        method,
        reference_label,
        reference_volume,
    };
    if !profile.is_monotone() {
        log::warn!("{method} profile is not monotone; the surfaces may not be nested");
    }
    Ok(profile)
}

fn integrate_interval(
    f: &(dyn Fn(f64) -> Result<(f64, f64)> + Sync),
    a: f64,
    b: f64,
    rule: ProfileRule,
    n_intervals: usize,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    match rule {
        ProfileRule::AdaptiveGauss { tol, max_depth } => {
            let r = adaptive_gauss(
                |x| f(x).map(|v| v.0),
                a,
                b,
                tol / n_intervals as f64,
                max_depth,
            )?;
            Ok((r.value, r.error))
        }
        ProfileRule::Gauss { nodes } => {
            if nodes == 0 {
                return Err(Error::InvalidParameter(
                    "Gauss rule needs at least one node".into(),
                ));
            }
            let (x, w) = gauss_legendre_on(nodes, a, b);
            let vals: Vec<Result<(f64, f64)>> = x.par_iter().map(|&xi| f(xi)).collect();
            let (mut s, mut e) = (0.0, 0.0);
            for (wi, v) in w.iter().zip(vals) {
                let (v, err) = v?;
                s += wi * v;
                e += wi.abs() * err;
            }
            Ok((s, e))
        }
    }
}

/// Profile from the symmetry: `dV/dψ = τ(ψ) T(ψ)`.
pub fn volume_profile_quasisym(
    labels: &[f64],
    reference_label: f64,
    tau_fn: &(dyn Fn(f64) -> Result<f64> + Sync),
    t_fn: &(dyn Fn(f64) -> Result<f64> + Sync),
    rule: ProfileRule,
) -> Result<VolumeProfile> {
    let f = |psi: f64| Ok((tau_fn(psi)? * t_fn(psi)?, 0.0));
    integrate_profile(
        labels,
        reference_label,
        0.0,
        &f,
        rule,
        VolumeMethod::Quasisym,
    )
}

/// Lattice profile: `dV/dψ = Δ(ψ)`, the covolume of the period lattice of
/// the `(u, B)` action on the surface through `seed_fn(ψ)`.
pub fn volume_profile_lattice(
    action: &ActionFlow,
    labels: &[f64],
    reference_label: f64,
    seed_fn: &(dyn Fn(f64) -> Result<Point3> + Sync),
    opts: &LatticeOptions,
    rule: ProfileRule,
) -> Result<VolumeProfile> {
    let f = |psi: f64| {
        let basis = find_lattice_generators(action, seed_fn(psi)?, opts)?;
        Ok((basis.delta, basis.residual))
    };
    integrate_profile(
        labels,
        reference_label,
        0.0,
        &f,
        rule,
        VolumeMethod::Lattice,
    )
}

/// A loop `ρ(θ)` about the centre of a poloidal angle in the plane `φ = phi0`,
/// with the rate `∂ρ/∂label` that carries it to the neighbouring surfaces.
#[derive(Debug, Clone)]
pub struct StarLoop {
    pub angle: PoloidalAngle,
    pub phi0: f64,
    pub rho: TrigInterpolant,
    pub drho: TrigInterpolant,
}

impl StarLoop {
    /// `∂x/∂label` at parameter `s`.
    pub fn displacement(&self, s: f64) -> Vec3 {
        let th = TAU * s;
        let e = self.angle.point(1.0, th, self.phi0) - self.angle.point(0.0, th, self.phi0);
        e * self.drho.eval(s)
    }
}

impl Loop for StarLoop {
    fn point(&self, s: f64) -> Point3 {
        self.angle.point(self.rho.eval(s), TAU * s, self.phi0)
    }

    fn tangent(&self, s: f64) -> Vec3 {
        let h = 1e-5;
        (self.point(s + h) - self.point(s - h)) / (2.0 * h)
    }

    fn homology(&self) -> Homology {
        Homology::Poloidal
    }
}

/// A family of flux surfaces labelled by a minor-radius-like parameter and
/// star-shaped about the centre of `angle` on the section `φ = phi0`.
pub trait SurfaceFamily: Sync {
    fn angle(&self) -> PoloidalAngle;

    fn phi0(&self) -> f64;

    /// The point of the surface on the ray `θ = 0`.
    fn seed(&self, label: f64) -> Point3 {
        self.angle().point(label, 0.0, self.phi0())
    }

    fn section(&self) -> SectionSpec {
        SectionSpec::toroidal(self.phi0())
    }

    fn slice(&self, field: &dyn FieldModel, label: f64) -> Result<StarLoop>;
}

/// Circular tori about the centre of `angle`, labelled by minor radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularSurfaces {
    pub angle: PoloidalAngle,
    pub phi0: f64,
}

impl SurfaceFamily for CircularSurfaces {
    fn angle(&self) -> PoloidalAngle {
        self.angle
    }

    fn phi0(&self) -> f64 {
        self.phi0
    }

    fn slice(&self, _field: &dyn FieldModel, label: f64) -> Result<StarLoop> {
        Ok(StarLoop {
            angle: self.angle,
            phi0: self.phi0,
            rho: TrigInterpolant::new(&[label])?,
            drho: TrigInterpolant::new(&[1.0])?,
        })
    }
}

/// Surfaces located by tracing: the section trace of the field line through
/// the seed is fitted by a Fourier series `ρ(θ)`, and `∂ρ/∂label` comes from
/// fits at `label ± h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracedSurfaces {
    pub angle: PoloidalAngle,
    pub phi0: f64,
    pub n_points: usize,
    pub n_modes: usize,
    pub h: f64,
    pub tol: Tolerances,
    pub t_max: f64,
}

impl TracedSurfaces {
    pub fn new(angle: PoloidalAngle, phi0: f64, tol: Tolerances) -> Self {
        Self {
            angle,
            phi0,
            n_points: 400,
            n_modes: 12,
            h: 1e-4,
            tol,
            t_max: 1e5,
        }
    }

    /// Values of the fitted `ρ(θ)` on `4 n_modes` equispaced angles.
    pub fn fit(&self, field: &dyn FieldModel, label: f64) -> Result<Vec<f64>> {
        let start = self.seed(label);
        let ev = returns(
            field,
            start,
            &self.section(),
            self.n_points,
            self.t_max,
            &self.tol,
        )?;
        let samples: Vec<(f64, f64)> = std::iter::once(start)
            .chain(ev.iter().map(|c| c.point))
            .map(|p| (self.angle.turns(&p), self.angle.radius(&p)))
            .collect();
        fourier_fit(&samples, self.n_modes)
    }
}

impl SurfaceFamily for TracedSurfaces {
    fn angle(&self) -> PoloidalAngle {
        self.angle
    }

    fn phi0(&self) -> f64 {
        self.phi0
    }

    fn slice(&self, field: &dyn FieldModel, label: f64) -> Result<StarLoop> {
        let mid = self.fit(field, label)?;
        let plus = self.fit(field, label + self.h)?;
        let minus = self.fit(field, label - self.h)?;
        let d: Vec<f64> = plus
            .iter()
            .zip(&minus)
            .map(|(p, m)| (p - m) / (2.0 * self.h))
            .collect();
        Ok(StarLoop {
            angle: self.angle,
            phi0: self.phi0,
            rho: TrigInterpolant::new(&mid)?,
            drho: TrigInterpolant::new(&d)?,
        })
    }
}

/// Least-squares trigonometric fit of `(θ in turns, ρ)` samples, returned as
/// its values on `4 n_modes` equispaced angles.
fn fourier_fit(samples: &[(f64, f64)], n_modes: usize) -> Result<Vec<f64>> {
    let m = 2 * n_modes + 1;
    if samples.len() < 2 * m {
        return Err(Error::InsufficientData(format!(
            "{} samples for {n_modes} modes",
            samples.len()
        )));
    }
    let basis = |t: f64, j: usize| {
        if j == 0 {
            return 1.0;
        }
        let k = (j + 1) / 2;
        let a = TAU * k as f64 * t;
        if j % 2 == 1 {
            a.cos()
        } else {
            a.sin()
        }
    };
    let a = DMatrix::from_fn(samples.len(), m, |i, j| basis(samples[i].0, j));
    let b = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::DegenerateGeometry(e.to_string()))?;
    let n = 4 * n_modes;
    Ok((0..n)
        .map(|i| {
            (0..m)
                .map(|j| basis(i as f64 / n as f64, j) * coef[j])
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralOptions {
    pub n_returns: usize,
    /// Near-rational surfaces need more returns before the rotation number
    /// resolves; the count is doubled up to this limit.
    pub max_returns: usize,
    pub tol: Tolerances,
    pub t_max: f64,
    pub n_quad: usize,
    pub rule: ProfileRule,
}

impl Default for GeneralOptions {
    fn default() -> Self {
        Self {
            n_returns: 1000,
            max_returns: 32_000,
            tol: Tolerances::new(1e-12, 1e-13),
            t_max: 1e6,
            n_quad: DEFAULT_N_QUAD,
            rule: ProfileRule::Gauss { nodes: 4 },
        }
    }
}

/// `T̄ · dΦ/dlabel` on one surface of the family, with its error estimate.
pub fn general_integrand(
    field: &dyn FieldModel,
    family: &dyn SurfaceFamily,
    label: f64,
    opts: &GeneralOptions,
) -> Result<(f64, f64)> {
    let angle = family.angle();
    let mut n = opts.n_returns;
    let (series, iota) = loop {
        let series = collect_returns(
            field,
            family.seed(label),
            &family.section(),
            n,
            |x| angle.turns(x),
            opts.t_max * (n / opts.n_returns.max(1)) as f64,
            &opts.tol,
        )?;
        if let Some(period) = detect_period(&series.phis) {
            log::warn!("rational winding on the surface with label {label}");
            return Err(Error::RationalWinding { period });
        }
        match estimate_iota_closest_returns(&series) {
            Ok(iota) => break (series, iota),
            Err(Error::InsufficientData(_)) if 2 * n <= opts.max_returns => {
                log::debug!("label {label}: rotation number unresolved after {n} returns");
                n *= 2;
            }
            Err(e) => return Err(e),
        }
    };
    let mean = mean_return_time(&series, &iota)?;
    let slice = family.slice(field, label)?;
    let dphi = flux_derivative(field, &slice, |_, s| Ok(slice.displacement(s)), opts.n_quad)?;
    let d = dphi.phi.abs();
    Ok((
        mean.mean * d,
        mean.error_estimate * d + mean.mean * dphi.change.abs(),
    ))
}

/// Symmetry-free profile: `dV/dlabel = T̄ dΦ/dlabel` with the mean return time to
/// the section and the flux derivative of a poloidal loop. Needs neither a
/// symmetry nor a vector potential.
pub fn volume_profile_general(
    field: &dyn FieldModel,
    family: &dyn SurfaceFamily,
    labels: &[f64],
    reference_label: f64,
    opts: &GeneralOptions,
) -> Result<VolumeProfile> {
    let f = |label: f64| general_integrand(field, family, label, opts);
    integrate_profile(
        labels,
        reference_label,
        0.0,
        &f,
        opts.rule,
        VolumeMethod::General,
    )
}
