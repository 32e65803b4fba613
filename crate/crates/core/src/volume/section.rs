//! Section-based volumes: `V = ∫_D T β` over a disk transverse to `B`, and
//! the same integral pushed to the disk boundary by contracting along rays.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{VolumeEstimate, VolumeMethod};
use crate::error::{Error, Result};
use crate::field::{eval_b, FieldModel};
use crate::geometry::{Point3, Vec3};
use crate::ode::Tolerances;
use crate::quadrature::{adaptive_gauss, gauss_legendre_on, CubicSpline, TrigInterpolant};
use crate::tracer::{returns, SectionSpec};

/// A planar section with coordinates `x = origin + u e1 + v e2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionFrame {
    pub section: SectionSpec,
    pub origin: Point3,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl SectionFrame {
    pub fn new(section: SectionSpec) -> Result<Self> {
        let (origin, e1, e2) = section
            .frame()
            .ok_or_else(|| Error::InvalidParameter(format!("{section:?} is not a plane")))?;
        Ok(Self {
            section,
            origin,
            e1,
            e2,
        })
    }

    pub fn point(&self, u: f64, v: f64) -> Point3 {
        self.origin + self.e1 * u + self.e2 * v
    }

    /// `β(e1, e2) = B·(e1 × e2)`.
    pub fn density(&self, field: &dyn FieldModel, x: &Point3) -> Result<f64> {
        Ok(eval_b(field, x)?.dot(&self.e1.cross(&self.e2)))
    }

    /// First return time to the section from `x`.
    pub fn return_time(
        &self,
        field: &dyn FieldModel,
        x: Point3,
        tol: &Tolerances,
        t_max: f64,
    ) -> Result<f64> {
        Ok(returns(field, x, &self.section, 1, t_max, tol)?[0].t)
    }
}

/// A disk in section coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionDisk {
    pub section: SectionSpec,
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Eq1Grid {
    /// Gauss–Legendre nodes in the radius.
    pub n_radial: usize,
    /// Equispaced nodes in the angle.
    pub n_angular: usize,
}

impl Default for Eq1Grid {
    fn default() -> Self {
        Self {
            n_radial: 64,
            n_angular: 64,
        }
    }
}

/// Polar nodes `(u, v, weight)` on a disk; angular index is the fast one.
fn polar_nodes(
    center: [f64; 2],
    radius: f64,
    n_radial: usize,
    n_angular: usize,
) -> Vec<(f64, f64, f64)> {
    let (rho, w) = gauss_legendre_on(n_radial, 0.0, radius);
    let dth = TAU / n_angular as f64;
    let mut out = Vec::with_capacity(n_radial * n_angular);
    for (r, wr) in rho.iter().zip(&w) {
        for k in 0..n_angular {
            let (s, c) = (k as f64 * dth).sin_cos();
            out.push((center[0] + r * c, center[1] + r * s, wr * r * dth));
        }
    }
    out
}

/// Sums `values·weights` over the full polar grid and over its even angular
/// nodes, returning the sum and the difference as an error estimate.
fn polar_sum(values: &[f64], nodes: &[(f64, f64, f64)], n_angular: usize) -> (f64, f64) {
    let mut full = 0.0;
    let mut half = 0.0;
    for (i, (v, n)) in values.iter().zip(nodes).enumerate() {
        full += v * n.2;
        if (i % n_angular) % 2 == 0 {
            half += 2.0 * v * n.2;
        }
    }
    let err = if n_angular % 2 == 0 {
        (full - half).abs()
    } else {
        f64::NAN
    };
    (full, err)
}

/// Direct polar quadrature of `g(u, v) du dv` over a disk.
pub fn disk_integral(
    g: &(dyn Fn(f64, f64) -> Result<f64> + Sync),
    center: [f64; 2],
    radius: f64,
    grid: Eq1Grid,
) -> Result<(f64, f64)> {
    let nodes = polar_nodes(center, radius, grid.n_radial, grid.n_angular);
    let values = nodes
        .par_iter()
        .map(|&(u, v, _)| g(u, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(polar_sum(&values, &nodes, grid.n_angular))
}

/// `∫_D T β` with `T` traced from every quadrature node. Nodes whose return
/// fails are dropped from the sum and counted in `flagged`.
pub fn volume_eq1_section(
    field: &dyn FieldModel,
    disk: &SectionDisk,
    grid: Eq1Grid,
    tol: &Tolerances,
    t_max: f64,
) -> Result<VolumeEstimate> {
    if grid.n_radial == 0 || grid.n_angular == 0 || !(disk.radius >= 0.0) {
        return Err(Error::InvalidParameter(
            "empty quadrature grid or negative radius".into(),
        ));
    }
    let frame = SectionFrame::new(disk.section)?;
    let nodes = polar_nodes(disk.center, disk.radius, grid.n_radial, grid.n_angular);
    let values: Vec<Option<f64>> = nodes
        .par_iter()
        .map(|&(u, v, _)| {
            let x = frame.point(u, v);
            let t = frame.return_time(field, x, tol, t_max);
            match t.and_then(|t| Ok(t * frame.density(field, &x)?)) {
                Ok(val) => Some(val),
                Err(e) => {
                    log::warn!("section node ({u}, {v}) dropped: {e}");
                    None
                }
            }
        })
        .collect();
    let flagged = values.iter().filter(|v| v.is_none()).count();
    if flagged > 0 {
        log::warn!(
            "{flagged} of {} section nodes dropped; the volume is degraded",
            nodes.len()
        );
    }
    let values: Vec<f64> = values.into_iter().map(|v| v.unwrap_or(0.0)).collect();
    let (signed, err) = polar_sum(&values, &nodes, grid.n_angular);
    Ok(VolumeEstimate::from_signed(
        signed,
        err,
        VolumeMethod::Eq1,
        nodes.len(),
        flagged,
    ))
}

/// Return time on a section, tabulated on rays from a centre point and
/// interpolated by cubic splines along rays and trigonometrically across them.
/// Opposite rays share a spline through the centre.
#[derive(Debug, Clone)]
pub struct ReturnTimeTable {
    pub center: [f64; 2],
    pub rho_max: f64,
    radii: Vec<f64>,
    t_center: f64,
    rays: Vec<Vec<f64>>,
    splines: Vec<CubicSpline>,
}

impl ReturnTimeTable {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        field: &dyn FieldModel,
        frame: &SectionFrame,
        center: [f64; 2],
        rho_max: f64,
        n_rays: usize,
        n_radii: usize,
        tol: &Tolerances,
        t_max: f64,
    ) -> Result<Self> {
        if n_rays < 2 || n_rays % 2 != 0 || n_radii < 3 || !(rho_max > 0.0) {
            return Err(Error::InvalidParameter(
                "need an even number of rays, at least 3 radii and a positive extent".into(),
            ));
        }
        let radii: Vec<f64> = (0..n_radii)
            .map(|j| rho_max * j as f64 / (n_radii - 1) as f64)
            .collect();
        let t_center = frame.return_time(field, frame.point(center[0], center[1]), tol, t_max)?;
        let grid: Vec<(usize, usize)> = (0..n_rays)
            .flat_map(|i| (1..n_radii).map(move |j| (i, j)))
            .collect();
        let times = grid
            .par_iter()
            .map(|&(i, j)| {
                let (s, c) = (TAU * i as f64 / n_rays as f64).sin_cos();
                let x = frame.point(center[0] + radii[j] * c, center[1] + radii[j] * s);
                frame.return_time(field, x, tol, t_max)
            })
            .collect::<Result<Vec<_>>>()?;
        let rays: Vec<Vec<f64>> = times.chunks(n_radii - 1).map(<[f64]>::to_vec).collect();
        Self::from_samples(center, radii, t_center, rays)
    }

    /// `radii[0]` is the centre; `rays[i][j - 1]` is the time at `radii[j]`
    /// on ray `i`.
    fn from_samples(
        center: [f64; 2],
        radii: Vec<f64>,
        t_center: f64,
        rays: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n_rays = rays.len();
        // each spline runs along the whole diameter, so the centre is interior
        let x: Vec<f64> = radii
            .iter()
            .rev()
            .map(|r| -r)
            .chain(radii[1..].iter().copied())
            .collect();
        let splines = (0..n_rays)
            .map(|i| {
                let opposite = &rays[(i + n_rays / 2) % n_rays];
                let y: Vec<f64> = opposite
                    .iter()
                    .rev()
                    .copied()
                    .chain(std::iter::once(t_center))
                    .chain(rays[i].iter().copied())
                    .collect();
                CubicSpline::new(x.clone(), y)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            center,
            rho_max: *radii.last().expect("at least three radii"),
            radii,
            t_center,
            rays,
            splines,
        })
    }

    /// The same table on every other radius (and the outermost), for an
    /// estimate of the interpolation error without new traces.
    pub fn coarsened(&self) -> Result<Self> {
        let n = self.radii.len();
        let keep: Vec<usize> = (0..n).filter(|&j| j % 2 == 0 || j == n - 1).collect();
        if keep.len() < 3 {
            return Err(Error::InvalidParameter("table too small to coarsen".into()));
        }
        let radii = keep.iter().map(|&j| self.radii[j]).collect();
        let rays = self
            .rays
            .iter()
            .map(|ray| keep[1..].iter().map(|&j| ray[j - 1]).collect())
            .collect();
        Self::from_samples(self.center, radii, self.t_center, rays)
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let (du, dv) = (u - self.center[0], v - self.center[1]);
        let rho = du.hypot(dv);
        let along: Vec<f64> = self.splines.iter().map(|s| s.eval(rho)).collect();
        if rho == 0.0 {
            return along[0];
        }
        let turns = dv.atan2(du).rem_euclid(TAU) / TAU;
        TrigInterpolant::new(&along).map_or(along[0], |t| t.eval(turns))
    }
}

/// Closed curves in section coordinates, parametrised on `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundaryCurve {
    Circle {
        center: [f64; 2],
        radius: f64,
    },
    /// Semi-axes `a`, `b`, rotated by `angle`.
    Ellipse {
        center: [f64; 2],
        a: f64,
        b: f64,
        angle: f64,
    },
}

impl BoundaryCurve {
    /// Point and derivative at `s`.
    pub fn eval(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let (st, ct) = (TAU * s).sin_cos();
        match *self {
            BoundaryCurve::Circle { center, radius } => (
                [center[0] + radius * ct, center[1] + radius * st],
                [-TAU * radius * st, TAU * radius * ct],
            ),
            BoundaryCurve::Ellipse {
                center,
                a,
                b,
                angle,
            } => {
                let (sa, ca) = angle.sin_cos();
                let (x, y) = (a * ct, b * st);
                let (dx, dy) = (-TAU * a * st, TAU * b * ct);
                (
                    [center[0] + ca * x - sa * y, center[1] + sa * x + ca * y],
                    [ca * dx - sa * dy, sa * dx + ca * dy],
                )
            }
        }
    }
}

/// `∮ η` with `η(ξ) = (r × ξ) ∫₀¹ s g(center + s r) ds`, which equals
/// `∫ g du dv` over the region bounded by `boundary` when that region is
/// star-shaped about `center`. For `g = T β(e1, e2)` this is the enclosed
/// volume.
pub fn volume_poincare_boundary(
    g: &(dyn Fn(f64, f64) -> Result<f64> + Sync),
    center: [f64; 2],
    boundary: &BoundaryCurve,
    n_quad: usize,
    quad_tol: f64,
) -> Result<VolumeEstimate> {
    if n_quad < 2 {
        return Err(Error::InvalidParameter(
            "need at least two boundary nodes".into(),
        ));
    }
    let etas = (0..n_quad)
        .into_par_iter()
        .map(|k| {
            let (c, xi) = boundary.eval(k as f64 / n_quad as f64);
            let r = [c[0] - center[0], c[1] - center[1]];
            let cross = r[0] * xi[1] - r[1] * xi[0];
            let inner = adaptive_gauss(
                |s| Ok(s * g(center[0] + s * r[0], center[1] + s * r[1])?),
                0.0,
                1.0,
                quad_tol,
                30,
            )?;
            Ok((cross * inner.value, cross.abs() * inner.error))
        })
        .collect::<Result<Vec<_>>>()?;
    let h = 1.0 / n_quad as f64;
    let (mut full, mut half, mut inner_err) = (0.0, 0.0, 0.0);
    for (k, (eta, e)) in etas.iter().enumerate() {
        full += eta * h;
        inner_err += e * h;
        if k % 2 == 0 {
            half += 2.0 * eta * h;
        }
    }
    let err = if n_quad % 2 == 0 {
        (full - half).abs()
    } else {
        0.0
    } + inner_err;
    Ok(VolumeEstimate::from_signed(
        full,
        err,
        VolumeMethod::Poincare,
        n_quad,
        0,
    ))
}
