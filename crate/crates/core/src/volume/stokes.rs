//! `V = ∫_S ν` with `dν = dx∧dy∧dz` on a doubly periodic surface mesh.

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{VolumeEstimate, VolumeMethod};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};
use crate::quadrature::spectral_derivative;

/// Samples of an embedding of the unit torus on an `n1 × n2` grid,
/// `points[i * n2 + j] = x(i/n1, j/n2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMesh {
    pub n1: usize,
    pub n2: usize,
    pub points: Vec<Point3>,
}

/// Which of the cyclic primitives `x dy∧dz`, `y dz∧dx`, `z dx∧dy` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    X,
    Y,
    Z,
}

impl SurfaceMesh {
    pub fn new(n1: usize, n2: usize, points: Vec<Point3>) -> Result<Self> {
        if n1 < 3 || n2 < 3 || points.len() != n1 * n2 {
            return Err(Error::InvalidParameter(format!(
                "mesh of {} points does not fill a {n1}×{n2} grid of at least 3×3",
                points.len()
            )));
        }
        Ok(Self { n1, n2, points })
    }

    pub fn from_fn<F: Fn(f64, f64) -> Point3>(n1: usize, n2: usize, f: F) -> Result<Self> {
        let mut points = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                points.push(f(i as f64 / n1 as f64, j as f64 / n2 as f64));
            }
        }
        Self::new(n1, n2, points)
    }

    /// Circular torus of major radius `r0` and minor radius `a` about the `z` axis.
    pub fn circular_torus(r0: f64, a: f64, n1: usize, n2: usize) -> Result<Self> {
        use std::f64::consts::TAU;
        Self::from_fn(n1, n2, |t1, t2| {
            let (st, ct) = (TAU * t1).sin_cos();
            let (sp, cp) = (TAU * t2).sin_cos();
            let r = r0 + a * ct;
            Vec3::new(r * cp, r * sp, a * st)
        })
    }

    pub fn translated(&self, offset: Vec3) -> Self {
        Self {
            n1: self.n1,
            n2: self.n2,
            points: self.points.iter().map(|p| p + offset).collect(),
        }
    }

    /// The same surface with the parameters exchanged, which reverses the
    /// orientation.
    pub fn swapped(&self) -> Self {
        let mut points = Vec::with_capacity(self.points.len());
        for j in 0..self.n2 {
            for i in 0..self.n1 {
                points.push(self.points[i * self.n2 + j]);
            }
        }
        Self {
            n1: self.n2,
            n2: self.n1,
            points,
        }
    }

    /// Every other node in each direction.
    pub fn coarsened(&self) -> Option<Self> {
        if self.n1 % 2 != 0 || self.n2 % 2 != 0 || self.n1 < 6 || self.n2 < 6 {
            return None;
        }
        let (m1, m2) = (self.n1 / 2, self.n2 / 2);
        let mut points = Vec::with_capacity(m1 * m2);
        for i in 0..m1 {
            for j in 0..m2 {
                points.push(self.points[2 * i * self.n2 + 2 * j]);
            }
        }
        Some(Self {
            n1: m1,
            n2: m2,
            points,
        })
    }

    /// Spectral `(∂x/∂θ¹, ∂x/∂θ²)` at every node.
    pub fn derivatives(&self) -> (Vec<Vec3>, Vec<Vec3>) {
        let (n1, n2) = (self.n1, self.n2);
        let mut planner = FftPlanner::new();
        let mut d1 = vec![Vec3::zeros(); n1 * n2];
        let mut d2 = vec![Vec3::zeros(); n1 * n2];
        for c in 0..3 {
            for i in 0..n1 {
                let row: Vec<f64> = (0..n2).map(|j| self.points[i * n2 + j][c]).collect();
                for (j, d) in spectral_derivative(&row, &mut planner)
                    .into_iter()
                    .enumerate()
                {
                    d2[i * n2 + j][c] = d;
                }
            }
            for j in 0..n2 {
                let col: Vec<f64> = (0..n1).map(|i| self.points[i * n2 + j][c]).collect();
                for (i, d) in spectral_derivative(&col, &mut planner)
                    .into_iter()
                    .enumerate()
                {
                    d1[i * n2 + j][c] = d;
                }
            }
        }
        (d1, d2)
    }

    /// Smallest `|∂x/∂θ¹ × ∂x/∂θ²|` over the grid.
    pub fn min_area_element(&self) -> f64 {
        let (d1, d2) = self.derivatives();
        d1.iter()
            .zip(&d2)
            .map(|(a, b)| a.cross(b).norm())
            .fold(f64::INFINITY, f64::min)
    }

    fn signed_volume(&self, primitive: Primitive) -> Result<f64> {
        let (d1, d2) = self.derivatives();
        let scale = d1.iter().chain(&d2).map(|d| d.norm()).fold(0.0, f64::max);
        let mut sum = 0.0;
        for ((x, a), b) in self.points.iter().zip(&d1).zip(&d2) {
            let n = a.cross(b);
            if n.norm() <= 1e-12 * scale * scale {
                return Err(Error::DegenerateGeometry(
                    "surface mesh has a degenerate node".into(),
                ));
            }
            sum += match primitive {
                Primitive::X => x.x * n.x,
                Primitive::Y => x.y * n.y,
                Primitive::Z => x.z * n.z,
            };
        }
        Ok(sum / self.points.len() as f64)
    }
}

/// Periodic trapezoid of the chosen primitive over the mesh. The error
/// estimate compares with the mesh coarsened by two when that is possible.
pub fn volume_stokes_surface(mesh: &SurfaceMesh, primitive: Primitive) -> Result<VolumeEstimate> {
    let signed = mesh.signed_volume(primitive)?;
    let err = match mesh.coarsened() {
        Some(c) => (c.signed_volume(primitive)? - signed).abs(),
        None => f64::NAN,
    };
    Ok(VolumeEstimate::from_signed(
        signed,
        err,
        VolumeMethod::Stokes,
        mesh.points.len(),
        0,
    ))
}
