//! Large-aspect circular tokamak with nested circular flux surfaces.
//!
//! With `ψ = ((R − R0)² + Z²)/2` the field is `B = ∇φ × ∇ψ + F0 ∇φ`, i.e.
//!
//! ```text
//! B_R = Z/R,   B_φ = F0/R,   B_Z = −(R − R0)/R.
//! ```
//!
//! The vector potential is fixed in the gauge
//!
//! ```text
//! A_R = F0 Z/R,   A_φ = −ψ/R,   A_Z = 0,
//! ```
//!
//! which vanishes on the magnetic axis, so the loop integral of `A` along the
//! axis is zero. The optional perturbation is added to the potential only,
//! `δA = ε ψ cos(mθ − nφ) ∇ψ` with `θ = atan2(Z, R − R0)`. Its curl,
//!
//! ```text
//! δB = ε ψ sin χ [ −m φ̂ + (n/R)(Z R̂ − (R − R0) Ẑ) ],   χ = mθ − nφ,
//! ```
//!
//! is tangent to the level sets of `ψ`, so `ψ` stays an exact flux label and
//! every circular surface survives; only the motion on each surface changes.
//! The symmetry field `u = ∂_φ` is reported only when `ε = 0`.

use serde::{Deserialize, Serialize};

use super::{BoundingBox, Capabilities, FieldModel};
use crate::error::{Error, Result};
use crate::geometry::{Cylindrical, PoloidalAngle, Vec3};

/// Fraction of `R0` beyond which the minor radius leaves the domain.
pub const DOMAIN_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokamakCircularParams {
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "F0")]
    pub f0: f64,
    pub eps: f64,
    pub m: i32,
    pub n: i32,
}

impl Default for TokamakCircularParams {
    fn default() -> Self {
        Self {
            r0: 1.0,
            f0: 1.0,
            eps: 0.0,
            m: 2,
            n: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TokamakField {
    params: TokamakCircularParams,
}

impl TokamakField {
    pub fn new(params: TokamakCircularParams) -> Result<Self> {
        if !(params.r0 > 0.0) || !params.r0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "R0 must be positive, got {}",
                params.r0
            )));
        }
        if !params.f0.is_finite() || params.f0 == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "F0 must be finite and nonzero, got {}",
                params.f0
            )));
        }
        if !params.eps.is_finite() {
            return Err(Error::InvalidParameter("eps must be finite".into()));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &TokamakCircularParams {
        &self.params
    }

    pub fn is_axisymmetric(&self) -> bool {
        self.params.eps == 0.0
    }

    /// Minor radius about the circle `R = R0, Z = 0`.
    pub fn minor_radius(&self, x: &Vec3) -> f64 {
        let c = Cylindrical::from_cartesian(x);
        (c.r - self.params.r0).hypot(c.z)
    }

    /// Magnetic axis point at toroidal angle `phi`.
    pub fn axis_point(&self, phi: f64) -> Vec3 {
        Cylindrical::new(self.params.r0, phi, 0.0).to_cartesian()
    }

    /// Point at minor radius `r`, toroidal angle `phi`, and poloidal angle
    /// `theta` measured in the sense of the poloidal field (clockwise in the
    /// `(R, Z)` half-plane for `F0 > 0`).
    pub fn surface_point(&self, r: f64, theta: f64, phi: f64) -> Vec3 {
        Cylindrical::new(self.params.r0 + r * theta.cos(), phi, -r * theta.sin()).to_cartesian()
    }

    /// Poloidal angle about the magnetic axis in the sense of the poloidal field.
    pub fn poloidal_angle(&self) -> PoloidalAngle {
        PoloidalAngle::new(self.params.r0, 0.0, true)
    }

    pub fn psi_of_radius(r: f64) -> f64 {
        0.5 * r * r
    }

    /// `(R, Z) − (R0, 0)` in the meridional plane.
    fn offsets(&self, c: &Cylindrical) -> (f64, f64) {
        (c.r - self.params.r0, c.z)
    }

    /// Cylindrical components of `B` at `c`.
    pub fn b_components(&self, c: &Cylindrical) -> (f64, f64, f64) {
        let p = &self.params;
        let (dr, z) = self.offsets(c);
        let rr = c.r;
        let mut br = z / rr;
        let mut bphi = p.f0 / rr;
        let mut bz = -dr / rr;
        if p.eps != 0.0 {
            let psi = 0.5 * (dr * dr + z * z);
            let theta = z.atan2(dr);
            let chi = p.m as f64 * theta - p.n as f64 * c.phi;
            let s = p.eps * psi * chi.sin();
            let n = p.n as f64;
            br += s * n * z / rr;
            bz -= s * n * dr / rr;
            bphi -= s * p.m as f64;
        }
        (br, bphi, bz)
    }
}

impl FieldModel for TokamakField {
    fn b(&self, x: &Vec3) -> Vec3 {
        let c = Cylindrical::from_cartesian(x);
        let (br, bphi, bz) = self.b_components(&c);
        c.vector_from_components(br, bphi, bz)
    }

    fn a(&self, x: &Vec3) -> Option<Vec3> {
        let p = &self.params;
        let c = Cylindrical::from_cartesian(x);
        let (dr, z) = self.offsets(&c);
        let psi = 0.5 * (dr * dr + z * z);
        let mut ar = p.f0 * z / c.r;
        let aphi = -psi / c.r;
        let mut az = 0.0;
        if p.eps != 0.0 {
            let theta = z.atan2(dr);
            let chi = p.m as f64 * theta - p.n as f64 * c.phi;
            let g = p.eps * psi * chi.cos();
            ar += g * dr;
            az += g * z;
        }
        Some(c.vector_from_components(ar, aphi, az))
    }

    fn psi(&self, x: &Vec3) -> Option<f64> {
        let c = Cylindrical::from_cartesian(x);
        let (dr, z) = self.offsets(&c);
        Some(0.5 * (dr * dr + z * z))
    }

    fn grad_psi(&self, x: &Vec3) -> Option<Vec3> {
        let c = Cylindrical::from_cartesian(x);
        let (dr, z) = self.offsets(&c);
        Some(c.vector_from_components(dr, 0.0, z))
    }

    fn u(&self, x: &Vec3) -> Option<Vec3> {
        self.is_axisymmetric().then(|| Vec3::new(-x.y, x.x, 0.0))
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            vector_potential: true,
            flux_label: true,
            symmetry: self.is_axisymmetric(),
        }
    }

    fn contains(&self, x: &Vec3) -> bool {
        self.minor_radius(x) < DOMAIN_FRACTION * self.params.r0
    }

    fn bounding_box(&self) -> BoundingBox {
        let r0 = self.params.r0;
        let outer = r0 * (1.0 + DOMAIN_FRACTION);
        let h = DOMAIN_FRACTION * r0;
        BoundingBox {
            min: [-outer, -outer, -h],
            max: [outer, outer, h],
        }
    }
}

/// Builds the benchmark tokamak field from its parameters.
pub fn make_tokamak_field(params: TokamakCircularParams) -> Result<TokamakField> {
    TokamakField::new(params)
}
