//! Points and vectors in Euclidean three-space.
//!
//! Positions are stored in Cartesian form; cylindrical coordinates `(R, φ, Z)`
//! use the right-handed frame `(R̂, φ̂, Ẑ)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Cartesian position.
pub type Point3 = Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylindrical {
    pub r: f64,
    /// Toroidal angle in `[0, 2π)`.
    pub phi: f64,
    pub z: f64,
}

impl Cylindrical {
    pub fn new(r: f64, phi: f64, z: f64) -> Self {
        Self { r, phi, z }
    }

    pub fn from_cartesian(p: &Point3) -> Self {
        let r = p.x.hypot(p.y);
        let mut phi = p.y.atan2(p.x);
        if phi < 0.0 {
            phi += TAU;
        }
        // atan2 may round up to exactly 2π for tiny negative angles
        if phi >= TAU {
            phi -= TAU;
        }
        Self { r, phi, z: p.z }
    }

    pub fn to_cartesian(&self) -> Point3 {
        let (s, c) = self.phi.sin_cos();
        Vec3::new(self.r * c, self.r * s, self.z)
    }

    /// Unit vectors `(R̂, φ̂)` at this toroidal angle.
    pub fn basis(&self) -> (Vec3, Vec3) {
        let (s, c) = self.phi.sin_cos();
        (Vec3::new(c, s, 0.0), Vec3::new(-s, c, 0.0))
    }

    /// Assembles a Cartesian vector from physical cylindrical components.
    pub fn vector_from_components(&self, v_r: f64, v_phi: f64, v_z: f64) -> Vec3 {
        let (e_r, e_phi) = self.basis();
        e_r * v_r + e_phi * v_phi + Vec3::new(0.0, 0.0, v_z)
    }

    /// Physical cylindrical components `(v_R, v_φ, v_Z)` of a Cartesian vector.
    pub fn components_of(&self, v: &Vec3) -> (f64, f64, f64) {
        let (e_r, e_phi) = self.basis();
        (v.dot(&e_r), v.dot(&e_phi), v.z)
    }
}

/// Poloidal angle about a circle `R = r_c, Z = z_c` in every meridional
/// half-plane. With `clockwise` set the angle increases from `+R̂` towards
/// `−Ẑ`, which is the sense of the poloidal field of the benchmark tokamak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoloidalAngle {
    pub r_c: f64,
    pub z_c: f64,
    pub clockwise: bool,
}

impl PoloidalAngle {
    pub fn new(r_c: f64, z_c: f64, clockwise: bool) -> Self {
        Self {
            r_c,
            z_c,
            clockwise,
        }
    }

    /// Angle in `[0, 2π)`.
    pub fn angle(&self, x: &Point3) -> f64 {
        let c = Cylindrical::from_cartesian(x);
        let dz = if self.clockwise {
            self.z_c - c.z
        } else {
            c.z - self.z_c
        };
        wrap_angle(dz.atan2(c.r - self.r_c))
    }

    /// Angle in turns, `[0, 1)`.
    pub fn turns(&self, x: &Point3) -> f64 {
        frac(self.angle(x) / TAU)
    }

    /// Minor radius about the center circle.
    pub fn radius(&self, x: &Point3) -> f64 {
        let c = Cylindrical::from_cartesian(x);
        (c.r - self.r_c).hypot(c.z - self.z_c)
    }

    /// Point at minor radius `r`, poloidal angle `theta` and toroidal angle `phi`.
    pub fn point(&self, r: f64, theta: f64, phi: f64) -> Point3 {
        let s = if self.clockwise { -1.0 } else { 1.0 };
        Cylindrical::new(
            self.r_c + r * theta.cos(),
            phi,
            self.z_c + s * r * theta.sin(),
        )
        .to_cartesian()
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Fractional part in `[0, 1)`.
pub fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn phi_is_wrapped() {
        let c = Cylindrical::from_cartesian(&Vec3::new(0.0, -1.0, 0.0));
        assert!((c.phi - 1.5 * std::f64::consts::PI).abs() < 1e-15);
        let c = Cylindrical::from_cartesian(&Vec3::new(1.0, -1e-300, 0.0));
        assert!(c.phi >= 0.0 && c.phi < TAU);
    }

    #[test]
    fn components_round_trip() {
        let c = Cylindrical::new(1.3, 2.1, -0.4);
        let v = c.vector_from_components(0.3, -1.2, 0.7);
        let (a, b, d) = c.components_of(&v);
        assert!((a - 0.3).abs() < 1e-15 && (b + 1.2).abs() < 1e-15 && (d - 0.7).abs() < 1e-15);
    }

    #[test]
    fn poloidal_angle_round_trip() {
        for clockwise in [true, false] {
            let pa = PoloidalAngle::new(1.0, 0.1, clockwise);
            let x = pa.point(0.3, 2.0, 0.7);
            assert!((pa.angle(&x) - 2.0).abs() < 1e-13);
            assert!((pa.radius(&x) - 0.3).abs() < 1e-13);
        }
        let pa = PoloidalAngle::new(1.0, 0.0, true);
        assert!(pa.point(0.5, 0.1, 0.0).z < 0.0);
    }

    proptest! {
        #[test]
        fn cartesian_cylindrical_round_trip(x in -10.0..10.0f64, y in -10.0..10.0f64, z in -10.0..10.0f64) {
            let p = Vec3::new(x, y, z);
            let c = Cylindrical::from_cartesian(&p);
            prop_assert!(c.r >= 0.0);
            prop_assert!(c.phi >= 0.0 && c.phi < TAU);
            let q = c.to_cartesian();
            prop_assert!((p - q).norm() <= 1e-12 * p.norm().max(1e-300));
        }
    }
}
