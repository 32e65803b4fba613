//! Magnetic fluxes through surfaces bounded by closed loops.
//!
//! With a vector potential the flux is a loop integral of `A`. Without one,
//! the derivative of the flux along a family of loops is the loop integral of
//! `B·(Y × x')`, where `Y` points from the loop to its neighbour.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{eval_a, eval_b, FieldModel};
use crate::geometry::{Cylindrical, Point3, PoloidalAngle, Vec3};
use crate::quadrature::periodic_trapezoid_adaptive;

pub const DEFAULT_N_QUAD: usize = 256;
pub const FLUX_TOL: f64 = 1e-10;
const N_MAX: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Homology {
    Poloidal,
    Toroidal,
    /// `p` poloidal and `q` toroidal turns.
    Custom {
        p: i32,
        q: i32,
    },
}

/// A closed parametrized curve `s ∈ [0, 1) → x(s)`.
pub trait Loop: Send + Sync {
    fn point(&self, s: f64) -> Point3;
    /// `dx/ds`.
    fn tangent(&self, s: f64) -> Vec3;
    fn homology(&self) -> Homology;
}

/// Loops on the circular tori about the circle `R = r_c, Z = z_c`, with the
/// poloidal angle in the sense of [`PoloidalAngle`] (clockwise by default).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoopSpec {
    /// Circle of minor radius `radius` in the half-plane `φ = phi`.
    PoloidalCircle {
        r_c: f64,
        z_c: f64,
        radius: f64,
        phi: f64,
    },
    /// Horizontal circle `R = r, Z = z`.
    ToroidalCircle { r: f64, z: f64 },
    /// Poloidal loop on the torus of minor radius `radius` whose toroidal angle
    /// oscillates as `phi + amp sin(2π mode s)`.
    WobbledPoloidal {
        r_c: f64,
        z_c: f64,
        radius: f64,
        phi: f64,
        amp: f64,
        mode: i32,
    },
    /// `p` poloidal and `q` toroidal turns on the torus of minor radius `radius`.
    Helix {
        r_c: f64,
        z_c: f64,
        radius: f64,
        p: i32,
        q: i32,
    },
    /// A constant loop.
    Point { x: Point3 },
}

impl LoopSpec {
    fn angle(r_c: f64, z_c: f64) -> PoloidalAngle {
        PoloidalAngle::new(r_c, z_c, true)
    }

    /// Position on a circular torus and its derivatives in `(θ, φ)`.
    fn torus(r_c: f64, radius: f64, theta: f64, phi: f64, z_c: f64) -> (Point3, Vec3, Vec3) {
        let (st, ct) = theta.sin_cos();
        let rr = r_c + radius * ct;
        let c = Cylindrical::new(rr, phi, z_c - radius * st);
        let (e_r, e_phi) = c.basis();
        let d_theta = e_r * (-radius * st) + Vec3::new(0.0, 0.0, -radius * ct);
        let d_phi = e_phi * rr;
        (c.to_cartesian(), d_theta, d_phi)
    }
}

impl Loop for LoopSpec {
    fn point(&self, s: f64) -> Point3 {
        match *self {
            LoopSpec::PoloidalCircle {
                r_c,
                z_c,
                radius,
                phi,
            } => Self::angle(r_c, z_c).point(radius, TAU * s, phi),
            LoopSpec::ToroidalCircle { r, z } => Cylindrical::new(r, TAU * s, z).to_cartesian(),
            LoopSpec::WobbledPoloidal {
                r_c,
                z_c,
                radius,
                phi,
                amp,
                mode,
            } => {
                let ph = phi + amp * (TAU * mode as f64 * s).sin();
                Self::angle(r_c, z_c).point(radius, TAU * s, ph)
            }
            LoopSpec::Helix {
                r_c,
                z_c,
                radius,
                p,
                q,
            } => Self::angle(r_c, z_c).point(radius, TAU * p as f64 * s, TAU * q as f64 * s),
            LoopSpec::Point { x } => x,
        }
    }

    fn tangent(&self, s: f64) -> Vec3 {
        match *self {
            LoopSpec::PoloidalCircle {
                r_c,
                z_c,
                radius,
                phi,
            } => {
                let (_, dth, _) = Self::torus(r_c, radius, TAU * s, phi, z_c);
                dth * TAU
            }
            LoopSpec::ToroidalCircle { r, z } => {
                let c = Cylindrical::new(r, TAU * s, z);
                c.basis().1 * (TAU * r)
            }
            LoopSpec::WobbledPoloidal {
                r_c,
                z_c,
                radius,
                phi,
                amp,
                mode,
            } => {
                let w = TAU * mode as f64;
                let ph = phi + amp * (w * s).sin();
                let (_, dth, dph) = Self::torus(r_c, radius, TAU * s, ph, z_c);
                dth * TAU + dph * (amp * w * (w * s).cos())
            }
            LoopSpec::Helix {
                r_c,
                z_c,
                radius,
                p,
                q,
            } => {
                let (_, dth, dph) =
                    Self::torus(r_c, radius, TAU * p as f64 * s, TAU * q as f64 * s, z_c);
                dth * (TAU * p as f64) + dph * (TAU * q as f64)
            }
            LoopSpec::Point { .. } => Vec3::zeros(),
        }
    }

    fn homology(&self) -> Homology {
        match *self {
            LoopSpec::PoloidalCircle { .. } | LoopSpec::WobbledPoloidal { .. } => {
                Homology::Poloidal
            }
            LoopSpec::ToroidalCircle { .. } => Homology::Toroidal,
            LoopSpec::Helix { p, q, .. } => Homology::Custom { p, q },
            LoopSpec::Point { .. } => Homology::Custom { p: 0, q: 0 },
        }
    }
}

/// A loop given by closures for the point and tangent.
pub struct FnLoop<P, T> {
    pub point: P,
    pub tangent: T,
    pub homology: Homology,
}

impl<P, T> Loop for FnLoop<P, T>
where
    P: Fn(f64) -> Point3 + Send + Sync,
    T: Fn(f64) -> Vec3 + Send + Sync,
{
    fn point(&self, s: f64) -> Point3 {
        (self.point)(s)
    }
    fn tangent(&self, s: f64) -> Vec3 {
        (self.tangent)(s)
    }
    fn homology(&self) -> Homology {
        self.homology
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxMethod {
    ALoop,
    BetaDisk,
    Annulus,
    Derivative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxValue {
    /// Signed flux; the sign follows the loop orientation by the right-hand rule.
    pub phi: f64,
    pub method: FluxMethod,
    pub n_quad: usize,
    /// Change at the last refinement.
    pub change: f64,
    pub converged: bool,
}

impl FluxValue {
    pub fn abs(&self) -> f64 {
        self.phi.abs()
    }
}

fn check_loop(lp: &dyn Loop, n_quad: usize) -> Result<()> {
    if n_quad == 0 {
        return Err(Error::InvalidParameter("n_quad must be positive".into()));
    }
    if (lp.point(0.0) - lp.point(1.0)).norm() > 1e-12 * lp.point(0.0).norm().max(1.0) {
        return Err(Error::DegenerateGeometry("loop is not closed".into()));
    }
    Ok(())
}

/// `∮ A·dx` by the periodic trapezoid rule, doubling from `n_quad` nodes until
/// successive values agree to [`FLUX_TOL`].
pub fn loop_flux(field: &dyn FieldModel, lp: &dyn Loop, n_quad: usize) -> Result<FluxValue> {
    if !field.capabilities().vector_potential {
        return Err(Error::MissingCapability(
            "a vector potential; use flux_derivative with a homologue field instead",
        ));
    }
    check_loop(lp, n_quad)?;
    let q = periodic_trapezoid_adaptive(
        |s| Ok(eval_a(field, &lp.point(s))?.dot(&lp.tangent(s))),
        n_quad,
        FLUX_TOL,
        N_MAX,
    )?;
    if !q.converged {
        log::warn!("loop flux not converged at {} nodes", q.n);
    }
    Ok(FluxValue {
        phi: q.value,
        method: FluxMethod::ALoop,
        n_quad: q.n,
        change: q.change,
        converged: q.converged,
    })
}

/// Flux through the annulus between `lp` and `axis_loop`:
/// `∮_γ A − ∮_{γ₀} A`.
pub fn annulus_flux(
    field: &dyn FieldModel,
    lp: &dyn Loop,
    axis_loop: &dyn Loop,
    n_quad: usize,
) -> Result<FluxValue> {
    let a = loop_flux(field, lp, n_quad)?;
    let b = loop_flux(field, axis_loop, n_quad)?;
    Ok(FluxValue {
        phi: a.phi - b.phi,
        method: FluxMethod::Annulus,
        n_quad: a.n_quad.max(b.n_quad),
        change: a.change + b.change,
        converged: a.converged && b.converged,
    })
}

/// `∮ B·(Y × x') ds`: the rate of change of the flux through the loop when
/// each point moves along `Y(x, s)`.
pub fn flux_derivative<Y>(
    field: &dyn FieldModel,
    lp: &dyn Loop,
    y: Y,
    n_quad: usize,
) -> Result<FluxValue>
where
    Y: Fn(&Point3, f64) -> Result<Vec3>,
{
    check_loop(lp, n_quad)?;
    let mut scale = 0.0f64;
    let q = periodic_trapezoid_adaptive(
        |s| {
            let x = lp.point(s);
            let b = eval_b(field, &x)?;
            let t = lp.tangent(s);
            let yv = y(&x, s)?;
            scale = scale.max(b.norm() * yv.norm() * t.norm());
            Ok(b.dot(&yv.cross(&t)))
        },
        n_quad,
        FLUX_TOL,
        N_MAX,
    )?;
    if q.value.abs() <= 1e-12 * scale {
        log::warn!("homologue field is tangent to the flux surface along the loop; dΦ vanishes");
    }
    Ok(FluxValue {
        phi: q.value,
        method: FluxMethod::Derivative,
        n_quad: q.n,
        change: q.change,
        converged: q.converged,
    })
}

/// `Y = ∇ψ/|∇ψ|²`: moves points by a unit step in the flux label.
pub fn label_homologue(field: &dyn FieldModel) -> impl Fn(&Point3, f64) -> Result<Vec3> + '_ {
    move |x: &Point3, _| {
        let g = field
            .grad_psi(x)
            .ok_or(Error::MissingCapability("a flux label"))?;
        let n2 = g.norm_squared();
        if n2 == 0.0 {
            return Err(Error::DegenerateGeometry(
                "flux label gradient vanishes".into(),
            ));
        }
        Ok(g / n2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{
        make_tokamak_field, BoundingBox, Capabilities, TokamakCircularParams, TokamakField,
    };
    use std::f64::consts::PI;

    fn tokamak() -> TokamakField {
        make_tokamak_field(TokamakCircularParams::default()).unwrap()
    }

    fn poloidal(radius: f64) -> LoopSpec {
        LoopSpec::PoloidalCircle {
            r_c: 1.0,
            z_c: 0.0,
            radius,
            phi: 0.0,
        }
    }

    fn toroidal_flux(r: f64) -> f64 {
        TAU * (1.0 - (1.0 - r * r).sqrt())
    }

    #[test]
    fn tangents_match_finite_differences() {
        let loops = [
            poloidal(0.4),
            LoopSpec::ToroidalCircle { r: 1.3, z: 0.2 },
            LoopSpec::WobbledPoloidal {
                r_c: 1.0,
                z_c: 0.1,
                radius: 0.3,
                phi: 0.5,
                amp: 0.2,
                mode: 3,
            },
            LoopSpec::Helix {
                r_c: 1.0,
                z_c: 0.0,
                radius: 0.5,
                p: 2,
                q: -1,
            },
        ];
        for lp in loops {
            for s in [0.0, 0.17, 0.5, 0.93] {
                let h = 1e-6;
                let fd = (lp.point(s + h) - lp.point(s - h)) / (2.0 * h);
                assert!(
                    (fd - lp.tangent(s)).norm() < 1e-7 * fd.norm().max(1.0),
                    "{lp:?} {s}"
                );
            }
        }
    }

    #[test]
    fn toroidal_flux_through_poloidal_circle() {
        let f = tokamak();
        let v = loop_flux(&f, &poloidal(0.5), DEFAULT_N_QUAD).unwrap();
        assert!(v.converged);
        assert!((v.phi - 0.8417873).abs() < 1e-7);
        assert!((v.phi - toroidal_flux(0.5)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_loop_has_no_flux() {
        let f = tokamak();
        let v = loop_flux(
            &f,
            &LoopSpec::Point {
                x: Vec3::new(1.2, 0.0, 0.1),
            },
            16,
        )
        .unwrap();
        assert_eq!(v.phi, 0.0);
    }

    #[test]
    fn homologous_loops_carry_equal_flux() {
        let f = tokamak();
        let a = loop_flux(&f, &poloidal(0.5), DEFAULT_N_QUAD).unwrap();
        let w = LoopSpec::WobbledPoloidal {
            r_c: 1.0,
            z_c: 0.0,
            radius: 0.5,
            phi: 0.3,
            amp: 0.4,
            mode: 2,
        };
        let b = loop_flux(&f, &w, DEFAULT_N_QUAD).unwrap();
        assert!((a.phi - b.phi).abs() < 1e-8);
    }

    #[test]
    fn poloidal_flux_through_annulus() {
        let f = tokamak();
        let v = annulus_flux(
            &f,
            &LoopSpec::ToroidalCircle { r: 1.5, z: 0.0 },
            &LoopSpec::ToroidalCircle { r: 1.0, z: 0.0 },
            DEFAULT_N_QUAD,
        )
        .unwrap();
        assert!((v.abs() - PI / 4.0).abs() < 1e-12);
        let same = annulus_flux(
            &f,
            &LoopSpec::ToroidalCircle { r: 1.0, z: 0.0 },
            &LoopSpec::ToroidalCircle { r: 1.0, z: 0.0 },
            64,
        )
        .unwrap();
        assert_eq!(same.phi, 0.0);
    }

    /// The tokamak with `A → A + ∇χ`, `χ = sin(x) cos(2y) + z³`.
    struct Gauged(TokamakField);

    impl FieldModel for Gauged {
        fn b(&self, x: &Vec3) -> Vec3 {
            self.0.b(x)
        }
        fn a(&self, x: &Vec3) -> Option<Vec3> {
            let g = Vec3::new(
                x.x.cos() * (2.0 * x.y).cos(),
                -2.0 * x.x.sin() * (2.0 * x.y).sin(),
                3.0 * x.z * x.z,
            );
            Some(self.0.a(x)? + g)
        }
        fn capabilities(&self) -> Capabilities {
            self.0.capabilities()
        }
        fn contains(&self, x: &Vec3) -> bool {
            self.0.contains(x)
        }
        fn bounding_box(&self) -> BoundingBox {
            self.0.bounding_box()
        }
    }

    #[test]
    fn gauge_invariance() {
        let f = tokamak();
        let g = Gauged(tokamak());
        for lp in [poloidal(0.5), LoopSpec::ToroidalCircle { r: 1.4, z: 0.1 }] {
            let a = loop_flux(&f, &lp, DEFAULT_N_QUAD).unwrap();
            let b = loop_flux(&g, &lp, DEFAULT_N_QUAD).unwrap();
            assert!((a.phi - b.phi).abs() < 1e-10);
        }
    }

    #[test]
    fn radial_flux_derivative() {
        let f = tokamak();
        let y = |x: &Point3, _: f64| {
            let c = Cylindrical::from_cartesian(x);
            let (dr, z) = (c.r - 1.0, c.z);
            let r = dr.hypot(z);
            Ok(c.vector_from_components(dr / r, 0.0, z / r))
        };
        let d = flux_derivative(&f, &poloidal(0.5), y, DEFAULT_N_QUAD).unwrap();
        assert!((d.phi - PI / 0.75f64.sqrt()).abs() < 1e-10);
        let h = 1e-4;
        let fd = (loop_flux(&f, &poloidal(0.5 + h), 256).unwrap().phi
            - loop_flux(&f, &poloidal(0.5 - h), 256).unwrap().phi)
            / (2.0 * h);
        assert!((fd - d.phi).abs() < 1e-6);
    }

    #[test]
    fn flux_derivative_along_b_vanishes() {
        let f = tokamak();
        let d = flux_derivative(&f, &poloidal(0.5), |x: &Point3, _| Ok(f.b(x)), 64).unwrap();
        assert!(d.phi.abs() < 1e-14);
    }

    #[test]
    fn poloidal_flux_per_unit_label_is_two_pi() {
        let f = tokamak();
        let d = flux_derivative(
            &f,
            &LoopSpec::ToroidalCircle { r: 1.5, z: 0.0 },
            label_homologue(&f),
            64,
        )
        .unwrap();
        assert!((d.phi.abs() - TAU).abs() < 1e-10, "{}", d.phi);
    }

    #[test]
    fn missing_potential_is_reported() {
        struct NoA(TokamakField);
        impl FieldModel for NoA {
            fn b(&self, x: &Vec3) -> Vec3 {
                self.0.b(x)
            }
            fn capabilities(&self) -> Capabilities {
                Capabilities::default()
            }
            fn contains(&self, x: &Vec3) -> bool {
                self.0.contains(x)
            }
            fn bounding_box(&self) -> BoundingBox {
                self.0.bounding_box()
            }
        }
        let f = NoA(tokamak());
        assert!(matches!(
            loop_flux(&f, &poloidal(0.5), 64),
            Err(Error::MissingCapability(_))
        ));
    }
}
