//! The period lattice of the commuting flows of a symmetry field `u` and `B`
//! on a flux surface.
//!
//! `φ_t(x)` flows for time `t_u` along `u` and `t_B` along `B`. On a regular
//! torus the set of `t` with `φ_t(x) = x` is a lattice `Γ ⊂ ℝ²`; its
//! generators are found here from near-returns of each flow to the other
//! flow's line through the seed, polished by Newton iteration on
//! `φ_t(x) − x`.

use nalgebra::{Matrix3x2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::geometry::{Point3, Vec3};
use crate::ode::Tolerances;
use crate::tracer::{crossings_of_flow, flow_to, returns, CountMode, SectionSpec};

/// Commutation threshold for [`flow_action`].
pub const COMMUTE_TOL: f64 = 1e-7;

/// Newton polish target for `|φ_t(x) − x|`.
pub const FIXED_POINT_TOL: f64 = 1e-10;

/// The `ℝ²` action of a field with a symmetry.
#[derive(Clone, Copy)]
pub struct ActionFlow<'a> {
    field: &'a dyn FieldModel,
    pub tol: Tolerances,
}

impl<'a> ActionFlow<'a> {
    pub fn new(field: &'a dyn FieldModel, tol: Tolerances) -> Result<Self> {
        if !field.capabilities().symmetry {
            return Err(Error::MissingCapability("a symmetry field"));
        }
        Ok(Self { field, tol })
    }

    pub fn field(&self) -> &'a dyn FieldModel {
        self.field
    }

    fn u_at(&self, x: &Vec3) -> Option<Vec3> {
        if self.field.contains(x) {
            self.field.u(x)
        } else {
            None
        }
    }

    fn b_at(&self, x: &Vec3) -> Option<Vec3> {
        self.field.contains(x).then(|| self.field.b(x))
    }

    pub fn u_flow(&self, x: Point3, t: f64) -> Result<Point3> {
        flow_to(|y: &Vec3| self.u_at(y), x, t, &self.tol)
    }

    pub fn b_flow(&self, x: Point3, t: f64) -> Result<Point3> {
        flow_to(|y: &Vec3| self.b_at(y), x, t, &self.tol)
    }

    /// `u` then `B`, without the commutation check.
    pub fn apply(&self, x: Point3, t: [f64; 2]) -> Result<Point3> {
        self.b_flow(self.u_flow(x, t[0])?, t[1])
    }
}

/// `φ_t(x)`, checking that flowing in the other order agrees.
pub fn flow_action(action: &ActionFlow, x: Point3, t: [f64; 2]) -> Result<Point3> {
    let a = action.apply(x, t)?;
    let b = action.u_flow(action.b_flow(x, t[1])?, t[0])?;
    let residual = (a - b).norm();
    if residual > COMMUTE_TOL {
        return Err(Error::NotASymmetry { residual });
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeBasis {
    /// `(t_u, t_B)`.
    pub t1: [f64; 2],
    pub t2: [f64; 2],
    /// `det[T1 T2] > 0`.
    pub delta: f64,
    pub surface_label: Option<f64>,
    pub seed: Point3,
    /// Largest `|φ_{T_i}(seed) − seed|`.
    pub residual: f64,
}

impl LatticeBasis {
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.t1[0], self.t2[0]], [self.t1[1], self.t2[1]]]
    }

    /// The basis `(a T1 + c T2, b T1 + d T2)`.
    pub fn transformed(&self, m: [[i64; 2]; 2]) -> ([f64; 2], [f64; 2]) {
        let comb = |i: i64, j: i64| {
            [
                i as f64 * self.t1[0] + j as f64 * self.t2[0],
                i as f64 * self.t1[1] + j as f64 * self.t2[1],
            ]
        };
        (comb(m[0][0], m[1][0]), comb(m[0][1], m[1][1]))
    }
}

pub fn det(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn norm2(a: [f64; 2]) -> f64 {
    a[0] * a[0] + a[1] * a[1]
}

/// Lagrange–Gauss reduction of a planar basis.
pub fn lagrange_reduce(mut a: [f64; 2], mut b: [f64; 2]) -> ([f64; 2], [f64; 2]) {
    for _ in 0..1000 {
        if norm2(a) > norm2(b) {
            std::mem::swap(&mut a, &mut b);
        }
        let mu = ((a[0] * b[0] + a[1] * b[1]) / norm2(a)).round();
        if mu == 0.0 {
            break;
        }
        b = [b[0] - mu * a[0], b[1] - mu * a[1]];
    }
    (a, b)
}

/// Options for [`find_lattice_generators`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeOptions {
    /// Time budget for the `B`-flow search for returns to the seed's `u`-line.
    pub t_max_b: f64,
    /// Time budget for the `u`-flow search for returns to the seed's `B`-line.
    pub t_max_u: f64,
    /// Candidates whose displacement is not within this fraction of the
    /// tangent plane spanned by `u` and `B` are discarded.
    pub linear_fraction: f64,
    pub max_newton: usize,
    /// Largest sublattice index looked for once a basis candidate is found.
    /// Near-returns on surfaces with a rotation number far from an integer
    /// take several poloidal turns and only span a sublattice.
    pub max_index: usize,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        Self {
            t_max_b: 300.0,
            t_max_u: 60.0,
            linear_fraction: 0.5,
            max_newton: 30,
            max_index: 16,
        }
    }
}

/// Newton iteration on `φ_t(seed) = seed`, using `∂φ_t/∂t = [u, B]` at the
/// image point.
pub fn polish_lattice_vector(
    action: &ActionFlow,
    seed: Point3,
    t0: [f64; 2],
    max_iter: usize,
) -> Result<([f64; 2], f64)> {
    let mut t = Vector2::new(t0[0], t0[1]);
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let y = action.apply(seed, [t.x, t.y])?;
        let f = y - seed;
        residual = f.norm();
        if residual < FIXED_POINT_TOL {
            return Ok(([t.x, t.y], residual));
        }
        let u = action.u_at(&y).ok_or(Error::Domain(y))?;
        let b = action.b_at(&y).ok_or(Error::Domain(y))?;
        let j = Matrix3x2::from_columns(&[u, b]);
        let jtj = j.transpose() * j;
        let dt = jtj
            .try_inverse()
            .ok_or(Error::DegenerateGeometry("u and B are parallel".into()))?
            * (j.transpose() * f);
        t -= dt;
        if !t.iter().all(|v| v.is_finite()) {
            break;
        }
        // stalled at the integrator noise
        if it > 3 && dt.norm() < 1e-14 * t.norm().max(1.0) {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
        last: vec![t.x, t.y],
    })
}

/// Least-squares `d ≈ a·p + b·q`, with the relative residual.
fn decompose(d: &Vec3, p: &Vec3, q: &Vec3) -> Option<(f64, f64, f64)> {
    let j = Matrix3x2::from_columns(&[*p, *q]);
    let sol = (j.transpose() * j).try_inverse()? * (j.transpose() * d);
    let res = (d - j * sol).norm();
    Some((sol.x, sol.y, res))
}

/// Near-returns of one flow to the other flow's line through `seed`, as
/// approximate lattice vectors, kept when `|along|` sets a new minimum.
#[allow(clippy::too_many_arguments)]
fn candidates<F: FnMut(&Vec3) -> Option<Vec3>>(
    rhs: F,
    seed: Point3,
    own: Vec3,
    other: Vec3,
    own_is_u: bool,
    t_max: f64,
    opts: &LatticeOptions,
    tol: &Tolerances,
) -> Result<Vec<[f64; 2]>> {
    let section = SectionSpec::Plane {
        point: seed,
        normal: own,
    };
    let live = crossings_of_flow(
        rhs,
        seed,
        &section,
        usize::MAX,
        CountMode::Returns,
        t_max,
        tol,
    )?;
    let mut out = Vec::new();
    let mut best = f64::INFINITY;
    for c in live.returns() {
        let d = c.point - seed;
        // d ≈ a·other + b·own
        let Some((a, b, res)) = decompose(&d, &other, &own) else {
            continue;
        };
        if res > opts.linear_fraction * d.norm() + 1e-12 {
            continue;
        }
        if a.abs() < best {
            best = a.abs();
            let v = if own_is_u {
                [c.t - b, -a]
            } else {
                [-a, c.t - b]
            };
            out.push(v);
        }
    }
    Ok(out)
}

/// Generators of the period lattice through `seed`, Lagrange-reduced, with
/// `Δ = det[T1 T2] > 0`.
pub fn find_lattice_generators(
    action: &ActionFlow,
    seed: Point3,
    opts: &LatticeOptions,
) -> Result<LatticeBasis> {
    let field = action.field;
    if !field.contains(&seed) {
        return Err(Error::Domain(seed));
    }
    let u0 = action
        .u_at(&seed)
        .ok_or(Error::MissingCapability("a symmetry field"))?;
    let b0 = field.b(&seed);
    if u0.cross(&b0).norm() < 1e-10 * u0.norm() * b0.norm() {
        return Err(Error::DegenerateGeometry(
            "u and B are parallel at the seed".into(),
        ));
    }

    let mut cands = candidates(
        |y: &Vec3| action.b_at(y),
        seed,
        b0,
        u0,
        false,
        opts.t_max_b,
        opts,
        &action.tol,
    )?;
    cands.extend(candidates(
        |y: &Vec3| action.u_at(y),
        seed,
        u0,
        b0,
        true,
        opts.t_max_u,
        opts,
        &action.tol,
    )?);

    let mut vectors: Vec<[f64; 2]> = Vec::new();
    for c in cands {
        match polish_lattice_vector(action, seed, c, opts.max_newton) {
            Ok((v, _)) => {
                log::debug!("lattice candidate {c:?} polished to {v:?}");
                vectors.push(v)
            }
            Err(e) => log::debug!("lattice candidate {c:?} rejected: {e}"),
        }
    }
    if vectors.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} lattice vectors found within the time budget",
            vectors.len()
        )));
    }

    // the pair spanning the smallest nonzero area
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let (a, b) = (vectors[i], vectors[j]);
            let area = det(a, b).abs();
            if area > 1e-8 * norm2(a).sqrt() * norm2(b).sqrt()
                && best.is_none_or(|(m, _, _)| area < m * (1.0 - 1e-9))
            {
                best = Some((area, i, j));
            }
        }
    }
    let Some((_, i, j)) = best else {
        return Err(Error::DegenerateLattice { delta: 0.0 });
    };
    let (mut t1, mut t2) = (vectors[i], vectors[j]);
    let d = det(t1, t2);
    for w in &vectors {
        let alpha = det(*w, t2) / d;
        let beta = det(t1, *w) / d;
        if (alpha - alpha.round()).abs() > 1e-6 || (beta - beta.round()).abs() > 1e-6 {
            return Err(Error::InsufficientData(
                "found lattice vectors do not contain a basis; increase the time budgets".into(),
            ));
        }
    }

    (t1, t2) = lagrange_reduce(t1, t2);
    while let Some(finer) = refine_sublattice(action, seed, t1, t2, opts)? {
        log::debug!("lattice basis refined from {t1:?}, {t2:?} to {finer:?}");
        (t1, t2) = lagrange_reduce(finer.0, finer.1);
    }
    let (t1, r1) = polish_lattice_vector(action, seed, t1, opts.max_newton)?;
    let (mut t2, r2) = polish_lattice_vector(action, seed, t2, opts.max_newton)?;
    let mut delta = det(t1, t2);
    if delta < 0.0 {
        t2 = [-t2[0], -t2[1]];
        delta = -delta;
    }
    if delta < 1e-10 * norm2(t1).sqrt() * norm2(t2).sqrt() {
        return Err(Error::DegenerateLattice { delta });
    }
    Ok(LatticeBasis {
        t1,
        t2,
        delta,
        surface_label: field.psi(&seed),
        seed,
        residual: r1.max(r2),
    })
}

fn is_prime(p: usize) -> bool {
    p >= 2 && (2..p).take_while(|d| d * d <= p).all(|d| p % d != 0)
}

/// A basis of a lattice containing `[t1, t2]` with index `p`, for the
/// smallest prime `p <= max_index` for which one exists. Every such lattice
/// is spanned by `t1/p, t2` or by `t1, (i t1 + t2)/p`.
fn refine_sublattice(
    action: &ActionFlow,
    seed: Point3,
    t1: [f64; 2],
    t2: [f64; 2],
    opts: &LatticeOptions,
) -> Result<Option<([f64; 2], [f64; 2])>> {
    let scale = action.field.b(&seed).norm().max(1.0) * (norm2(t1) + norm2(t2)).sqrt();
    for p in (2..=opts.max_index).filter(|&p| is_prime(p)) {
        let pf = p as f64;
        // (guess, whether it replaces t2)
        let guesses = std::iter::once(([t1[0] / pf, t1[1] / pf], false)).chain((0..p).map(|i| {
            let i = i as f64;
            ([(i * t1[0] + t2[0]) / pf, (i * t1[1] + t2[1]) / pf], true)
        }));
        for (g, replaces_t2) in guesses {
            let y = action.apply(seed, g)?;
            // a true lattice point is known to the accuracy of t1 and t2
            if (y - seed).norm() > 1e-6 * scale {
                continue;
            }
            let Ok((v, _)) = polish_lattice_vector(action, seed, g, opts.max_newton) else {
                continue;
            };
            return Ok(Some(if replaces_t2 { (t1, v) } else { (v, t2) }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Classification {
    /// `𝒯 = [[τ, c], [0, T]]` in a unimodular change of basis.
    Quasisymmetric {
        tau: f64,
        t: f64,
        c: f64,
    },
    General,
}

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a.abs(), a.signum(), 0)
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

/// Looks for a lattice vector with vanishing `t_B` (a closed `u`-line) among
/// small combinations of the basis.
pub fn classify_quasisymmetric_form(basis: &LatticeBasis, tol: f64) -> Classification {
    const K: i64 = 12;
    let mut best: Option<(f64, i64, i64)> = None;
    for i in -K..=K {
        for j in -K..=K {
            if (i, j) == (0, 0) || ext_gcd(i, j).0 != 1 {
                continue;
            }
            let w = [
                i as f64 * basis.t1[0] + j as f64 * basis.t2[0],
                i as f64 * basis.t1[1] + j as f64 * basis.t2[1],
            ];
            if w[1].abs() < tol && w[0] > 0.0 && best.is_none_or(|(n, _, _)| w[0] < n) {
                best = Some((w[0], i, j));
            }
        }
    }
    let Some((tau, i, j)) = best else {
        return Classification::General;
    };
    // complete (i, j) to a unimodular matrix [[i, k], [j, l]]
    let (_, x, y) = ext_gcd(i, j);
    let (k, l) = (-y, x);
    let mut w2 = [
        k as f64 * basis.t1[0] + l as f64 * basis.t2[0],
        k as f64 * basis.t1[1] + l as f64 * basis.t2[1],
    ];
    if w2[1] < 0.0 {
        w2 = [-w2[0], -w2[1]];
    }
    let c = w2[0] - (w2[0] / tau).round() * tau;
    Classification::Quasisymmetric { tau, t: w2[1], c }
}

/// Period of the `u`-line through `x`: the first return of the `u`-flow to
/// the plane through `x` normal to `u(x)` that lands back on `x`.
pub fn u_line_period(action: &ActionFlow, x: Point3, t_max: f64) -> Result<f64> {
    let u0 = action
        .u_at(&x)
        .ok_or(Error::MissingCapability("a symmetry field"))?;
    let section = SectionSpec::Plane {
        point: x,
        normal: u0,
    };
    let live = crossings_of_flow(
        |y: &Vec3| action.u_at(y),
        x,
        &section,
        usize::MAX,
        CountMode::Returns,
        t_max,
        &action.tol,
    )?;
    let scale = 1e-6 * x.norm().max(1.0);
    let t = live
        .returns()
        .find(|c| (c.point - x).norm() < scale)
        .map(|c| c.t);
    t.ok_or(Error::NoReturn { t_max })
}

/// First return time of the field line through `x` to `section`.
pub fn b_return_time(
    field: &dyn FieldModel,
    x: Point3,
    section: &SectionSpec,
    tol: &Tolerances,
    t_max: f64,
) -> Result<f64> {
    Ok(returns(field, x, section, 1, t_max, tol)?[0].t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_tokamak_field, TokamakCircularParams, TokamakField};
    use crate::geometry::Cylindrical;
    use std::f64::consts::{PI, TAU};

    fn tokamak() -> TokamakField {
        make_tokamak_field(TokamakCircularParams::default()).unwrap()
    }

    fn tol() -> Tolerances {
        Tolerances::new(1e-13, 1e-14)
    }

    #[test]
    fn u_flow_is_rigid_rotation() {
        let f = tokamak();
        let a = ActionFlow::new(&f, tol()).unwrap();
        let x = Cylindrical::new(1.5, 0.0, 0.0).to_cartesian();
        let y = flow_action(&a, x, [PI, 0.0]).unwrap();
        assert!((y - Cylindrical::new(1.5, PI, 0.0).to_cartesian()).norm() < 1e-10);
        let y = flow_action(&a, x, [TAU, 0.0]).unwrap();
        assert!((y - x).norm() < 1e-10);
    }

    #[test]
    fn one_poloidal_transit_returns_to_the_u_line() {
        let f = tokamak();
        let a = ActionFlow::new(&f, tol()).unwrap();
        let x = Cylindrical::new(1.5, 0.0, 0.0).to_cartesian();
        let y = flow_action(&a, x, [0.0, TAU]).unwrap();
        let c = Cylindrical::from_cartesian(&y);
        assert!((c.r - 1.5).abs() < 1e-9 && c.z.abs() < 1e-9);
        // φ advances by 2π/ι per poloidal transit
        let expected = (TAU / 0.75f64.sqrt()).rem_euclid(TAU);
        assert!((c.phi - expected).abs() < 1e-9);
    }

    #[test]
    fn perturbed_field_has_no_symmetry() {
        let f = make_tokamak_field(TokamakCircularParams {
            eps: 0.01,
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(
            ActionFlow::new(&f, tol()),
            Err(Error::MissingCapability(_))
        ));
    }

    #[test]
    fn tokamak_lattice() {
        let f = tokamak();
        let a = ActionFlow::new(&f, tol()).unwrap();
        let seed = Cylindrical::new(1.5, 0.0, 0.0).to_cartesian();
        let basis = find_lattice_generators(&a, seed, &LatticeOptions::default()).unwrap();
        assert!((basis.delta - 4.0 * PI * PI).abs() < 1e-7, "{basis:?}");
        assert!(basis.residual < 1e-8);
        for t in [basis.t1, basis.t2] {
            assert!((a.apply(seed, t).unwrap() - seed).norm() < 1e-8);
        }
        match classify_quasisymmetric_form(&basis, 1e-8) {
            Classification::Quasisymmetric { tau, t, .. } => {
                assert!((tau - TAU).abs() < 1e-8);
                assert!((t - TAU).abs() < 1e-8);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn delta_is_a_surface_invariant() {
        let f = tokamak();
        let a = ActionFlow::new(&f, tol()).unwrap();
        let pa = f.poloidal_angle();
        let s1 = pa.point(0.5, 0.0, 0.0);
        let s2 = pa.point(0.5, 2.1, 1.0);
        let b1 = find_lattice_generators(&a, s1, &LatticeOptions::default()).unwrap();
        let b2 = find_lattice_generators(&a, s2, &LatticeOptions::default()).unwrap();
        assert!((b1.delta - b2.delta).abs() < 1e-7);
    }

    #[test]
    fn primitive_basis_far_from_integer_rotation() {
        // rotation number near 3/4: the first close B-returns make three
        // poloidal turns
        let f = tokamak();
        let a = ActionFlow::new(&f, tol()).unwrap();
        for r in [0.62, 0.66, 0.7] {
            let seed = f.poloidal_angle().point(r, 0.0, 0.0);
            let basis = find_lattice_generators(&a, seed, &LatticeOptions::default()).unwrap();
            assert!(
                (basis.delta - 4.0 * PI * PI).abs() < 1e-6,
                "r = {r}: {basis:?}"
            );
        }
    }

    #[test]
    fn reduction_and_unimodular_invariance() {
        let (a, b) = lagrange_reduce([1.0, 0.0], [7.3, 1.0]);
        assert_eq!(a, [1.0, 0.0]);
        assert!((b[0] - 0.3).abs() < 1e-12);
        let basis = LatticeBasis {
            t1: [TAU, 0.0],
            t2: [-0.97, TAU],
            delta: 4.0 * PI * PI,
            surface_label: None,
            seed: Vec3::zeros(),
            residual: 0.0,
        };
        let (v1, v2) = basis.transformed([[2, 3], [1, 2]]);
        assert!((det(v1, v2).abs() - basis.delta).abs() < 1e-12);
    }

    #[test]
    fn general_classification_fallback() {
        let basis = LatticeBasis {
            t1: [1.0, 0.3],
            t2: [0.2, 1.7],
            delta: 1.64,
            surface_label: None,
            seed: Vec3::zeros(),
            residual: 0.0,
        };
        assert_eq!(
            classify_quasisymmetric_form(&basis, 1e-8),
            Classification::General
        );
    }

    #[test]
    fn periods_of_the_two_flows() {
        let f = tokamak();
        let a = ActionFlow::new(&f, tol()).unwrap();
        let x = Cylindrical::new(1.3, 0.0, 0.1).to_cartesian();
        assert!((u_line_period(&a, x, 50.0).unwrap() - TAU).abs() < 1e-10);
        let sec = SectionSpec::PoloidalHalfPlane {
            r_c: 1.0,
            z_c: 0.0,
            theta0: 0.0,
        };
        let x = Cylindrical::new(1.4, 0.0, 0.0).to_cartesian();
        assert!((b_return_time(&f, x, &sec, &tol(), 50.0).unwrap() - TAU).abs() < 1e-9);
    }
}
