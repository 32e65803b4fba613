//! Field-line tracing, transverse sections and return maps.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::geometry::{Cylindrical, Point3, Vec3};
use crate::ode::{DenseStep, Dop853, StepFailure, Tolerances};

/// Events closer than this to the start of a trace are ignored, so that a
/// trace launched from a section does not report its own starting point.
const START_GUARD: f64 = 1e-8;

/// Crossings are refined until the section function is below this.
pub const CROSSING_TOL: f64 = 1e-12;

/// Relative threshold on `|∇g·ẋ| / (|∇g| |ẋ|)` below which a crossing is
/// flagged as non-transverse.
pub const TRANSVERSALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    /// Follows `−B`; times are reported as elapsed (positive) time.
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceStatus {
    Completed,
    LeftDomain,
    StepUnderflow,
    MaxSteps,
}

impl From<StepFailure> for TraceStatus {
    fn from(f: StepFailure) -> Self {
        match f {
            StepFailure::LeftDomain => TraceStatus::LeftDomain,
            StepFailure::StepUnderflow => TraceStatus::StepUnderflow,
            StepFailure::MaxSteps => TraceStatus::MaxSteps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub t: f64,
    pub point: Point3,
    /// Sign of the time derivative of the section function.
    pub direction: i8,
    pub transverse: bool,
}

impl CrossingEvent {
    /// Positive, transverse: the events that count as returns.
    pub fn is_return(&self) -> bool {
        self.direction > 0 && self.transverse
    }
}

/// A surface transverse to the flow, given as the zero set of a section
/// function `g` restricted to a half-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SectionSpec {
    /// The meridional half-plane `φ = phi0`.
    ToroidalPlane { phi0: f64 },
    /// The surface of revolution `ϑ = theta0`, where `ϑ` is the poloidal angle
    /// about the circle `R = r_c, Z = z_c` measured from `+R̂` towards `−Ẑ`.
    PoloidalHalfPlane { r_c: f64, z_c: f64, theta0: f64 },
    /// The full plane through `point` with normal `normal`.
    Plane { point: Point3, normal: Vec3 },
}

impl SectionSpec {
    pub fn toroidal(phi0: f64) -> Self {
        SectionSpec::ToroidalPlane { phi0 }
    }

    pub fn value(&self, x: &Point3) -> f64 {
        match *self {
            SectionSpec::ToroidalPlane { phi0 } => {
                let (s, c) = phi0.sin_cos();
                -s * x.x + c * x.y
            }
            SectionSpec::PoloidalHalfPlane { r_c, z_c, theta0 } => {
                let cyl = Cylindrical::from_cartesian(x);
                let (s, c) = theta0.sin_cos();
                -s * (cyl.r - r_c) - c * (cyl.z - z_c)
            }
            SectionSpec::Plane { point, normal } => normal.dot(&(x - point)),
        }
    }

    pub fn gradient(&self, x: &Point3) -> Vec3 {
        match *self {
            SectionSpec::ToroidalPlane { phi0 } => {
                let (s, c) = phi0.sin_cos();
                Vec3::new(-s, c, 0.0)
            }
            SectionSpec::PoloidalHalfPlane { theta0, .. } => {
                let cyl = Cylindrical::from_cartesian(x);
                let (s, c) = theta0.sin_cos();
                cyl.vector_from_components(-s, 0.0, -c)
            }
            SectionSpec::Plane { normal, .. } => normal,
        }
    }

    /// Whether a zero of `g` at `x` belongs to the section (selects the half
    /// of the zero set that forms the section).
    pub fn accepts(&self, x: &Point3) -> bool {
        match *self {
            SectionSpec::ToroidalPlane { phi0 } => {
                let (s, c) = phi0.sin_cos();
                c * x.x + s * x.y > 0.0
            }
            SectionSpec::PoloidalHalfPlane { r_c, z_c, theta0 } => {
                let cyl = Cylindrical::from_cartesian(x);
                let (s, c) = theta0.sin_cos();
                c * (cyl.r - r_c) - s * (cyl.z - z_c) > 0.0
            }
            SectionSpec::Plane { .. } => true,
        }
    }

    /// Orthonormal frame `(origin, e1, e2)` of a flat section.
    pub fn frame(&self) -> Option<(Point3, Vec3, Vec3)> {
        match *self {
            SectionSpec::ToroidalPlane { phi0 } => {
                let (s, c) = phi0.sin_cos();
                Some((Vec3::zeros(), Vec3::new(c, s, 0.0), Vec3::z()))
            }
            SectionSpec::PoloidalHalfPlane { .. } => None,
            SectionSpec::Plane { point, normal } => {
                let n = normal.normalize();
                let trial = if n.x.abs() < 0.9 {
                    Vec3::x()
                } else {
                    Vec3::y()
                };
                let e1 = (trial - n * n.dot(&trial)).normalize();
                Some((point, e1, n.cross(&e1)))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SectionSpec::ToroidalPlane { phi0 } => phi0.is_finite(),
            SectionSpec::PoloidalHalfPlane { r_c, z_c, theta0 } => {
                r_c.is_finite() && z_c.is_finite() && theta0.is_finite()
            }
            SectionSpec::Plane { point, normal } => {
                point.iter().all(|v| v.is_finite())
                    && normal.norm() > 0.0
                    && normal.iter().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad section {self:?}")))
        }
    }
}

/// A traced field line with its dense output.
#[derive(Debug, Clone)]
pub struct OrbitSegment {
    pub times: Vec<f64>,
    pub points: Vec<Point3>,
    pub crossings: Vec<CrossingEvent>,
    pub status: TraceStatus,
    pub direction: Direction,
    /// Right-hand-side evaluations spent on the trace.
    pub evaluations: u64,
    dense: Vec<DenseStep>,
}

impl OrbitSegment {
    pub fn end_point(&self) -> Point3 {
        *self
            .points
            .last()
            .expect("orbit has at least its start point")
    }

    pub fn end_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("orbit has at least its start time")
    }

    /// Position at time `t` from the continuous extension.
    pub fn point_at(&self, t: f64) -> Option<Point3> {
        let first = *self.times.first()?;
        if t < first || t > self.end_time() {
            return None;
        }
        if self.dense.is_empty() {
            return Some(self.points[0]);
        }
        let i = self
            .times
            .partition_point(|&s| s <= t)
            .saturating_sub(1)
            .min(self.dense.len() - 1);
        Some(self.dense[i].eval(t))
    }

    /// Records the crossings of `section` on this orbit.
    pub fn record_crossings(
        &mut self,
        section: &SectionSpec,
        field: &dyn FieldModel,
        max_count: usize,
    ) {
        self.crossings = find_crossings(self, section, field, max_count);
    }
}

fn flow_rhs(field: &dyn FieldModel, direction: Direction) -> impl Fn(&Vec3) -> Option<Vec3> + '_ {
    let s = direction.sign();
    move |x: &Vec3| field.contains(x).then(|| field.b(x) * s)
}

fn check_trace_args(
    field: &dyn FieldModel,
    start: &Point3,
    t_end: f64,
    tol: &Tolerances,
) -> Result<()> {
    if !field.contains(start) {
        return Err(Error::Domain(*start));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if !tol.is_valid() {
        return Err(Error::InvalidParameter(format!(
            "invalid tolerances {tol:?}"
        )));
    }
    Ok(())
}

/// Integrates `ẋ = B(x)` from `start` for time `t_end`.
///
/// Leaving the domain or a failing step truncates the orbit; the reason is in
/// `status`.
pub fn trace(
    field: &dyn FieldModel,
    start: Point3,
    t_end: f64,
    tol: &Tolerances,
) -> Result<OrbitSegment> {
    trace_in_direction(field, start, t_end, Direction::Forward, tol)
}

pub fn trace_in_direction(
    field: &dyn FieldModel,
    start: Point3,
    t_end: f64,
    direction: Direction,
    tol: &Tolerances,
) -> Result<OrbitSegment> {
    check_trace_args(field, &start, t_end, tol)?;
    let mut solver = Dop853::new(flow_rhs(field, direction), 0.0, start, 1.0, *tol)
        .map_err(|_| Error::Domain(start))?;
    let mut times = vec![0.0];
    let mut points = vec![start];
    let mut dense = Vec::new();
    let mut status = TraceStatus::Completed;
    while solver.t() < t_end {
        if let Err(f) = solver.step(Some(t_end)) {
            status = f.into();
            break;
        }
        match solver.dense() {
            Ok(d) => dense.push(d),
            Err(f) => {
                status = f.into();
                break;
            }
        }
        times.push(solver.t());
        points.push(solver.y());
    }
    // a failed dense evaluation leaves one more point than dense steps
    times.truncate(dense.len() + 1);
    points.truncate(dense.len() + 1);
    Ok(OrbitSegment {
        times,
        points,
        crossings: Vec::new(),
        status,
        direction,
        evaluations: solver.evaluations(),
        dense,
    })
}

/// Integrates an arbitrary vector field to time `t` (either sign).
pub fn flow_to<F: FnMut(&Vec3) -> Option<Vec3>>(
    mut rhs: F,
    start: Point3,
    t: f64,
    tol: &Tolerances,
) -> Result<Point3> {
    if t == 0.0 {
        return Ok(start);
    }
    // below the step-size floor a single Euler step is exact to rounding
    if t.abs() < 1e-12 {
        return Ok(start + rhs(&start).ok_or(Error::Domain(start))? * t);
    }
    let mut solver = Dop853::new(rhs, 0.0, start, t, *tol).map_err(|_| Error::Domain(start))?;
    while solver.t() != t {
        solver.step(Some(t)).map_err(|f| match f {
            StepFailure::LeftDomain => Error::Domain(solver.y()),
            other => Error::Integration {
                t: solver.t(),
                reason: format!("{other:?}"),
            },
        })?;
    }
    Ok(solver.y())
}

/// Refines a bracketed zero of `g` on one dense step (Illinois false position
/// with a bisection fallback).
fn refine(
    d: &DenseStep,
    section: &SectionSpec,
    mut ta: f64,
    mut tb: f64,
    mut ga: f64,
    mut gb: f64,
) -> (f64, Point3) {
    let mut side = 0i8;
    let mut t = tb;
    let mut x = d.eval(tb);
    for iter in 0..200 {
        let width = tb - ta;
        t = if iter % 8 == 7 {
            0.5 * (ta + tb)
        } else {
            let c = tb - gb * width / (gb - ga);
            if c > ta.min(tb) && c < ta.max(tb) {
                c
            } else {
                0.5 * (ta + tb)
            }
        };
        x = d.eval(t);
        let g = section.value(&x);
        if g.abs() <= CROSSING_TOL || width.abs() <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            break;
        }
        if (g < 0.0) == (gb < 0.0) {
            tb = t;
            gb = g;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        } else {
            ta = t;
            ga = g;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        }
    }
    (t, x)
}

fn make_event(t: f64, point: Point3, section: &SectionSpec, velocity: Vec3) -> CrossingEvent {
    let grad = section.gradient(&point);
    let rate = grad.dot(&velocity);
    CrossingEvent {
        t,
        point,
        direction: if rate >= 0.0 { 1 } else { -1 },
        transverse: rate.abs() >= TRANSVERSALITY_TOL * grad.norm() * velocity.norm(),
    }
}

/// Scans one step for a crossing. `g0`, `g1` are the section values at the
/// step ends.
fn scan_step(
    t0: f64,
    t1: f64,
    g0: f64,
    g1: f64,
    dense: impl FnOnce() -> Option<DenseStep>,
    section: &SectionSpec,
) -> Option<(f64, Point3)> {
    let crossed = g0 != 0.0 && ((g0 < 0.0) != (g1 < 0.0) || g1 == 0.0);
    if !crossed || t1 <= START_GUARD {
        return None;
    }
    let d = dense()?;
    let (t, x) = if g1 == 0.0 {
        (t1, d.eval(t1))
    } else {
        refine(&d, section, t0, t1, g0, g1)
    };
    (t > START_GUARD && section.accepts(&x)).then_some((t, x))
}

/// Crossings of `section` along a stored orbit, in increasing time.
pub fn find_crossings(
    orbit: &OrbitSegment,
    section: &SectionSpec,
    field: &dyn FieldModel,
    max_count: usize,
) -> Vec<CrossingEvent> {
    let s = orbit.direction.sign();
    let mut out = Vec::new();
    let mut g0 = section.value(&orbit.points[0]);
    for (i, d) in orbit.dense.iter().enumerate() {
        if out.len() >= max_count {
            break;
        }
        let g1 = section.value(&orbit.points[i + 1]);
        if let Some((t, x)) = scan_step(
            orbit.times[i],
            orbit.times[i + 1],
            g0,
            g1,
            || Some(*d),
            section,
        ) {
            out.push(make_event(t, x, section, field.b(&x) * s));
        }
        g0 = g1;
    }
    out
}

/// Which crossings count towards `max_count` in a live search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    All,
    Returns,
}

#[derive(Debug, Clone)]
pub struct LiveCrossings {
    pub crossings: Vec<CrossingEvent>,
    pub t_final: f64,
    pub status: TraceStatus,
    pub evaluations: u64,
}

impl LiveCrossings {
    pub fn returns(&self) -> impl Iterator<Item = &CrossingEvent> {
        self.crossings.iter().filter(|c| c.is_return())
    }
}

/// Crossings of `section` by the flow of an arbitrary vector field, found while
/// integrating; dense output is built only for steps that cross.
pub fn crossings_of_flow<F: FnMut(&Vec3) -> Option<Vec3>>(
    mut rhs: F,
    start: Point3,
    section: &SectionSpec,
    max_count: usize,
    mode: CountMode,
    t_max: f64,
    tol: &Tolerances,
) -> Result<LiveCrossings> {
    section.validate()?;
    if !tol.is_valid() || !(t_max > 0.0) {
        return Err(Error::InvalidParameter(
            "tolerances and t_max must be positive".into(),
        ));
    }
    let mut solver =
        Dop853::new(&mut rhs, 0.0, start, 1.0, *tol).map_err(|_| Error::Domain(start))?;
    let mut found = Vec::new();
    let mut counted = 0;
    let mut status = TraceStatus::Completed;
    let mut g0 = section.value(&start);
    while counted < max_count && solver.t() < t_max {
        let t0 = solver.t();
        if let Err(f) = solver.step(Some(t_max)) {
            status = f.into();
            break;
        }
        let t1 = solver.t();
        let g1 = section.value(&solver.y());
        let mut dense_failed = false;
        let hit = scan_step(
            t0,
            t1,
            g0,
            g1,
            || match solver.dense() {
                Ok(d) => Some(d),
                Err(_) => {
                    dense_failed = true;
                    None
                }
            },
            section,
        );
        if dense_failed {
            status = TraceStatus::LeftDomain;
            break;
        }
        if let Some((t, x)) = hit {
            let v = match solver.eval_external(&x) {
                Some(v) => v,
                None => {
                    status = TraceStatus::LeftDomain;
                    break;
                }
            };
            let ev = make_event(t, x, section, v);
            if mode == CountMode::All || ev.is_return() {
                counted += 1;
            }
            found.push(ev);
        }
        g0 = g1;
    }
    Ok(LiveCrossings {
        crossings: found,
        t_final: solver.t(),
        status,
        evaluations: solver.evaluations(),
    })
}

/// Live crossings of a field line with `section`.
pub fn find_crossings_live(
    field: &dyn FieldModel,
    start: Point3,
    section: &SectionSpec,
    max_count: usize,
    mode: CountMode,
    t_max: f64,
    tol: &Tolerances,
) -> Result<LiveCrossings> {
    if !field.contains(&start) {
        return Err(Error::Domain(start));
    }
    crossings_of_flow(
        flow_rhs(field, Direction::Forward),
        start,
        section,
        max_count,
        mode,
        t_max,
        tol,
    )
}

/// The first `n` returns of a field line to `section`. Fails if the line
/// leaves the domain or the time budget runs out first.
pub fn returns(
    field: &dyn FieldModel,
    start: Point3,
    section: &SectionSpec,
    n: usize,
    t_max: f64,
    tol: &Tolerances,
) -> Result<Vec<CrossingEvent>> {
    let live = find_crossings_live(field, start, section, n, CountMode::Returns, t_max, tol)?;
    let out: Vec<_> = live.returns().copied().collect();
    if out.len() < n {
        return Err(match live.status {
            TraceStatus::LeftDomain => Error::Domain(out.last().map_or(start, |c| c.point)),
            TraceStatus::Completed => Error::NoReturn { t_max },
            other => Error::Integration {
                t: live.t_final,
                reason: format!("{other:?}"),
            },
        });
    }
    Ok(out)
}

/// Options for the magnetic-axis search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisOptions {
    pub tol: Tolerances,
    /// Time budget for a single return.
    pub t_max: f64,
    pub fd_step: f64,
    /// Converged when the Newton step is below this.
    pub xtol: f64,
    /// Also converged when `|P(x) − x|` is below this. A fixed point whose
    /// linearization is the identity (rotational transform 1 on the axis) has
    /// a residual cubic in the distance, and Newton steps stall at the
    /// integrator noise before `xtol` is reached.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for AxisOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::new(1e-12, 1e-13),
            t_max: 200.0,
            fd_step: 1e-6,
            xtol: 1e-10,
            ftol: 1e-13,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticAxis {
    pub point: Point3,
    /// Period of the closed field line (its return time to the section).
    pub period: f64,
    /// `|P(x) − x|` at the returned point.
    pub residual: f64,
    pub iterations: usize,
}

/// The return map of a flat section in its own 2D coordinates.
pub struct ReturnMap<'a> {
    field: &'a dyn FieldModel,
    section: SectionSpec,
    origin: Point3,
    e1: Vec3,
    e2: Vec3,
    tol: Tolerances,
    t_max: f64,
}

impl<'a> ReturnMap<'a> {
    pub fn new(
        field: &'a dyn FieldModel,
        section: SectionSpec,
        tol: Tolerances,
        t_max: f64,
    ) -> Result<Self> {
        section.validate()?;
        let (origin, e1, e2) = section
            .frame()
            .ok_or_else(|| Error::InvalidParameter("return map needs a flat section".into()))?;
        Ok(Self {
            field,
            section,
            origin,
            e1,
            e2,
            tol,
            t_max,
        })
    }

    pub fn to_point(&self, xi: &Vector2<f64>) -> Point3 {
        self.origin + self.e1 * xi.x + self.e2 * xi.y
    }

    pub fn to_coords(&self, x: &Point3) -> Vector2<f64> {
        let d = x - self.origin;
        Vector2::new(d.dot(&self.e1), d.dot(&self.e2))
    }

    /// Image of `xi` and the return time.
    pub fn apply(&self, xi: &Vector2<f64>) -> Result<(Vector2<f64>, f64)> {
        let x = self.to_point(xi);
        let ev = returns(self.field, x, &self.section, 1, self.t_max, &self.tol)?;
        Ok((self.to_coords(&ev[0].point), ev[0].t))
    }
}

/// Fixed point of the return map to `section` by Newton iteration with a
/// central-difference Jacobian.
pub fn find_magnetic_axis(
    field: &dyn FieldModel,
    guess: Point3,
    section: &SectionSpec,
    opts: &AxisOptions,
) -> Result<MagneticAxis> {
    let map = ReturnMap::new(field, *section, opts.tol, opts.t_max)?;
    let mut xi = map.to_coords(&guess);
    let h = opts.fd_step;
    let mut residual = f64::INFINITY;
    let fail = |iterations: usize, residual: f64, xi: &Vector2<f64>| Error::NoConvergence {
        iterations,
        residual,
        last: map.to_point(xi).iter().copied().collect(),
    };
    for it in 1..=opts.max_iter {
        let (p, period) = map.apply(&xi)?;
        let f = p - xi;
        residual = f.norm();
        if residual < opts.ftol {
            return Ok(MagneticAxis {
                point: map.to_point(&xi),
                period,
                residual,
                iterations: it - 1,
            });
        }
        let mut jac = Matrix2::zeros();
        for k in 0..2 {
            let mut e = Vector2::zeros();
            e[k] = h;
            let (pp, _) = map.apply(&(xi + e))?;
            let (pm, _) = map.apply(&(xi - e))?;
            let col = (pp - pm) / (2.0 * h) - e / h;
            jac.set_column(k, &col);
        }
        let Some(inv) = jac.try_inverse() else {
            return Err(fail(it, residual, &xi));
        };
        let dx = -(inv * f);
        if !dx.iter().all(|v| v.is_finite()) {
            return Err(fail(it, residual, &xi));
        }
        xi += dx;
        if !field.contains(&map.to_point(&xi)) {
            return Err(Error::Domain(map.to_point(&xi)));
        }
        if dx.norm() < opts.xtol {
            let (p, period) = map.apply(&xi)?;
            return Ok(MagneticAxis {
                point: map.to_point(&xi),
                period,
                residual: (p - xi).norm(),
                iterations: it,
            });
        }
    }
    Err(fail(opts.max_iter, residual, &xi))
}
