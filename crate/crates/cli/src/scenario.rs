//! Volume methods on the configured field, instrumented for cost.

use std::f64::consts::PI;
use std::time::Instant;

use anyhow::{anyhow, Context};
use fluxvol_core::diagnostics::{collect_returns, estimate_iota_closest_returns, mean_return_time};
use fluxvol_core::field::DOMAIN_FRACTION;
use fluxvol_core::percival::{solve_stationary, Grid, SolveReport, SolverOptions};
use fluxvol_core::symmetry::{b_return_time, u_line_period, ActionFlow, LatticeOptions};
use fluxvol_core::volume::{
    volume_eq1_section, volume_monte_carlo, volume_poincare_boundary, volume_profile_general,
    volume_profile_lattice, volume_profile_quasisym, volume_stokes_surface, BoundaryCurve,
    CircularSurfaces, GeneralOptions, LabelBelow, Primitive, ReturnTimeTable, SectionDisk,
    SectionFrame, SurfaceFamily, SurfaceMesh, TracedSurfaces,
};
use fluxvol_core::{
    BoundingBox, CountingField, Error, FieldModel, FrequencyVector, Point3, SectionSpec,
    TokamakField, TorusEmbedding, VolumeMethod, VolumeProfile,
};
use serde::Serialize;

use crate::config::{RunConfig, ScenarioConfig, SurfaceSource};

/// Outcome of one method: the profile if it completed, its cost and the
/// self-checks it passed or failed.
#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: VolumeMethod,
    pub profile: Option<VolumeProfile>,
    pub field_evaluations: u64,
    #[serde(skip)]
    pub wall_time_s: f64,
    pub error: Option<String>,
    /// False when the field lacks a structure the method needs (a symmetry,
    /// a vector potential).
    pub applicable: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

impl MethodReport {
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.passed)
    }
}

/// `2π² R0 r²`, the volume of the circular torus of minor radius `r`.
pub fn pappus(r0: f64, r: f64) -> f64 {
    2.0 * PI * PI * r0 * r * r
}

/// What the methods share: the field, its tolerances and the label grid.
pub struct Setup<'a> {
    pub config: &'a RunConfig,
    pub tokamak: &'a TokamakField,
    pub labels: Vec<f64>,
}

impl<'a> Setup<'a> {
    pub fn new(config: &'a RunConfig, tokamak: &'a TokamakField) -> Self {
        Self {
            config,
            tokamak,
            labels: config.scenario.labels.values(),
        }
    }

    fn r0(&self) -> f64 {
        self.tokamak.params().r0
    }

    fn t_return(&self) -> f64 {
        self.config.tolerances.t_return
    }

    fn seed_point(&self, r: f64) -> Point3 {
        self.tokamak.poloidal_angle().point(r, 0.0, 0.0)
    }

    fn analytic_family(&self) -> CircularSurfaces {
        CircularSurfaces {
            angle: self.tokamak.poloidal_angle(),
            phi0: 0.0,
        }
    }
}

/// Runs `method` on a counting wrapper of the field.
pub fn run_method(setup: &Setup, method: VolumeMethod) -> MethodReport {
    let field = CountingField::new(setup.tokamak);
    let started = Instant::now();
    let result = match method {
        VolumeMethod::Eq1 => eq1(setup, &field),
        VolumeMethod::Quasisym => quasisym(setup, &field),
        VolumeMethod::Lattice => lattice(setup, &field),
        VolumeMethod::General => general(setup, &field, setup.config.scenario.general.n_returns),
        VolumeMethod::Stokes => stokes(setup, &field),
        VolumeMethod::Poincare => poincare(setup, &field),
        VolumeMethod::MonteCarlo => monte_carlo(setup, &field),
    };
    let wall_time_s = started.elapsed().as_secs_f64();
    let field_evaluations = field.evaluations();
    match result {
        Ok((profile, mut checks)) => {
            checks.insert(
                0,
                Check::new(
                    "finite",
                    profile.volumes.iter().all(|v| v.is_finite()),
                    "every volume is finite",
                ),
            );
            checks.push(Check::new(
                "monotone",
                profile.is_monotone(),
                "volume grows with the label",
            ));
            MethodReport {
                method,
                profile: Some(profile),
                field_evaluations,
                wall_time_s,
                error: None,
                applicable: true,
                checks,
            }
        }
        Err(e) => {
            let applicable =
                !matches!(e.downcast_ref::<Error>(), Some(Error::MissingCapability(_)));
            if applicable {
                log::error!("{method}: {e:#}");
            } else {
                log::warn!("{method}: {e:#}");
            }
            MethodReport {
                method,
                profile: None,
                field_evaluations,
                wall_time_s,
                error: Some(format!("{e:#}")),
                applicable,
                checks: Vec::new(),
            }
        }
    }
}

type MethodResult = anyhow::Result<(VolumeProfile, Vec<Check>)>;

/// Profile from independent volumes at each label, with `dV/dlabel` from
/// quadratic interpolation through the axis and the neighbouring labels.
fn pointwise(
    labels: &[f64],
    volumes: Vec<f64>,
    errors: Vec<f64>,
    method: VolumeMethod,
) -> VolumeProfile {
    let x: Vec<f64> = std::iter::once(0.0).chain(labels.iter().copied()).collect();
    let y: Vec<f64> = std::iter::once(0.0)
        .chain(volumes.iter().copied())
        .collect();
    let dv = (1..x.len())
        .map(|i| {
            if x.len() < 3 {
                return f64::NAN;
            }
            // three nodes around i, shifted inward at the last label
            let j = i.min(x.len() - 2);
            let (x0, x1, x2) = (x[j - 1], x[j], x[j + 1]);
            let (y0, y1, y2) = (y[j - 1], y[j], y[j + 1]);
            let t = x[i];
            y0 * (2.0 * t - x1 - x2) / ((x0 - x1) * (x0 - x2))
                + y1 * (2.0 * t - x0 - x2) / ((x1 - x0) * (x1 - x2))
                + y2 * (2.0 * t - x0 - x1) / ((x2 - x0) * (x2 - x1))
        })
        .collect();
    VolumeProfile {
        labels: labels.to_vec(),
        volumes,
        dv_dlabel: dv,
        error_estimate: errors,
        method,
        reference_label: 0.0,
        reference_volume: 0.0,
    }
}

/// A profile in `ψ = r²/2` re-expressed in the minor radius.
fn psi_to_radius(mut p: VolumeProfile, radii: &[f64]) -> VolumeProfile {
    for (d, r) in p.dv_dlabel.iter_mut().zip(radii) {
        *d *= r;
    }
    p.labels = radii.to_vec();
    p
}

fn psi_labels(radii: &[f64]) -> Vec<f64> {
    radii
        .iter()
        .map(|&r| TokamakField::psi_of_radius(r))
        .collect()
}

fn eq1(setup: &Setup, field: &dyn FieldModel) -> MethodResult {
    let tol = setup.config.tolerances.ode();
    let mut volumes = Vec::new();
    let mut errors = Vec::new();
    let mut flagged = 0;
    for &r in &setup.labels {
        let disk = SectionDisk {
            section: SectionSpec::toroidal(0.0),
            center: [setup.r0(), 0.0],
            radius: r,
        };
        let v = volume_eq1_section(
            field,
            &disk,
            setup.config.scenario.eq1,
            &tol,
            setup.t_return(),
        )?;
        flagged += v.flagged;
        volumes.push(v.volume);
        errors.push(v.error_estimate);
    }
    let checks = vec![Check::new(
        "no_flagged_nodes",
        flagged == 0,
        format!("{flagged} section nodes failed to return"),
    )];
    Ok((
        pointwise(&setup.labels, volumes, errors, VolumeMethod::Eq1),
        checks,
    ))
}

fn quasisym(setup: &Setup, field: &dyn FieldModel) -> MethodResult {
    let action = ActionFlow::new(field, setup.config.tolerances.ode())?;
    let half_plane = SectionSpec::PoloidalHalfPlane {
        r_c: setup.r0(),
        z_c: 0.0,
        theta0: 0.0,
    };
    let seed = |psi: f64| setup.seed_point((2.0 * psi).sqrt());
    let tau = |psi: f64| u_line_period(&action, seed(psi), setup.t_return());
    let t = |psi: f64| b_return_time(field, seed(psi), &half_plane, &action.tol, setup.t_return());
    let p = volume_profile_quasisym(
        &psi_labels(&setup.labels),
        0.0,
        &tau,
        &t,
        setup.config.scenario.profile_rule,
    )?;
    Ok((psi_to_radius(p, &setup.labels), Vec::new()))
}

fn lattice(setup: &Setup, field: &dyn FieldModel) -> MethodResult {
    let action = ActionFlow::new(field, setup.config.tolerances.ode())?;
    let seed = |psi: f64| Ok(setup.seed_point((2.0 * psi).sqrt()));
    let p = volume_profile_lattice(
        &action,
        &psi_labels(&setup.labels),
        0.0,
        &seed,
        &LatticeOptions::default(),
        setup.config.scenario.profile_rule,
    )?;
    Ok((psi_to_radius(p, &setup.labels), Vec::new()))
}

pub fn general(setup: &Setup, field: &dyn FieldModel, n_returns: usize) -> MethodResult {
    let g = &setup.config.scenario.general;
    let tol = setup.config.tolerances.ode();
    let opts = GeneralOptions {
        n_returns,
        max_returns: g.max_returns.max(n_returns),
        tol,
        t_max: setup.t_return() * n_returns as f64,
        n_quad: g.n_quad,
        rule: g.rule,
    };
    let family: Box<dyn SurfaceFamily> = match g.surfaces {
        SurfaceSource::Analytic => Box::new(setup.analytic_family()),
        SurfaceSource::Numerical => Box::new(TracedSurfaces::new(
            setup.tokamak.poloidal_angle(),
            0.0,
            tol,
        )),
    };
    let p = volume_profile_general(field, family.as_ref(), &setup.labels, 0.0, &opts)?;
    Ok((p, Vec::new()))
}

/// Rotation number and mean return time of the surface through the seed at
/// minor radius `r`, from `n` returns to `φ = 0`.
pub fn surface_winding(
    setup: &Setup,
    field: &dyn FieldModel,
    r: f64,
    n: usize,
) -> anyhow::Result<(f64, f64)> {
    let angle = setup.tokamak.poloidal_angle();
    let series = collect_returns(
        field,
        setup.seed_point(r),
        &SectionSpec::toroidal(0.0),
        n,
        |x| angle.turns(x),
        setup.t_return() * n as f64,
        &setup.config.tolerances.ode(),
    )?;
    let iota = estimate_iota_closest_returns(&series)?;
    let mean = mean_return_time(&series, &iota)?;
    Ok((iota.iota, mean.mean))
}

/// Solves for the invariant torus with the rotation number measured at `r`.
pub fn percival_surface(
    setup: &Setup,
    field: &dyn FieldModel,
    r: f64,
    k: usize,
    n_returns: usize,
) -> anyhow::Result<(TorusEmbedding, FrequencyVector, SolveReport)> {
    let (iota, _) = surface_winding(setup, field, r, n_returns)?;
    let omega = FrequencyVector::from_iota(iota)?;
    let pc = &setup.config.scenario.percival;
    let opts = SolverOptions {
        grid: Grid {
            n1: pc.grid.max(2 * k + 2),
            n2: pc.grid.max(2 * k + 2),
        },
        tol: pc.tol,
        max_iter: pc.max_iter,
        ..SolverOptions::default()
    };
    let init = TorusEmbedding::circular(k, setup.r0(), 0.0, r, true);
    let (x, _, report) = solve_stationary(field, &omega, &init, &opts)
        .with_context(|| format!("invariant torus at r = {r}"))?;
    Ok((x, omega, report))
}

fn stokes(setup: &Setup, field: &dyn FieldModel) -> MethodResult {
    let s = &setup.config.scenario.stokes;
    let mut volumes = Vec::new();
    let mut errors = Vec::new();
    for &r in &setup.labels {
        let mesh = match s.surfaces {
            SurfaceSource::Analytic => SurfaceMesh::circular_torus(setup.r0(), r, s.n1, s.n2)?,
            SurfaceSource::Numerical => {
                let (x, _, _) = percival_surface(setup, field, r, s.k, s.n_returns)?;
                x.mesh(Grid { n1: s.n1, n2: s.n2 })?
            }
        };
        let v = volume_stokes_surface(&mesh, Primitive::X)?;
        volumes.push(v.volume);
        errors.push(v.error_estimate);
    }
    Ok((
        pointwise(&setup.labels, volumes, errors, VolumeMethod::Stokes),
        Vec::new(),
    ))
}

fn poincare(setup: &Setup, field: &dyn FieldModel) -> MethodResult {
    let pc = &setup.config.scenario.poincare;
    let tol = setup.config.tolerances.ode();
    let frame = SectionFrame::new(SectionSpec::toroidal(0.0))?;
    let center = [setup.r0(), 0.0];
    let r_max = setup
        .labels
        .last()
        .copied()
        .ok_or_else(|| anyhow!("no labels"))?;
    let extent = (1.1 * r_max).min(0.5 * (r_max + DOMAIN_FRACTION * setup.r0()));
    let table = ReturnTimeTable::build(
        field,
        &frame,
        center,
        extent,
        pc.n_rays,
        pc.n_radii,
        &tol,
        setup.t_return(),
    )?;
    let coarse = table.coarsened()?;
    let g = |u: f64, v: f64| Ok(table.eval(u, v) * frame.density(field, &frame.point(u, v))?);
    let g_coarse =
        |u: f64, v: f64| Ok(coarse.eval(u, v) * frame.density(field, &frame.point(u, v))?);
    let mut volumes = Vec::new();
    let mut errors = Vec::new();
    for &r in &setup.labels {
        let boundary = BoundaryCurve::Circle { center, radius: r };
        let v = volume_poincare_boundary(&g, center, &boundary, pc.n_quad, pc.quad_tol)?;
        // interpolation error, bounded by the change from halving the radial spacing
        let vc = volume_poincare_boundary(&g_coarse, center, &boundary, pc.n_quad, pc.quad_tol)?;
        volumes.push(v.volume);
        errors.push(v.error_estimate + (v.volume - vc.volume).abs());
    }
    Ok((
        pointwise(&setup.labels, volumes, errors, VolumeMethod::Poincare),
        Vec::new(),
    ))
}

/// Sampling box around the torus of minor radius `r`, padded by `margin`.
pub fn torus_box(r0: f64, r: f64, margin: f64) -> BoundingBox {
    let outer = (r0 + r) * (1.0 + margin);
    let h = r * (1.0 + margin);
    BoundingBox {
        min: [-outer, -outer, -h],
        max: [outer, outer, h],
    }
}

fn monte_carlo(setup: &Setup, field: &dyn FieldModel) -> MethodResult {
    let mc = &setup.config.scenario.mc;
    let mut volumes = Vec::new();
    let mut errors = Vec::new();
    for (i, &r) in setup.labels.iter().enumerate() {
        let inside = LabelBelow::new(field, TokamakField::psi_of_radius(r))?;
        let bbox = torus_box(setup.r0(), r, mc.margin);
        let seed = setup.config.scenario.seed.wrapping_add(i as u64);
        let est = volume_monte_carlo(&inside, &bbox, mc.samples, seed)?;
        volumes.push(est.volume);
        errors.push(est.half_width);
    }
    Ok((
        pointwise(&setup.labels, volumes, errors, VolumeMethod::MonteCarlo),
        Vec::new(),
    ))
}

/// Accuracy each method is held to against the circular-torus volume.
pub fn benchmark_tolerance(method: VolumeMethod, scenario: &ScenarioConfig) -> f64 {
    match method {
        // limited by the fit of the numerical torus, not by the surface integral
        VolumeMethod::Stokes if scenario.stokes.surfaces == SurfaceSource::Numerical => 1e-6,
        VolumeMethod::Eq1 | VolumeMethod::General | VolumeMethod::Poincare => 1e-4,
        VolumeMethod::Quasisym | VolumeMethod::Lattice => 1e-6,
        VolumeMethod::Stokes => 1e-9,
        // judged by its confidence interval instead
        VolumeMethod::MonteCarlo => f64::INFINITY,
    }
}

/// Adds the comparison with `2π² R0 r²` to a report when the surfaces are
/// known to be circular.
pub fn check_against_pappus(report: &mut MethodReport, setup: &Setup) {
    let r0 = setup.r0();
    let Some(p) = &report.profile else {
        return;
    };
    let mut worst = 0.0f64;
    let mut passed = true;
    for ((&r, &v), &err) in p.labels.iter().zip(&p.volumes).zip(&p.error_estimate) {
        let dev = (v - pappus(r0, r)).abs();
        worst = worst.max(dev);
        passed &= if report.method == VolumeMethod::MonteCarlo {
            dev <= err
        } else {
            dev <= benchmark_tolerance(report.method, &setup.config.scenario)
        };
    }
    report.checks.push(Check::new(
        "pappus",
        passed,
        format!("largest deviation from 2 pi^2 R0 r^2 is {worst:e}"),
    ));
}
