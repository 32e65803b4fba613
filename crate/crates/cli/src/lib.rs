//! Batch front end for the flux-surface volume library.

pub mod config;
pub mod output;
pub mod scenario;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fluxvol_core::diagnostics::{estimate_iota_closest_returns, mean_return_time, ReturnSeries};
use fluxvol_core::fluxes::{flux_derivative, loop_flux};
use fluxvol_core::percival::{
    eval_p, first_variation_residual, flux_from_dp_domega, solve_stationary, Grid, SolverOptions,
};
use fluxvol_core::symmetry::{
    classify_quasisymmetric_form, find_lattice_generators, ActionFlow, LatticeOptions,
};
use fluxvol_core::tracer::{returns, trace};
use fluxvol_core::volume::{CircularSurfaces, SurfaceFamily};
use fluxvol_core::{
    CountingField, Cylindrical, FieldModel, FrequencyVector, LoopSpec, Point3, SectionSpec,
    TorusEmbedding, VolumeMethod,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{LoadedConfig, RunConfig};
use crate::output::{
    emit_plot_data, num, resolve, sidecar_path, write_csv, write_json, Provenance,
};
use crate::scenario::{
    check_against_pappus, general, pappus, percival_surface, run_method, MethodReport, Setup,
};

#[derive(Debug, Parser)]
#[command(
    name = "fluxvol",
    version,
    about = "Volumes enclosed by magnetic flux surfaces"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Random seed overriding the configuration. For `lattice` this is the
    /// seed point `R,phi,Z` instead.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub seed: Option<String>,
    /// More log output (repeat for more).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LoopKind {
    Poloidal,
    Toroidal,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trace a field line and write the orbit as CSV.
    Trace {
        /// Start point `R,phi,Z`.
        #[arg(long, allow_hyphen_values = true)]
        start: String,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value = "orbit.csv")]
        out: PathBuf,
    },
    /// Rotation number and mean return time of a surface.
    Iota(WindingArgs),
    /// Mean return time and rotation number of a surface.
    ReturnTime(WindingArgs),
    /// Period lattice of the symmetry and field-line flows.
    Lattice {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flux through a loop on a circular surface, or its derivative.
    Flux {
        #[arg(long = "loop", value_enum)]
        kind: LoopKind,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = fluxvol_core::fluxes::DEFAULT_N_QUAD)]
        n_quad: usize,
        /// Rate of change of the flux with the minor radius instead.
        #[arg(long)]
        derivative: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Volume profile by one method.
    Volume {
        #[arg(long)]
        method: VolumeMethod,
        /// Profile CSV; a JSON sidecar with the same stem is written beside it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stationary torus of the Percival functional.
    Percival {
        /// Frequency vector `w1,w2`; measured on the initial surface when omitted.
        #[arg(long)]
        omega: Option<String>,
        #[arg(long = "K")]
        k: Option<usize>,
        /// Initial torus, `circular:r=<minor radius>`.
        #[arg(long, default_value = "circular:r=0.45")]
        init: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// All configured methods with a comparison table and cost report.
    Benchmark,
}

#[derive(Debug, Clone, Args)]
pub struct WindingArgs {
    /// Orbit CSV written by `trace`; its crossings of `phi = 0` are used.
    #[arg(long, conflicts_with_all = ["start", "r"])]
    pub orbit: Option<PathBuf>,
    /// Start point `R,phi,Z` to trace from.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "r")]
    pub start: Option<String>,
    /// Minor radius of the surface to trace from.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub n_returns: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit status of a completed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Some method failed or a self-check did not pass; results are on disk.
    Failed,
}

fn parse_triple(s: &str) -> anyhow::Result<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("expected three comma-separated numbers, got {s:?}"))?;
    ensure!(
        v.len() == 3 && v.iter().all(|x| x.is_finite()),
        "expected R,phi,Z, got {s:?}"
    );
    Ok([v[0], v[1], v[2]])
}

fn parse_point(s: &str) -> anyhow::Result<Point3> {
    let [r, phi, z] = parse_triple(s)?;
    Ok(Cylindrical::new(r, phi, z).to_cartesian())
}

fn parse_pair(s: &str) -> anyhow::Result<[f64; 2]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("expected two comma-separated numbers, got {s:?}"))?;
    ensure!(v.len() == 2, "expected two numbers, got {s:?}");
    Ok([v[0], v[1]])
}

fn parse_init(s: &str) -> anyhow::Result<f64> {
    let r = s
        .strip_prefix("circular:r=")
        .ok_or_else(|| anyhow!("unsupported initial torus {s:?}; expected circular:r=<value>"))?;
    let r: f64 = r.parse().with_context(|| format!("bad radius in {s:?}"))?;
    ensure!(r > 0.0, "initial radius must be positive");
    Ok(r)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Trace { .. } => "trace",
        Command::Iota(_) => "iota",
        Command::ReturnTime(_) => "return-time",
        Command::Lattice { .. } => "lattice",
        Command::Flux { .. } => "flux",
        Command::Volume { .. } => "volume",
        Command::Percival { .. } => "percival",
        Command::Benchmark => "benchmark",
    }
}

/// Loads the configuration and applies the command-line overrides. Nothing
/// is written before this succeeds.
fn prepare(cli: &Cli) -> anyhow::Result<LoadedConfig> {
    let mut loaded = LoadedConfig::load(cli.global.config.as_deref())?;
    if let (Some(s), false) = (
        &cli.global.seed,
        matches!(cli.command, Command::Lattice { .. }),
    ) {
        loaded.config.scenario.seed = s
            .parse()
            .with_context(|| format!("--seed expects an integer, got {s:?}"))?;
    }
    if let Command::Flux { r, n_quad, .. } = cli.command {
        ensure!(r > 0.0 && n_quad > 0, "--r and --n-quad must be positive");
    }
    if let Command::Trace { t_end, .. } = cli.command {
        ensure!(t_end > 0.0 && t_end.is_finite(), "--t-end must be positive");
    }
    loaded.config.validate()?;
    Ok(loaded)
}

/// Runs one command. Errors are configuration or I/O problems; failed
/// methods and self-checks are reported through [`Status`].
pub fn run(cli: &Cli) -> anyhow::Result<Status> {
    let loaded = prepare(cli)?;
    let name = command_name(&cli.command);
    let ctx = Ctx {
        config: &loaded.config,
        provenance: Provenance::new(name, &loaded.source, &loaded.config),
        out_dir: &cli.global.out_dir,
        global: &cli.global,
    };
    match &cli.command {
        Command::Trace { start, t_end, out } => ctx.trace(start, *t_end, out),
        Command::Iota(a) | Command::ReturnTime(a) => ctx.winding(a),
        Command::Lattice { out } => ctx.lattice(out.as_deref()),
        Command::Flux {
            kind,
            r,
            n_quad,
            derivative,
            out,
        } => ctx.flux(*kind, *r, *n_quad, *derivative, out.as_deref()),
        Command::Volume { method, out } => ctx.volume(*method, out.as_deref()),
        Command::Percival {
            omega,
            k,
            init,
            out,
        } => ctx.percival(omega.as_deref(), *k, init, out.as_deref()),
        Command::Benchmark => ctx.benchmark(),
    }
}

struct Ctx<'a> {
    config: &'a RunConfig,
    provenance: Provenance,
    out_dir: &'a Path,
    global: &'a GlobalArgs,
}

/// Prints to stdout; a closed pipe (`| head`) is not an error.
fn print_line(text: &str) -> anyhow::Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

impl Ctx<'_> {
    fn path(&self, p: &Path) -> PathBuf {
        resolve(self.out_dir, p)
    }

    /// Writes a JSON document to `out`, or prints it when there is none.
    fn emit<T: Serialize>(&self, out: Option<&Path>, value: &T) -> anyhow::Result<()> {
        match out {
            Some(p) => write_json(&self.path(p), value),
            None => {
                let text = serde_json::to_string_pretty(value)?;
                print_line(&text)
            }
        }
    }

    fn trace(&self, start: &str, t_end: f64, out: &Path) -> anyhow::Result<Status> {
        let field = self.config.tokamak()?;
        let orbit = trace(
            &field,
            parse_point(start)?,
            t_end,
            &self.config.tolerances.ode(),
        )?;
        let rows: Vec<Vec<String>> = orbit
            .times
            .iter()
            .zip(&orbit.points)
            .map(|(t, p)| {
                let c = Cylindrical::from_cartesian(p);
                let psi = field.psi(p).unwrap_or(f64::NAN);
                [*t, p.x, p.y, p.z, c.r, c.phi, c.z, psi]
                    .iter()
                    .map(|v| num(*v))
                    .collect()
            })
            .collect();
        let path = self.path(out);
        write_csv(&path, &["t", "x", "y", "z", "R", "phi", "Z", "psi"], &rows)?;
        let status = format!("{:?}", orbit.status);
        write_json(
            &sidecar_path(&path),
            &json!({
                "provenance": self.provenance,
                "status": status,
                "points": orbit.points.len(),
                "t_final": orbit.end_time(),
                "field_evaluations": orbit.evaluations,
            }),
        )?;
        Ok(
            if orbit.status == fluxvol_core::tracer::TraceStatus::Completed {
                Status::Ok
            } else {
                log::error!("trace stopped early: {status}");
                Status::Failed
            },
        )
    }

    /// Returns to `φ = 0` from an orbit file, or traced from a start point.
    fn return_series(
        &self,
        a: &WindingArgs,
        field: &dyn FieldModel,
    ) -> anyhow::Result<ReturnSeries> {
        let tol = self.config.tolerances.ode();
        let tok = self.config.tokamak()?;
        let angle = tok.poloidal_angle();
        let section = SectionSpec::toroidal(0.0);
        let n = a
            .n_returns
            .unwrap_or(self.config.scenario.general.n_returns);
        ensure!(n >= 3, "need at least 3 returns");
        let t_return = self.config.tolerances.t_return;
        if let Some(orbit) = &a.orbit {
            return series_from_orbit(field, orbit, &section, &angle, n, &tol, t_return);
        }
        let start = match (&a.start, a.r) {
            (Some(s), _) => parse_point(s)?,
            (None, Some(r)) => angle.point(r, 0.0, 0.0),
            (None, None) => bail!("one of --orbit, --start or --r is required"),
        };
        // begin on the section so that the first interval is a full return
        let first = returns(field, start, &section, 1, t_return, &tol)?[0].point;
        let ev = returns(field, first, &section, n, t_return * n as f64, &tol)?;
        Ok(ReturnSeries::from_crossings(&first, &ev, |x| {
            angle.turns(x)
        })?)
    }

    fn winding(&self, a: &WindingArgs) -> anyhow::Result<Status> {
        let tok = self.config.tokamak()?;
        let field = CountingField::new(&tok);
        let series = self.return_series(a, &field)?;
        let iota = estimate_iota_closest_returns(&series)?;
        let mean = mean_return_time(&series, &iota)?;
        let doc = json!({
            "provenance": self.provenance,
            "iota": iota.iota,
            // digits resolved by the returns, not expanded from the estimate
            "cf_digits": iota.cf_digits,
            "closest_returns": iota.closest_return_indices,
            "T_bar": mean.mean,
            "error_estimates": { "iota": iota.error_estimate, "T_bar": mean.error_estimate },
            "n_returns": series.n_count(),
            "field_evaluations": field.evaluations(),
        });
        self.emit(a.out.as_deref(), &doc)?;
        Ok(Status::Ok)
    }

    fn lattice(&self, out: Option<&Path>) -> anyhow::Result<Status> {
        let tok = self.config.tokamak()?;
        let seed = match &self.global.seed {
            Some(s) => parse_point(s)?,
            None => tok.poloidal_angle().point(0.5, 0.0, 0.0),
        };
        let action = ActionFlow::new(&tok, self.config.tolerances.ode())?;
        let basis = find_lattice_generators(&action, seed, &LatticeOptions::default())?;
        let class = classify_quasisymmetric_form(&basis, 1e-6);
        let doc = json!({
            "provenance": self.provenance,
            "T1": basis.t1,
            "T2": basis.t2,
            "Delta": basis.delta,
            "classification": class,
            "residual": basis.residual,
        });
        self.emit(out, &doc)?;
        Ok(Status::Ok)
    }

    fn flux(
        &self,
        kind: LoopKind,
        r: f64,
        n_quad: usize,
        derivative: bool,
        out: Option<&Path>,
    ) -> anyhow::Result<Status> {
        let tok = self.config.tokamak()?;
        let r0 = tok.params().r0;
        let value = match (kind, derivative) {
            (LoopKind::Poloidal, false) => loop_flux(
                &tok,
                &LoopSpec::PoloidalCircle {
                    r_c: r0,
                    z_c: 0.0,
                    radius: r,
                    phi: 0.0,
                },
                n_quad,
            )?,
            (LoopKind::Toroidal, false) => loop_flux(
                &tok,
                &LoopSpec::ToroidalCircle { r: r0 + r, z: 0.0 },
                n_quad,
            )?,
            (LoopKind::Poloidal, true) => {
                let family = CircularSurfaces {
                    angle: tok.poloidal_angle(),
                    phi0: 0.0,
                };
                let slice = family.slice(&tok, r)?;
                flux_derivative(&tok, &slice, |_, s| Ok(slice.displacement(s)), n_quad)?
            }
            (LoopKind::Toroidal, true) => {
                let lp = LoopSpec::ToroidalCircle { r: r0 + r, z: 0.0 };
                // Unit outward step in the major radius, normal to the surface at Z = 0.
                let radial = |x: &Point3, _| {
                    let rr = x.x.hypot(x.y);
                    Ok(fluxvol_core::Vec3::new(x.x / rr, x.y / rr, 0.0))
                };
                flux_derivative(&tok, &lp, radial, n_quad)?
            }
        };
        let doc = json!({
            "provenance": self.provenance,
            "Phi": value.phi,
            "abs_Phi": value.abs(),
            "method": value.method,
            "n_quad": value.n_quad,
            "convergence": { "change": value.change, "converged": value.converged },
        });
        self.emit(out, &doc)?;
        Ok(if value.converged {
            Status::Ok
        } else {
            Status::Failed
        })
    }

    fn volume(&self, method: VolumeMethod, out: Option<&Path>) -> anyhow::Result<Status> {
        let tok = self.config.tokamak()?;
        let setup = Setup::new(self.config, &tok);
        let mut report = run_method(&setup, method);
        check_against_pappus(&mut report, &setup);
        let path = self.path(out.unwrap_or(Path::new(&self.config.output.profile)));
        if let Some(p) = &report.profile {
            emit_plot_data(&[p], &path)?;
        }
        write_json(
            &sidecar_path(&path),
            &json!({ "provenance": self.provenance, "report": report }),
        )?;
        Ok(status_of(&[report]))
    }

    fn percival(
        &self,
        omega: Option<&str>,
        k: Option<usize>,
        init: &str,
        out: Option<&Path>,
    ) -> anyhow::Result<Status> {
        let tok = self.config.tokamak()?;
        let pc = &self.config.scenario.percival;
        let k = k.unwrap_or(pc.k);
        ensure!(
            k > 0 && pc.grid > 2 * k,
            "--K must be positive and below half the grid size {}",
            pc.grid
        );
        let r = parse_init(init)?;
        let setup = Setup::new(self.config, &tok);
        let field = CountingField::new(&tok);
        let omega = match omega {
            Some(s) => {
                let [w1, w2] = parse_pair(s)?;
                FrequencyVector::new(w1, w2)?
            }
            None => {
                let (iota, _) = scenario::surface_winding(
                    &setup,
                    &field,
                    r,
                    self.config.scenario.general.n_returns,
                )?;
                FrequencyVector::from_iota(iota)?
            }
        };
        let grid = Grid {
            n1: pc.grid,
            n2: pc.grid,
        };
        let opts = SolverOptions {
            grid,
            tol: pc.tol,
            max_iter: pc.max_iter,
            ..SolverOptions::default()
        };
        let r0 = tok.params().r0;
        let x0 = TorusEmbedding::circular(k, r0, 0.0, r, true);
        let (x, res, report) = match solve_stationary(&field, &omega, &x0, &opts) {
            Ok(v) => v,
            Err(e) => {
                let doc = json!({ "provenance": self.provenance, "error": e.to_string() });
                self.emit(out, &doc)?;
                return Ok(Status::Failed);
            }
        };
        let p = eval_p(&field, &x, &omega, grid)?;
        let phi1 = loop_flux(&field, &x.coordinate_loop(0, 0.0), 256)?.phi;
        let phi2 = loop_flux(&field, &x.coordinate_loop(1, 0.0), 256)?.phi;
        let resolve_at = |w: &FrequencyVector| Ok(solve_stationary(&field, w, &x, &opts)?.0);
        let dp = flux_from_dp_domega(&field, &resolve_at, &omega, pc.h, grid)?;
        let check = first_variation_residual(&field, &x, &omega, grid)?;
        let doc = json!({
            "provenance": self.provenance,
            "omega": [omega.w1, omega.w2],
            "K": k,
            "P": p,
            "residual": res.residual,
            "c_bar": res.c_bar,
            "c_single_signed": check.c_single_signed(),
            "fluxes": { "loops": [phi1, phi2], "dP_domega": dp },
            "P_over_c_bar": p / res.c_bar,
            "mean_radius": x.mean_radius(r0, 0.0, grid),
            "iterations": report.iterations,
            "residual_history": report.residual_history,
            "field_evaluations": field.evaluations(),
        });
        self.emit(out, &doc)?;
        Ok(if check.c_single_signed() {
            Status::Ok
        } else {
            Status::Failed
        })
    }

    fn benchmark(&self) -> anyhow::Result<Status> {
        let tok = self.config.tokamak()?;
        let r0 = tok.params().r0;
        let setup = Setup::new(self.config, &tok);
        let mut reports = Vec::new();
        for &m in &self.config.scenario.methods {
            log::info!("running {m}");
            let mut rep = run_method(&setup, m);
            check_against_pappus(&mut rep, &setup);
            reports.push(rep);
        }
        let profiles: Vec<_> = reports.iter().filter_map(|r| r.profile.as_ref()).collect();
        let profile_path = self.path(Path::new(&self.config.output.profile));
        if !profiles.is_empty() {
            emit_plot_data(&profiles, &profile_path)?;
        }

        let mut rows = Vec::new();
        for rep in &reports {
            if let Some(p) = &rep.profile {
                for i in 0..p.labels.len() {
                    let exact = pappus(r0, p.labels[i]);
                    rows.push(vec![
                        rep.method.tag().to_string(),
                        num(p.labels[i]),
                        num(p.volumes[i]),
                        num(p.error_estimate[i]),
                        num(p.volumes[i] - exact),
                        rep.field_evaluations.to_string(),
                    ]);
                }
            } else {
                rows.push(vec![
                    rep.method.tag().to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    rep.field_evaluations.to_string(),
                ]);
            }
        }
        write_csv(
            &self.path(Path::new("comparison.csv")),
            &["method", "label", "V", "err", "deviation", "field_evals"],
            &rows,
        )?;
        // wall time varies from run to run, so it is kept apart
        let timing: Vec<Vec<String>> = reports
            .iter()
            .map(|r| {
                vec![
                    r.method.tag().to_string(),
                    format!("{:.3}", r.wall_time_s),
                    r.field_evaluations.to_string(),
                ]
            })
            .collect();
        write_csv(
            &self.path(Path::new("timing.csv")),
            &["method", "wall_time_s", "field_evals"],
            &timing,
        )?;

        let agreement = pairwise_agreement(&reports);
        let efficiency = if self.config.scenario.efficiency.enabled {
            Some(efficiency_sweep(&setup)?)
        } else {
            None
        };
        if let Some(e) = &efficiency {
            let rows: Vec<Vec<String>> = e
                .runs
                .iter()
                .map(|s| {
                    vec![
                        s.method.tag().to_string(),
                        s.setting.to_string(),
                        num(s.volume),
                        num(s.relative_deviation),
                        s.field_evaluations.to_string(),
                    ]
                })
                .collect();
            write_csv(
                &self.path(Path::new("efficiency.csv")),
                &[
                    "method",
                    "setting",
                    "V",
                    "relative_deviation",
                    "field_evals",
                ],
                &rows,
            )?;
        }
        // methods the field cannot support are reported but do not fail the run
        let applicable: Vec<MethodReport> =
            reports.iter().filter(|r| r.applicable).cloned().collect();
        let status = status_of(&applicable);
        write_json(
            &self.path(Path::new("summary.json")),
            &json!({
                "provenance": self.provenance,
                "reports": reports,
                "agreement": agreement,
                "efficiency": efficiency,
                "passed": status == Status::Ok,
            }),
        )?;
        for r in &reports {
            let line = match (&r.error, r.profile.as_ref().and_then(|p| p.outermost())) {
                (Some(e), _) if !r.applicable => {
                    format!("{:<9} not applicable: {e}", r.method.tag())
                }
                (Some(e), _) => format!("{:<9} failed: {e}", r.method.tag()),
                (None, Some((l, v, _))) => format!(
                    "{:<9} V({l}) = {v:.12}  evals = {}  checks {}",
                    r.method.tag(),
                    r.field_evaluations,
                    if r.ok() { "passed" } else { "FAILED" }
                ),
                (None, None) => format!("{:<9} no result", r.method.tag()),
            };
            print_line(&line)?;
        }
        if let Some(e) = &efficiency {
            let show = |c: Option<u64>| c.map_or("not reached".to_string(), |n| n.to_string());
            print_line(&format!(
                "efficiency at {:e}: eq1 {} evals, general {} evals, ratio {}",
                e.target,
                show(e.cheapest_eq1),
                show(e.cheapest_general),
                e.ratio.map_or("n/a".to_string(), |r| format!("{r:.3}")),
            ))?;
        }
        Ok(status)
    }
}

fn status_of(reports: &[MethodReport]) -> Status {
    if reports.iter().all(MethodReport::ok) {
        Status::Ok
    } else {
        Status::Failed
    }
}

/// Crossings of `section` in an orbit file, each refined by a short trace
/// from the sample before it. The first crossing is the series origin.
fn series_from_orbit(
    field: &dyn FieldModel,
    path: &Path,
    section: &SectionSpec,
    angle: &fluxvol_core::PoloidalAngle,
    n: usize,
    tol: &fluxvol_core::Tolerances,
    t_return: f64,
) -> anyhow::Result<ReturnSeries> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("orbit file lacks column {name}"))
    };
    let (it, ix, iy, iz) = (col("t")?, col("x")?, col("y")?, col("z")?);
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| -> anyhow::Result<f64> { Ok(rec[i].parse::<f64>()?) };
        samples.push((get(it)?, Point3::new(get(ix)?, get(iy)?, get(iz)?)));
    }
    let mut events = Vec::new();
    for w in samples.windows(2) {
        let (a, b) = (section.value(&w[0].1), section.value(&w[1].1));
        if a < 0.0 && b >= 0.0 && section.accepts(&w[1].1) {
            let hit = returns(
                field,
                w[0].1,
                section,
                1,
                t_return.max(w[1].0 - w[0].0) * 2.0,
                tol,
            )?[0];
            events.push(fluxvol_core::tracer::CrossingEvent {
                t: w[0].0 + hit.t,
                ..hit
            });
        }
        if events.len() > n {
            break;
        }
    }
    ensure!(
        events.len() >= 4,
        "orbit crosses phi = 0 only {} times",
        events.len()
    );
    let origin = events[0];
    let rest: Vec<_> = events[1..]
        .iter()
        .map(|e| fluxvol_core::tracer::CrossingEvent {
            t: e.t - origin.t,
            ..*e
        })
        .collect();
    Ok(ReturnSeries::from_crossings(&origin.point, &rest, |x| {
        angle.turns(x)
    })?)
}

#[derive(Debug, Clone, Serialize)]
pub struct Agreement {
    pub a: VolumeMethod,
    pub b: VolumeMethod,
    pub label: f64,
    pub relative_difference: f64,
}

/// Relative differences at the outermost label between every pair of
/// completed methods.
fn pairwise_agreement(reports: &[MethodReport]) -> Vec<Agreement> {
    let done: Vec<(VolumeMethod, f64, f64)> = reports
        .iter()
        .filter_map(|r| {
            r.profile
                .as_ref()
                .and_then(|p| p.outermost())
                .map(|(l, v, _)| (r.method, l, v))
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..done.len() {
        for j in i + 1..done.len() {
            let (a, la, va) = done[i];
            let (b, _, vb) = done[j];
            out.push(Agreement {
                a,
                b,
                label: la,
                relative_difference: (va - vb).abs() / va.abs().max(vb.abs()),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub method: VolumeMethod,
    /// Grid size for the section method, return count for the general method.
    pub setting: usize,
    pub volume: f64,
    pub relative_deviation: f64,
    pub field_evaluations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Efficiency {
    pub label: f64,
    pub reference_volume: f64,
    pub reference: &'static str,
    pub target: f64,
    pub runs: Vec<SweepRun>,
    pub cheapest_eq1: Option<u64>,
    pub cheapest_general: Option<u64>,
    /// Field evaluations of the cheapest section run over those of the
    /// cheapest general run, both reaching `target`.
    pub ratio: Option<f64>,
}

/// Cost of the section method and the general method at the outermost label
/// as their resolution grows, measured against the Stokes volume of the
/// Percival torus.
fn efficiency_sweep(setup: &Setup) -> anyhow::Result<Efficiency> {
    let e = &setup.config.scenario.efficiency;
    let r = *setup.labels.last().ok_or_else(|| anyhow!("no labels"))?;
    let tok = setup.tokamak;
    let s = &setup.config.scenario.stokes;
    let (x, _, _) = percival_surface(setup, tok, r, s.k, s.n_returns)?;
    let reference = fluxvol_core::volume::volume_stokes_surface(
        &x.mesh(Grid { n1: s.n1, n2: s.n2 })?,
        fluxvol_core::volume::Primitive::X,
    )?
    .volume;

    let mut one_label = setup.config.clone();
    one_label.scenario.labels = crate::config::LabelGrid::List(vec![r]);
    let mut runs = Vec::new();
    for &n in &e.eq1_grids {
        let mut c = one_label.clone();
        c.scenario.eq1 = fluxvol_core::volume::Eq1Grid {
            n_radial: n,
            n_angular: n,
        };
        let sub = Setup::new(&c, tok);
        let rep = run_method(&sub, VolumeMethod::Eq1);
        if let Some(v) = rep.profile.as_ref().and_then(|p| p.last()).map(|l| l.0) {
            runs.push(SweepRun {
                method: VolumeMethod::Eq1,
                setting: n,
                volume: v,
                relative_deviation: (v - reference).abs() / reference,
                field_evaluations: rep.field_evaluations,
            });
        }
    }
    let sub = Setup::new(&one_label, tok);
    for &n in &e.general_returns {
        let field = CountingField::new(tok);
        match general(&sub, &field, n) {
            Ok((p, _)) => {
                let v = p.volumes[0];
                runs.push(SweepRun {
                    method: VolumeMethod::General,
                    setting: n,
                    volume: v,
                    relative_deviation: (v - reference).abs() / reference,
                    field_evaluations: field.evaluations(),
                });
            }
            Err(err) => log::warn!("general method with {n} returns: {err:#}"),
        }
    }
    let cheapest = |m: VolumeMethod| {
        runs.iter()
            .filter(|s| s.method == m && s.relative_deviation <= e.target)
            .map(|s| s.field_evaluations)
            .min()
    };
    let (ce, cg) = (cheapest(VolumeMethod::Eq1), cheapest(VolumeMethod::General));
    Ok(Efficiency {
        label: r,
        reference_volume: reference,
        reference: "stokes volume of the percival torus",
        target: e.target,
        runs,
        cheapest_eq1: ce,
        cheapest_general: cg,
        ratio: ce.zip(cg).map(|(a, b)| a as f64 / b as f64),
    })
}

/// Sets up logging and the worker pool.
pub fn init(global: &GlobalArgs) -> anyhow::Result<()> {
    let level = match global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init()
        .ok();
    if let Some(w) = global.workers {
        ensure!(w > 0, "--workers must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()?;
    }
    Ok(())
}
