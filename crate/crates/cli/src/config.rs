//! Run configuration, read from TOML and validated before anything runs.

use std::path::Path;

use anyhow::{bail, ensure, Context};
use fluxvol_core::field::{make_tokamak_field, DOMAIN_FRACTION};
use fluxvol_core::volume::{Eq1Grid, ProfileRule};
use fluxvol_core::{TokamakCircularParams, TokamakField, Tolerances, VolumeMethod};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub tolerances: TolConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldConfig {
    TokamakCircular(TokamakCircularParams),
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig::TokamakCircular(TokamakCircularParams::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Time budget for a single return to a section.
    pub t_return: f64,
}

impl Default for TolConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-13,
            t_return: 100.0,
        }
    }
}

impl TolConfig {
    pub fn ode(&self) -> Tolerances {
        Tolerances::new(self.rtol, self.atol)
    }
}

/// Minor-radius labels, either listed or evenly spaced on `(start, end]`
/// counting `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelGrid {
    List(Vec<f64>),
    Range { start: f64, end: f64, n: usize },
}

impl Default for LabelGrid {
    fn default() -> Self {
        LabelGrid::List(vec![0.5])
    }
}

impl LabelGrid {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            LabelGrid::List(ref v) => v.clone(),
            LabelGrid::Range { start, end, n } => {
                if n == 1 {
                    return vec![end];
                }
                (0..n)
                    .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub labels: LabelGrid,
    pub methods: Vec<VolumeMethod>,
    pub seed: u64,
    pub profile_rule: ProfileRule,
    pub eq1: Eq1Grid,
    pub general: GeneralConfig,
    pub poincare: PoincareConfig,
    pub stokes: StokesConfig,
    pub mc: McConfig,
    pub percival: PercivalConfig,
    pub efficiency: EfficiencyConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            labels: LabelGrid::default(),
            methods: VolumeMethod::ALL.to_vec(),
            seed: 42,
            profile_rule: ProfileRule::default(),
            eq1: Eq1Grid::default(),
            general: GeneralConfig::default(),
            poincare: PoincareConfig::default(),
            stokes: StokesConfig::default(),
            mc: McConfig::default(),
            percival: PercivalConfig::default(),
            efficiency: EfficiencyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceSource {
    /// Circles of constant label about the field's centre circle.
    Analytic,
    /// Surfaces located numerically (traced sections or a Percival solve).
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneralConfig {
    pub n_returns: usize,
    pub max_returns: usize,
    pub n_quad: usize,
    pub rule: ProfileRule,
    pub surfaces: SurfaceSource,
}

impl Default for GeneralConfig {
    fn default() -> Self {
        Self {
            n_returns: 1000,
            max_returns: 16_000,
            n_quad: 256,
            // Nodes stay clear of the axis, where the rotation number is
            // close to one and slow to resolve.
            rule: ProfileRule::Gauss { nodes: 2 },
            surfaces: SurfaceSource::Analytic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoincareConfig {
    pub n_rays: usize,
    pub n_radii: usize,
    pub n_quad: usize,
    pub quad_tol: f64,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        Self {
            n_rays: 16,
            n_radii: 24,
            n_quad: 64,
            quad_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StokesConfig {
    pub surfaces: SurfaceSource,
    pub n1: usize,
    pub n2: usize,
    /// Fourier cutoff of the Percival embedding for numerical surfaces.
    pub k: usize,
    pub n_returns: usize,
}

impl Default for StokesConfig {
    fn default() -> Self {
        Self {
            surfaces: SurfaceSource::Analytic,
            n1: 64,
            n2: 64,
            k: 24,
            n_returns: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub samples: u64,
    /// Relative padding of the sampling box around the torus.
    pub margin: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: 10_000_000,
            margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PercivalConfig {
    pub k: usize,
    pub grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Step in `ω` for the flux derivatives `∂P/∂ω`.
    pub h: f64,
}

impl Default for PercivalConfig {
    fn default() -> Self {
        Self {
            k: 16,
            grid: 64,
            tol: 1e-7,
            max_iter: 60,
            h: 1e-4,
        }
    }
}

/// Resolution sweeps for the cost comparison of the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EfficiencyConfig {
    pub enabled: bool,
    /// Relative accuracy both methods must reach.
    pub target: f64,
    pub eq1_grids: Vec<usize>,
    pub general_returns: Vec<usize>,
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            target: 1e-4,
            eq1_grids: vec![4, 6, 8, 12, 16, 24, 32, 48, 64],
            general_returns: vec![25, 50, 100, 200, 400, 1000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub profile: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            profile: "profile.csv".into(),
        }
    }
}

/// A parsed configuration together with the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: Vec<u8>,
}

impl LoadedConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self {
                config: RunConfig::default(),
                source: Vec::new(),
            });
        };
        let source = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let text = std::str::from_utf8(&source).context("config is not UTF-8")?;
        let config: RunConfig =
            toml::from_str(text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(Self { config, source })
    }
}

fn positive(name: &str, v: f64) -> anyhow::Result<()> {
    ensure!(
        v > 0.0 && v.is_finite(),
        "{name} must be positive and finite, got {v}"
    );
    Ok(())
}

fn rule_ok(name: &str, r: &ProfileRule) -> anyhow::Result<()> {
    match *r {
        ProfileRule::AdaptiveGauss { tol, .. } => positive(&format!("{name}.tol"), tol),
        ProfileRule::Gauss { nodes } => {
            ensure!(nodes > 0, "{name}.nodes must be positive");
            Ok(())
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        let FieldConfig::TokamakCircular(p) = self.field;
        positive("field.R0", p.r0)?;
        positive("field.F0", p.f0)?;
        ensure!(p.eps.is_finite(), "field.eps must be finite");
        let t = &self.tolerances;
        positive("tolerances.rtol", t.rtol)?;
        positive("tolerances.atol", t.atol)?;
        positive("tolerances.t_return", t.t_return)?;

        let s = &self.scenario;
        let labels = s.labels.values();
        ensure!(!labels.is_empty(), "scenario.labels is empty");
        if let LabelGrid::Range { n, .. } = s.labels {
            ensure!(n > 0, "scenario.labels.n must be positive");
        }
        let r_max = DOMAIN_FRACTION * p.r0;
        for w in labels.windows(2) {
            ensure!(w[1] > w[0], "scenario.labels must be strictly increasing");
        }
        for &l in &labels {
            ensure!(l > 0.0 && l < r_max, "label {l} is outside (0, {r_max})");
        }
        ensure!(!s.methods.is_empty(), "scenario.methods is empty");
        rule_ok("scenario.profile_rule", &s.profile_rule)?;
        rule_ok("scenario.general.rule", &s.general.rule)?;
        ensure!(
            s.eq1.n_radial > 0 && s.eq1.n_angular > 0,
            "scenario.eq1 grid must be nonempty"
        );
        ensure!(
            s.general.n_returns >= 8,
            "scenario.general.n_returns must be at least 8"
        );
        ensure!(
            s.general.max_returns >= s.general.n_returns,
            "scenario.general.max_returns must be at least n_returns"
        );
        ensure!(
            s.general.n_quad > 0,
            "scenario.general.n_quad must be positive"
        );
        let pc = &s.poincare;
        ensure!(
            pc.n_rays >= 2 && pc.n_rays % 2 == 0,
            "scenario.poincare.n_rays must be even"
        );
        ensure!(
            pc.n_radii >= 3 && pc.n_quad >= 2,
            "scenario.poincare grid is too small"
        );
        positive("scenario.poincare.quad_tol", pc.quad_tol)?;
        ensure!(
            s.stokes.n1 >= 4 && s.stokes.n2 >= 4,
            "scenario.stokes mesh is too small"
        );
        ensure!(
            s.stokes.k > 0 && s.stokes.n_returns >= 8,
            "scenario.stokes settings are too small"
        );
        ensure!(s.mc.samples > 0, "scenario.mc.samples must be positive");
        ensure!(
            s.mc.margin >= 0.0 && s.mc.margin.is_finite(),
            "scenario.mc.margin must be nonnegative"
        );
        let pv = &s.percival;
        ensure!(
            pv.k > 0 && pv.max_iter > 0,
            "scenario.percival settings are too small"
        );
        ensure!(pv.grid > 2 * pv.k, "scenario.percival.grid must exceed 2 k");
        positive("scenario.percival.tol", pv.tol)?;
        positive("scenario.percival.h", pv.h)?;
        positive("scenario.efficiency.target", s.efficiency.target)?;
        if s.efficiency
            .eq1_grids
            .iter()
            .chain(&s.efficiency.general_returns)
            .any(|&n| n == 0)
        {
            bail!("scenario.efficiency sweeps must be positive");
        }
        ensure!(!self.output.profile.is_empty(), "output.profile is empty");
        Ok(())
    }

    pub fn tokamak(&self) -> anyhow::Result<TokamakField> {
        let FieldConfig::TokamakCircular(p) = self.field;
        Ok(make_tokamak_field(p)?)
    }

    pub fn params(&self) -> TokamakCircularParams {
        let FieldConfig::TokamakCircular(p) = self.field;
        p
    }
}
