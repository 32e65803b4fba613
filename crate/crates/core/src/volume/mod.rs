//! Enclosed volumes of flux surfaces.
//!
//! Volumes are reported as positive numbers. Signed values follow the frame
//! orientation of each method (section frame `(e1, e2)`, mesh parameter order)
//! and are kept alongside for diagnostics.

mod montecarlo;
mod profile;
mod section;
mod stokes;

pub use montecarlo::{volume_monte_carlo, InsideTest, LabelBelow, MeshInside, MonteCarloEstimate};
pub use profile::{
    general_integrand, integrate_profile, volume_profile_general, volume_profile_lattice,
    volume_profile_quasisym, CircularSurfaces, GeneralOptions, ProfileRule, StarLoop,
    SurfaceFamily, TracedSurfaces,
};
pub use section::{
    disk_integral, volume_eq1_section, volume_poincare_boundary, BoundaryCurve, Eq1Grid,
    ReturnTimeTable, SectionDisk, SectionFrame,
};
pub use stokes::{volume_stokes_surface, Primitive, SurfaceMesh};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeMethod {
    Eq1,
    Quasisym,
    Lattice,
    General,
    Stokes,
    Poincare,
    #[serde(rename = "mc")]
    MonteCarlo,
}

impl VolumeMethod {
    pub const ALL: [VolumeMethod; 7] = [
        VolumeMethod::Eq1,
        VolumeMethod::Quasisym,
        VolumeMethod::Lattice,
        VolumeMethod::General,
        VolumeMethod::Stokes,
        VolumeMethod::Poincare,
        VolumeMethod::MonteCarlo,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            VolumeMethod::Eq1 => "eq1",
            VolumeMethod::Quasisym => "quasisym",
            VolumeMethod::Lattice => "lattice",
            VolumeMethod::General => "general",
            VolumeMethod::Stokes => "stokes",
            VolumeMethod::Poincare => "poincare",
            VolumeMethod::MonteCarlo => "mc",
        }
    }
}

impl std::str::FromStr for VolumeMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| crate::Error::InvalidParameter(format!("unknown volume method {s:?}")))
    }
}

impl std::fmt::Display for VolumeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Volume enclosed by the surfaces of a one-parameter family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeProfile {
    pub labels: Vec<f64>,
    pub volumes: Vec<f64>,
    pub dv_dlabel: Vec<f64>,
    pub error_estimate: Vec<f64>,
    pub method: VolumeMethod,
    pub reference_label: f64,
    pub reference_volume: f64,
}

impl VolumeProfile {
    /// `(V, error)` at the outermost label.
    pub fn last(&self) -> Option<(f64, f64)> {
        Some((*self.volumes.last()?, *self.error_estimate.last()?))
    }

    /// Whether `V` increases and `dV/dlabel > 0` along the grid. Missing
    /// (non-finite) derivatives are skipped.
    pub fn is_monotone(&self) -> bool {
        self.volumes.windows(2).all(|w| w[1] > w[0])
            && self.dv_dlabel.iter().all(|d| !d.is_finite() || *d > 0.0)
    }

    /// Label, volume and error estimate at the outermost label.
    pub fn outermost(&self) -> Option<(f64, f64, f64)> {
        Some((
            *self.labels.last()?,
            *self.volumes.last()?,
            *self.error_estimate.last()?,
        ))
    }
}

/// A single volume with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub volume: f64,
    pub signed: f64,
    pub error_estimate: f64,
    pub method: VolumeMethod,
    /// Quadrature nodes used.
    pub nodes: usize,
    /// Nodes dropped from the quadrature (failed traces).
    pub flagged: usize,
}

impl VolumeEstimate {
    pub(crate) fn from_signed(
        signed: f64,
        error_estimate: f64,
        method: VolumeMethod,
        nodes: usize,
        flagged: usize,
    ) -> Self {
        Self {
            volume: signed.abs(),
            signed,
            error_estimate,
            method,
            nodes,
            flagged,
        }
    }
}
