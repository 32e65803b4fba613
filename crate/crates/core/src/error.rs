use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {0:?} lies outside the field domain")]
    Domain(Vec3),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field does not provide {0}")]
    MissingCapability(&'static str),

    #[error("integration stopped at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("no return to the section within t = {t_max}")]
    NoReturn { t_max: f64 },

    #[error(
        "iteration did not converge after {iterations} iterations (last residual {residual:e})"
    )]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("winding is rational with period {period}")]
    RationalWinding { period: usize },

    #[error("degenerate spacing between return labels at index {index}")]
    DegenerateSpacing { index: usize },

    #[error("degenerate lattice: |Delta| = {delta:e}")]
    DegenerateLattice { delta: f64 },

    #[error("supplied field does not commute with B: residual {residual:e}")]
    NotASymmetry { residual: f64 },

    #[error("singular field: |B| vanishes on the embedding")]
    SingularField,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("empty estimate: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
