//! Volumes enclosed by magnetic flux surfaces.
//!
//! The crate traces field lines of a divergence-free field `B`, estimates
//! rotation numbers and mean return times from single orbits, computes loop
//! fluxes, and reduces the volume of a flux surface to lower-dimensional
//! integrals in several independent ways (see [`volume`]). [`percival`]
//! locates invariant tori variationally.

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod fluxes;
pub mod geometry;
pub mod ode;
pub mod percival;
pub mod quadrature;
pub mod symmetry;
pub mod tracer;
pub mod volume;

pub use diagnostics::{IotaEstimate, MeanReturnTime, ReturnSeries};
pub use error::{Error, Result};
pub use field::{BoundingBox, CountingField, FieldModel, TokamakCircularParams, TokamakField};
pub use fluxes::{FluxValue, Loop, LoopSpec};
pub use geometry::{Cylindrical, Point3, PoloidalAngle, Vec3};
pub use ode::Tolerances;
pub use percival::{FrequencyVector, TorusEmbedding};
pub use symmetry::{Classification, LatticeBasis};
pub use tracer::{OrbitSegment, SectionSpec};
pub use volume::{VolumeEstimate, VolumeMethod, VolumeProfile};
