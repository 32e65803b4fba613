//! Hit-or-miss volume estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SurfaceMesh;
use crate::error::{Error, Result};
use crate::field::{BoundingBox, FieldModel};
use crate::geometry::{Point3, Vec3};

/// Samples per independently seeded chunk.
const CHUNK: usize = 1 << 16;

pub trait InsideTest: Sync {
    fn inside(&self, x: &Point3) -> bool;
}

/// `ψ(x) ≤ threshold` for a field with a flux label.
pub struct LabelBelow<'a> {
    field: &'a dyn FieldModel,
    threshold: f64,
}

impl<'a> LabelBelow<'a> {
    pub fn new(field: &'a dyn FieldModel, threshold: f64) -> Result<Self> {
        if !field.capabilities().flux_label {
            return Err(Error::MissingCapability("a flux label"));
        }
        Ok(Self { field, threshold })
    }
}

impl InsideTest for LabelBelow<'_> {
    fn inside(&self, x: &Point3) -> bool {
        self.field.contains(x) && self.field.psi(x).is_some_and(|p| p <= self.threshold)
    }
}

/// Ray-crossing parity against the triangulated mesh.
pub struct MeshInside {
    triangles: Vec<[Vec3; 3]>,
    lo: Vec3,
    hi: Vec3,
}

impl MeshInside {
    pub fn new(mesh: &SurfaceMesh) -> Self {
        let (n1, n2) = (mesh.n1, mesh.n2);
        let p = |i: usize, j: usize| mesh.points[(i % n1) * n2 + (j % n2)];
        let mut triangles = Vec::with_capacity(2 * n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let (a, b, c, d) = (p(i, j), p(i + 1, j), p(i + 1, j + 1), p(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let lo = mesh
            .points
            .iter()
            .fold(Vec3::repeat(f64::INFINITY), |m, q| m.inf(q));
        let hi = mesh
            .points
            .iter()
            .fold(Vec3::repeat(f64::NEG_INFINITY), |m, q| m.sup(q));
        Self { triangles, lo, hi }
    }
}

impl InsideTest for MeshInside {
    fn inside(&self, x: &Point3) -> bool {
        if (0..3).any(|i| x[i] < self.lo[i] || x[i] > self.hi[i]) {
            return false;
        }
        // an irrational-looking direction keeps the ray off mesh edges
        let dir = Vec3::new(1.0, 0.001_234_567, 0.000_765_432_1).normalize();
        let hits = self
            .triangles
            .iter()
            .filter(|t| ray_hits(x, &dir, t))
            .count();
        hits % 2 == 1
    }
}

/// Möller–Trumbore intersection of the ray `x + s dir`, `s > 0`.
fn ray_hits(x: &Point3, dir: &Vec3, t: &[Vec3; 3]) -> bool {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return false;
    }
    let inv = 1.0 / det;
    let s = x - t[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    e2.dot(&q) * inv > 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub volume: f64,
    /// Half-width of the binomial 95% confidence interval.
    pub half_width: f64,
    pub hits: u64,
    pub n_samples: u64,
    pub seed: u64,
}

impl MonteCarloEstimate {
    pub fn contains(&self, v: f64) -> bool {
        (v - self.volume).abs() <= self.half_width
    }
}

/// Uniform samples in `bbox`, drawn in fixed-size chunks, each from its own
/// ChaCha8 stream, so the estimate depends only on `seed` and not on the
/// number of worker threads.
pub fn volume_monte_carlo(
    test: &dyn InsideTest,
    bbox: &BoundingBox,
    n_samples: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if n_samples == 0 {
        return Err(Error::Empty("Monte Carlo sample"));
    }
    if (0..3).any(|i| !(bbox.max[i] > bbox.min[i])) {
        return Err(Error::InvalidParameter(
            "bounding box has no interior".into(),
        ));
    }
    let n = n_samples as usize;
    let n_chunks = n.div_ceil(CHUNK);
    let hits: u64 = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(n - c * CHUNK);
            (0..count)
                .filter(|_| test.inside(&bbox.sample(&mut rng)))
                .count() as u64
        })
        .sum();
    let p = hits as f64 / n_samples as f64;
    let vbox = bbox.volume();
    Ok(MonteCarloEstimate {
        volume: vbox * p,
        half_width: 1.96 * vbox * (p * (1.0 - p) / n_samples as f64).sqrt(),
        hits,
        n_samples,
        seed,
    })
}
