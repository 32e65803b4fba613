//! Magnetic field abstraction and benchmark fields.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

mod tokamak;

pub use tokamak::{make_tokamak_field, TokamakCircularParams, TokamakField, DOMAIN_FRACTION};

/// Which optional quantities a field can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    pub vector_potential: bool,
    pub flux_label: bool,
    pub symmetry: bool,
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoundingBox {
    pub fn volume(&self) -> f64 {
        (0..3).map(|i| self.max[i] - self.min[i]).product()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec3 {
        Vec3::new(
            rng.gen_range(self.min[0]..self.max[0]),
            rng.gen_range(self.min[1]..self.max[1]),
            rng.gen_range(self.min[2]..self.max[2]),
        )
    }
}

/// A divergence-free vector field `B` together with the optional vector
/// potential `A` (`curl A = B`), flux label `ψ` (`B·∇ψ = 0`) and symmetry
/// field `u` (`[u, B] = 0`).
///
/// Evaluation must be pure so that traces can run on many threads.
pub trait FieldModel: Send + Sync {
    fn b(&self, x: &Vec3) -> Vec3;

    fn a(&self, _x: &Vec3) -> Option<Vec3> {
        None
    }

    fn psi(&self, _x: &Vec3) -> Option<f64> {
        None
    }

    fn u(&self, _x: &Vec3) -> Option<Vec3> {
        None
    }

    fn capabilities(&self) -> Capabilities;

    fn contains(&self, x: &Vec3) -> bool;

    fn bounding_box(&self) -> BoundingBox;

    /// Gradient of the flux label. The default uses central differences.
    fn grad_psi(&self, x: &Vec3) -> Option<Vec3> {
        let h = 1e-6;
        let mut g = Vec3::zeros();
        for i in 0..3 {
            let mut e = Vec3::zeros();
            e[i] = h;
            g[i] = (self.psi(&(x + e))? - self.psi(&(x - e))?) / (2.0 * h);
        }
        Some(g)
    }
}

/// `B(x)` with the domain check applied.
pub fn eval_b(field: &dyn FieldModel, x: &Vec3) -> Result<Vec3> {
    if field.contains(x) {
        Ok(field.b(x))
    } else {
        Err(Error::Domain(*x))
    }
}

pub fn eval_a(field: &dyn FieldModel, x: &Vec3) -> Result<Vec3> {
    if !field.capabilities().vector_potential {
        return Err(Error::MissingCapability("a vector potential"));
    }
    if !field.contains(x) {
        return Err(Error::Domain(*x));
    }
    field
        .a(x)
        .ok_or(Error::MissingCapability("a vector potential"))
}

impl<F: FieldModel + ?Sized> FieldModel for &F {
    fn b(&self, x: &Vec3) -> Vec3 {
        (**self).b(x)
    }
    fn a(&self, x: &Vec3) -> Option<Vec3> {
        (**self).a(x)
    }
    fn psi(&self, x: &Vec3) -> Option<f64> {
        (**self).psi(x)
    }
    fn u(&self, x: &Vec3) -> Option<Vec3> {
        (**self).u(x)
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn contains(&self, x: &Vec3) -> bool {
        (**self).contains(x)
    }
    fn bounding_box(&self) -> BoundingBox {
        (**self).bounding_box()
    }
    fn grad_psi(&self, x: &Vec3) -> Option<Vec3> {
        (**self).grad_psi(x)
    }
}

/// Wraps a field and counts evaluations of `B`, `A`, `ψ`, `∇ψ` and `u`.
pub struct CountingField<F> {
    inner: F,
    count: AtomicU64,
}

impl<F: FieldModel> CountingField<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.count.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

impl<F: FieldModel> FieldModel for CountingField<F> {
    fn b(&self, x: &Vec3) -> Vec3 {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.b(x)
    }
    fn a(&self, x: &Vec3) -> Option<Vec3> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.a(x)
    }
    fn psi(&self, x: &Vec3) -> Option<f64> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.psi(x)
    }
    fn u(&self, x: &Vec3) -> Option<Vec3> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.u(x)
    }
    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }
    fn contains(&self, x: &Vec3) -> bool {
        self.inner.contains(x)
    }
    fn bounding_box(&self) -> BoundingBox {
        self.inner.bounding_box()
    }
    fn grad_psi(&self, x: &Vec3) -> Option<Vec3> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.grad_psi(x)
    }
}

/// Finite-difference residuals of the structural identities a field claims.
///
/// `div_b` is relative to `|B|`, `curl_a` relative to `|B|`, `b_dot_grad_psi`
/// relative to `|B| |∇ψ|` and `commutator` relative to `|u| |B|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub n_samples: usize,
    pub h: f64,
    pub div_b: f64,
    pub curl_a: Option<f64>,
    pub b_dot_grad_psi: Option<f64>,
    pub commutator: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub div_b: bool,
    pub curl_a: Option<bool>,
    pub b_dot_grad_psi: Option<bool>,
    pub commutator: Option<bool>,
}

impl ConsistencyVerdict {
    pub fn all(&self) -> bool {
        self.div_b
            && self.curl_a.unwrap_or(true)
            && self.b_dot_grad_psi.unwrap_or(true)
            && self.commutator.unwrap_or(true)
    }
}

impl ConsistencyReport {
    pub fn verdict(&self, tol: f64) -> ConsistencyVerdict {
        ConsistencyVerdict {
            div_b: self.div_b < tol,
            curl_a: self.curl_a.map(|r| r < tol),
            b_dot_grad_psi: self.b_dot_grad_psi.map(|r| r < tol),
            commutator: self.commutator.map(|r| r < tol),
        }
    }
}

fn jacobian<G: Fn(&Vec3) -> Vec3>(f: G, x: &Vec3, h: f64) -> nalgebra::Matrix3<f64> {
    let mut j = nalgebra::Matrix3::zeros();
    for k in 0..3 {
        let mut e = Vec3::zeros();
        e[k] = h;
        let col = (f(&(x + e)) - f(&(x - e))) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

/// Checks `div B = 0`, `curl A = B`, `B·∇ψ = 0` and `[u, B] = 0` by central
/// differences at `n_samples` seeded random points of the domain.
pub fn check_field_consistency(
    field: &dyn FieldModel,
    n_samples: usize,
    h: f64,
    seed: u64,
) -> Result<ConsistencyReport> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter(
            "n_samples must be at least 1".into(),
        ));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(
            "finite-difference step must be positive".into(),
        ));
    }
    let caps = field.capabilities();
    let bbox = field.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConsistencyReport {
        n_samples,
        h,
        div_b: 0.0,
        curl_a: caps.vector_potential.then_some(0.0),
        b_dot_grad_psi: caps.flux_label.then_some(0.0),
        commutator: caps.symmetry.then_some(0.0),
    };
    let mut taken = 0;
    let mut attempts = 0usize;
    while taken < n_samples {
        attempts += 1;
        if attempts > 1000 * n_samples {
            return Err(Error::DegenerateGeometry(
                "domain has negligible volume in its box".into(),
            ));
        }
        let x = bbox.sample(&mut rng);
        // keep the stencil inside the domain
        let inside = field.contains(&x)
            && (0..3).all(|k| {
                let mut e = Vec3::zeros();
                e[k] = 2.0 * h;
                field.contains(&(x + e)) && field.contains(&(x - e))
            });
        if !inside {
            continue;
        }
        taken += 1;
        let b = field.b(&x);
        let bn = b.norm().max(f64::MIN_POSITIVE);
        let jb = jacobian(|p| field.b(p), &x, h);
        report.div_b = report.div_b.max(jb.trace().abs() / bn);

        if let Some(r) = report.curl_a.as_mut() {
            let ja = jacobian(|p| field.a(p).unwrap_or_default(), &x, h);
            let curl = Vec3::new(
                ja[(2, 1)] - ja[(1, 2)],
                ja[(0, 2)] - ja[(2, 0)],
                ja[(1, 0)] - ja[(0, 1)],
            );
            *r = r.max((curl - b).norm() / bn);
        }
        if let Some(r) = report.b_dot_grad_psi.as_mut() {
            let g = field.grad_psi(&x).unwrap_or_default();
            let scale = (bn * g.norm()).max(f64::MIN_POSITIVE);
            *r = r.max(b.dot(&g).abs() / scale);
        }
        if let Some(r) = report.commutator.as_mut() {
            let u = field.u(&x).unwrap_or_default();
            let ju = jacobian(|p| field.u(p).unwrap_or_default(), &x, h);
            // [u, B] = (u·∇)B − (B·∇)u
            let lie = jb * u - ju * b;
            let scale = (u.norm() * bn).max(f64::MIN_POSITIVE);
            *r = r.max(lie.norm() / scale);
        }
    }
    Ok(report)
}
