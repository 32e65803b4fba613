use std::f64::consts::{PI, TAU};

use fluxvol_core::field::{
    make_tokamak_field, BoundingBox, Capabilities, TokamakCircularParams, TokamakField,
};
use fluxvol_core::fluxes::loop_flux;
use fluxvol_core::percival::*;
use fluxvol_core::volume::{volume_stokes_surface, Primitive};
use fluxvol_core::{Error, FieldModel, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tokamak(eps: f64) -> TokamakField {
    make_tokamak_field(TokamakCircularParams {
        eps,
        ..Default::default()
    })
    .unwrap()
}

fn iota(r: f64) -> f64 {
    (1.0 - r * r).sqrt()
}

/// Invariant circle `r` in angles that straighten the field lines.
fn exact(r: f64, k: usize) -> TorusEmbedding {
    let (a, b) = ((1.0 + r).sqrt(), (1.0 - r).sqrt());
    TorusEmbedding::from_fn(k, [1, 0], |_, t2| {
        let half = PI * t2;
        let th = 2.0 * (a * half.sin()).atan2(b * half.cos());
        [1.0 + r * th.cos(), -r * th.sin(), 0.0]
    })
    .unwrap()
}

fn omega(r: f64) -> FrequencyVector {
    FrequencyVector::from_iota(iota(r)).unwrap()
}

#[test]
fn p_is_homogeneous_in_omega() {
    let f = tokamak(0.0);
    let x = exact(0.5, 24);
    let w = omega(0.5);
    let p1 = eval_p(&f, &x, &w, Grid::default()).unwrap();
    let p2 = eval_p(&f, &x, &w.scaled(2.0).unwrap(), Grid::default()).unwrap();
    assert!((p2 - 2.0 * p1).abs() <= 4.0 * f64::EPSILON * p1.abs());
}

struct Vacuum;

impl FieldModel for Vacuum {
    fn b(&self, _: &Vec3) -> Vec3 {
        Vec3::zeros()
    }
    fn a(&self, _: &Vec3) -> Option<Vec3> {
        Some(Vec3::zeros())
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            vector_potential: true,
            ..Default::default()
        }
    }
    fn contains(&self, _: &Vec3) -> bool {
        true
    }
    fn bounding_box(&self) -> BoundingBox {
        BoundingBox {
            min: [-1.0; 3],
            max: [1.0; 3],
        }
    }
}

#[test]
fn vacuum_gives_zero_and_a_singular_residual() {
    let x = TorusEmbedding::circular(4, 1.0, 0.0, 0.3, true);
    let w = FrequencyVector::new(1.0, 0.3).unwrap();
    assert_eq!(
        eval_p(&Vacuum, &x, &w, Grid { n1: 16, n2: 16 }).unwrap(),
        0.0
    );
    assert!(matches!(
        first_variation_residual(&Vacuum, &x, &w, Grid { n1: 16, n2: 16 }),
        Err(Error::SingularField)
    ));
}

#[test]
fn zero_frequency_is_rejected() {
    assert!(FrequencyVector::new(0.0, 0.0).is_err());
}

#[test]
fn p_equals_flux_pairing_on_the_exact_surface() {
    let f = tokamak(0.0);
    let x = exact(0.5, 24);
    let w = omega(0.5);
    let p = eval_p(&f, &x, &w, Grid::default()).unwrap();
    let phi1 = loop_flux(&f, &x.coordinate_loop(0, 0.0), 64).unwrap().phi;
    let phi2 = loop_flux(&f, &x.coordinate_loop(1, 0.0), 64).unwrap().phi;
    assert!((phi1 + PI / 4.0).abs() < 1e-9, "{phi1}");
    assert!((phi2 - TAU * (1.0 - 0.75f64.sqrt())).abs() < 1e-9, "{phi2}");
    assert!((p - (phi1 * w.w1 + phi2 * w.w2)).abs() < 1e-8);
}

#[test]
fn exact_surface_is_stationary() {
    let f = tokamak(0.0);
    let x = exact(0.5, 24);
    let r = first_variation_residual(&f, &x, &omega(0.5), Grid::default()).unwrap();
    assert!(r.residual < 1e-10, "{}", r.residual);
    assert!(r.c_field.iter().all(|c| *c > 0.0));
    let mean = r.c_field.iter().sum::<f64>() / r.c_field.len() as f64;
    assert_eq!(mean, r.c_bar);

    let off = FrequencyVector::new(1.0, iota(0.5) + 0.1).unwrap();
    assert!(
        first_variation_residual(&f, &x, &off, Grid::default())
            .unwrap()
            .residual
            > 1e-2
    );

    let scaled =
        first_variation_residual(&f, &x, &omega(0.5).scaled(3.0).unwrap(), Grid::default())
            .unwrap();
    assert!((scaled.residual - 3.0 * r.residual).abs() <= 1e-12);
    assert!((scaled.c_bar - 3.0 * r.c_bar).abs() <= 1e-12 * r.c_bar);
}

#[test]
fn euler_lagrange_gradient_matches_finite_differences() {
    let f = tokamak(0.01);
    let x = exact(0.5, 6);
    let grid = Grid { n1: 32, n2: 32 };
    let w = FrequencyVector::new(1.0, 0.8).unwrap();
    let g = percival_gradient(&f, &x, &w, grid).unwrap();
    let nc = TorusEmbedding::n_coeffs(x.k);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let dir: Vec<f64> = (0..3 * nc)
            .map(|_| rng.gen_range(-1.0..1.0) * 1e-2)
            .collect();
        let shifted = |s: f64| {
            let mut y = x.clone();
            for c in 0..3 {
                for i in 0..nc {
                    y.coeffs[c][i] += s * dir[c * nc + i];
                }
            }
            eval_p(&f, &y, &w, grid).unwrap()
        };
        let h = 1e-4;
        let fd = (8.0 * (shifted(h) - shifted(-h)) - (shifted(2.0 * h) - shifted(-2.0 * h)))
            / (12.0 * h);
        let an: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
    }
}

#[test]
fn fluxes_from_the_frequency_derivative() {
    let f = tokamak(0.0);
    let grid = Grid::default();
    let family = |w: &FrequencyVector| Ok(exact((1.0 - w.iota().powi(2)).sqrt(), 16));
    let w = omega(0.5);
    let x = exact(0.5, 24);
    let phi1 = loop_flux(&f, &x.coordinate_loop(0, 0.0), 64).unwrap().phi;
    let phi2 = loop_flux(&f, &x.coordinate_loop(1, 0.0), 64).unwrap().phi;
    let d = flux_from_dp_domega(&f, &family, &w, 1e-3, grid).unwrap();
    assert!((d[0] - phi1).abs() < 1e-5, "{d:?} vs {phi1}");
    assert!((d[1] - phi2).abs() < 1e-5, "{d:?} vs {phi2}");
    // at a fixed surface P is linear in ω
    let p = |a: f64| eval_p(&f, &x, &FrequencyVector::new(1.0, w.w2 + a).unwrap(), grid).unwrap();
    assert!((p(1e-2) - 2.0 * p(0.0) + p(-1e-2)).abs() < 1e-9);
}

#[test]
fn solver_recovers_the_invariant_circle() {
    let f = tokamak(0.0);
    let init = TorusEmbedding::circular(24, 1.0, 0.0, 0.45, true);
    let (x, res, report) =
        solve_stationary(&f, &omega(0.5), &init, &SolverOptions::default()).unwrap();
    assert!(res.residual < 1e-8, "{report:?}");
    assert!(res.c_single_signed());
    let r = x.mean_radius(1.0, 0.0, Grid::default());
    assert!((r - 0.5).abs() < 1e-6, "{r}");
}

#[test]
fn solver_on_the_perturbed_field() {
    let f = tokamak(0.002);
    let init = exact(0.5, 24);
    let w = omega(0.5);
    let (x, res, report) = solve_stationary(&f, &w, &init, &SolverOptions::default()).unwrap();
    assert!(res.residual < 1e-8, "{report:?}");
    let v = volume_stokes_surface(&x.mesh(Grid::default()).unwrap(), Primitive::X).unwrap();
    assert!(
        (v.volume - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-6,
        "{} {report:?}",
        v.volume
    );
}
