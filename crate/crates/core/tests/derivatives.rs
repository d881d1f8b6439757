use std::f64::consts::TAU;

use gradlab_core::catalog::{self, verification_entries};
use gradlab_core::{finite_diff_gradient, Domain, ScalarField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_inf_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

#[test]
fn exact_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for entry in verification_entries() {
        let f = &entry.field;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..f.dimension()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let exact = f.gradient(&x).unwrap();
            let fd = finite_diff_gradient(f, &x, 1e-5).unwrap();
            let err = rel_inf_err(&fd, &exact);
            assert!(err < 1e-6, "{} at {x:?}: {err}", entry.name);
            let h = f.hessian(&x).unwrap();
            assert!((&h - h.transpose()).amax() <= 1e-12, "{} hessian asymmetric", entry.name);
        }
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for entry in verification_entries() {
        let f = &entry.field;
        let n = f.dimension();
        for _ in 0..50 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
            let h = f.hessian(&x).unwrap();
            for j in 0..n {
                let step = 1e-5;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += step;
                xm[j] -= step;
                let (gp, gm) = (f.gradient(&xp).unwrap(), f.gradient(&xm).unwrap());
                for i in 0..n {
                    let fd = (gp[i] - gm[i]) / (2.0 * step);
                    let scale = h.amax().max(1.0);
                    assert!((fd - h[(i, j)]).abs() / scale < 1e-6, "{} H[{i},{j}]", entry.name);
                }
            }
        }
    }
}

#[test]
fn expression_fields_agree_with_catalog() {
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let cases = [
        ("x4y2", "x^4 + y^2", names(&["x", "y", "z"]), Domain::Euclidean),
        ("circle_well", "(x^2 + y^2 - 1)^2", names(&["x", "y"]), Domain::Euclidean),
        ("warped_trough", "(1 + z^2) * y^2", names(&["y", "z"]), Domain::Euclidean),
        (
            "torus_height",
            "cos(x) + cos(y)",
            names(&["x", "y"]),
            Domain::FlatTorus { periods: vec![TAU, TAU] },
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (id, text, vars, domain) in cases {
        let cat = catalog::field(id).unwrap();
        let ex = ScalarField::from_expression(text, &vars, domain).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..cat.dimension()).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert!((cat.eval(&x).unwrap() - ex.eval(&x).unwrap()).abs() < 1e-12);
            assert!(rel_inf_err(&ex.gradient(&x).unwrap(), &cat.gradient(&x).unwrap()) < 1e-12, "{id}");
            let dh = cat.hessian(&x).unwrap() - ex.hessian(&x).unwrap();
            assert!(dh.amax() < 1e-11, "{id}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn torus_field_is_periodic(x in -10.0..10.0f64, y in -10.0..10.0f64, m in -3i32..3, n in -3i32..3) {
        let f = catalog::field("torus_height").unwrap();
        let shifted = [x + m as f64 * TAU, y + n as f64 * TAU];
        prop_assert!((f.eval(&[x, y]).unwrap() - f.eval(&shifted).unwrap()).abs() < 1e-12);
        let g0 = f.gradient(&[x, y]).unwrap();
        let g1 = f.gradient(&shifted).unwrap();
        prop_assert!(rel_inf_err(&g0, &g1) < 1e-12);
    }

    #[test]
    fn torus_distance_uses_minimal_image(a in -20.0..20.0f64, b in -20.0..20.0f64) {
        let d = Domain::FlatTorus { periods: vec![TAU] };
        let dist = d.distance(&[a], &[b]);
        prop_assert!(dist <= TAU / 2.0 + 1e-12);
        prop_assert!((d.distance(&[a + TAU], &[b]) - dist).abs() < 1e-9);
    }

    #[test]
    fn quadratic_form_gradient_is_linear(
        entries in proptest::collection::vec(-3.0..3.0f64, 6),
        x in proptest::collection::vec(-2.0..2.0f64, 3),
        s in -4.0..4.0f64,
    ) {
        let a = nalgebra::DMatrix::from_fn(3, 3, |i, j| {
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            entries[i * 3 + j - i * (i + 1) / 2]
        });
        let f = ScalarField::quadratic_form(a).unwrap();
        let sx: Vec<f64> = x.iter().map(|v| s * v).collect();
        let g = f.gradient(&x).unwrap();
        let gs = f.gradient(&sx).unwrap();
        for (u, v) in g.iter().zip(&gs) {
            prop_assert!((s * u - v).abs() < 1e-9);
        }
    }
}
