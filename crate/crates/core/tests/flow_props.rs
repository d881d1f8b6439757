use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use gradlab_core::catalog::{self, verification_entries};
use gradlab_core::critical::{classify, CriticalClass};
use gradlab_core::flow::{advance, dissipation_residual, integrate_many, Direction};
use gradlab_core::{integrate_flow, Execution, IntegratorConfig, StopReason};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn torus_starts(count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| vec![rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)]).collect()
}

#[test]
fn closed_forms_at_checkpoints() {
    let cfg = IntegratorConfig::default();
    let x2 = catalog::lookup("even_power", &BTreeMap::from([("k".into(), 1.0)])).unwrap().field;
    let x4 = catalog::lookup("even_power", &BTreeMap::from([("k".into(), 2.0)])).unwrap().field;
    for i in 1..=20 {
        let t = i as f64 * 0.25;
        let a = advance(&x2, &[1.0], t, &cfg, Direction::Descent).unwrap()[0];
        assert!((a - (-2.0 * t).exp()).abs() <= 1e-6 * (-2.0 * t).exp());
        let b = advance(&x4, &[1.0], t, &cfg, Direction::Descent).unwrap()[0];
        let exact = (1.0 + 8.0 * t).powf(-0.5);
        assert!((b - exact).abs() <= 1e-6 * exact);
    }
}

#[test]
fn dissipation_holds_across_catalog() {
    let cfg = IntegratorConfig::default().with_horizon(20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for entry in verification_entries() {
        for _ in 0..5 {
            let x0: Vec<f64> = (0..entry.field.dimension()).map(|_| rng.random_range(-1.2..1.2)).collect();
            let traj = integrate_flow(&entry.field, &x0, &cfg).unwrap();
            if traj.len() < 2 {
                continue;
            }
            let r = dissipation_residual(&entry.field, &traj).unwrap();
            assert!(r < 1e-3, "{} from {x0:?}: {r}", entry.name);
        }
    }
}

#[test]
fn almost_all_torus_starts_reach_the_minimum() {
    let f = catalog::field("torus_height").unwrap();
    let starts = torus_starts(1000, 42);
    let runs = integrate_many(&f, &starts, &IntegratorConfig::default(), Execution::default());
    let mut at_min = 0;
    for run in runs {
        let traj = run.unwrap();
        let cp = classify(&f, traj.endpoint()).unwrap();
        if traj.converged() && cp.class == CriticalClass::LocalMin {
            at_min += 1;
        }
    }
    assert!(at_min >= 990, "{at_min}");
}

#[test]
fn trajectories_enter_critical_balls_once() {
    let f = catalog::field("torus_height").unwrap();
    let centres = [[0.0, 0.0], [0.0, PI], [PI, 0.0], [PI, PI]];
    let cfg = IntegratorConfig::default();
    for x0 in torus_starts(100, 5) {
        let traj = integrate_flow(&f, &x0, &cfg).unwrap();
        for c in &centres {
            let inside: Vec<bool> =
                traj.samples.iter().map(|s| f.domain().distance(&s.x, c) < 0.1).collect();
            let entries = inside.windows(2).filter(|w| !w[0] && w[1]).count() + usize::from(inside[0]);
            assert!(entries <= 1, "{x0:?} enters ball at {c:?} {entries} times");
        }
    }
}

#[test]
fn sequential_and_parallel_batches_agree() {
    let f = catalog::field("torus_height").unwrap();
    let starts = torus_starts(64, 11);
    let cfg = IntegratorConfig::default();
    let seq = integrate_many(&f, &starts, &cfg, Execution::Sequential);
    let par = integrate_many(&f, &starts, &cfg, Execution::Parallel);
    for (a, b) in seq.into_iter().zip(par) {
        assert_eq!(a.unwrap(), b.unwrap());
    }
}

#[test]
fn tightening_tolerances_converges() {
    let f = catalog::field("warped_trough").unwrap();
    let base = IntegratorConfig::default().with_horizon(2.0);
    let reference = advance(&f, &[0.5, 0.5], 2.0, &base.tightened(100.0), Direction::Descent).unwrap();
    let mut prev = f64::INFINITY;
    for factor in [1.0, 1e2, 1e4] {
        let cfg = IntegratorConfig { rel_tol: 1e-6 / factor, ..base };
        let x = advance(&f, &[0.5, 0.5], 2.0, &cfg, Direction::Descent).unwrap();
        let err = x.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= prev.max(1e-13), "error grew: {err} after {prev}");
        prev = err;
    }
    assert!(prev < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_never_increases(x in 0.0..TAU, y in 0.0..TAU) {
        let f = catalog::field("torus_height").unwrap();
        let traj = integrate_flow(&f, &[x, y], &IntegratorConfig::default()).unwrap();
        for w in traj.samples.windows(2) {
            prop_assert!(w[1].f <= w[0].f + 1e-12);
            prop_assert!(w[1].arc_length >= w[0].arc_length);
        }
    }

    #[test]
    fn flow_is_a_semigroup(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64, s in 0.05..1.0f64, t in 0.05..1.0f64) {
        let f = catalog::field("x4y2").unwrap();
        let cfg = IntegratorConfig::default().tightened(10.0);
        let x0 = [x, y, z];
        let direct = advance(&f, &x0, s + t, &cfg, Direction::Descent).unwrap();
        let mid = advance(&f, &x0, s, &cfg, Direction::Descent).unwrap();
        let split = advance(&f, &mid, t, &cfg, Direction::Descent).unwrap();
        for (a, b) in direct.iter().zip(&split) {
            prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn ascent_undoes_descent(x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let f = catalog::field("circle_well").unwrap();
        let cfg = IntegratorConfig::default().tightened(100.0);
        let fwd = advance(&f, &[x, y], 0.1, &cfg, Direction::Descent).unwrap();
        let back = advance(&f, &fwd, 0.1, &cfg, Direction::Ascent).unwrap();
        prop_assert!((back[0] - x).abs() < 1e-7 && (back[1] - y).abs() < 1e-7);
    }

    #[test]
    fn minimum_start_stays_put(z in -3.0..3.0f64) {
        let f = catalog::field("x4y2").unwrap();
        let traj = integrate_flow(&f, &[0.0, 0.0, z], &IntegratorConfig::default()).unwrap();
        prop_assert_eq!(traj.stop_reason, StopReason::GradNormMet);
        prop_assert_eq!(traj.len(), 1);
    }
}
