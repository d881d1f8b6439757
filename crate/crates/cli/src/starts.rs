//! Seeded start-point generators.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64`, sampled through `rand`'s uniform distributions. Both
//! are platform independent, so a seed fixes every start bit for bit.
//! Independent consumers derive their own stream with [`stream`].

use gradlab_core::CriticalManifoldModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Prng = ChaCha8Rng;

/// Generator for the consumer named `label`, derived from `seed`.
pub fn stream(seed: u64, label: &str) -> Prng {
    // FNV-1a keeps labels mapping to fixed, well-spread sub-seeds.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    Prng::seed_from_u64(seed ^ h)
}

/// Uniform points in the box `[lo, hi)`.
pub fn uniform_box(rng: &mut Prng, count: usize, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    (0..count).map(|_| lo.iter().zip(hi).map(|(a, b)| rng.random_range(*a..*b)).collect()).collect()
}

/// Uniform points in the open ball of `radius` about `centre`, excluding
/// the centre itself.
pub fn uniform_ball(rng: &mut Prng, count: usize, centre: &[f64], radius: f64) -> Vec<Vec<f64>> {
    let n = centre.len();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r2: f64 = v.iter().map(|x| x * x).sum();
        if r2 < 1.0 && r2 > 0.0 {
            out.push(centre.iter().zip(&v).map(|(c, x)| c + radius * x).collect());
        }
    }
    out
}

/// A random point of `manifold`; linear models draw coordinates in
/// `[-extent, extent]`.
pub fn manifold_point(rng: &mut Prng, manifold: &CriticalManifoldModel, extent: f64) -> Vec<f64> {
    match manifold {
        CriticalManifoldModel::Point { location } => location.clone(),
        CriticalManifoldModel::CoordinateSubspace { ambient, axes } => {
            let mut p = vec![0.0; *ambient];
            for &a in axes {
                p[a] = rng.random_range(-extent..extent);
            }
            p
        }
        CriticalManifoldModel::Circle { radius } => {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            vec![radius * a.cos(), radius * a.sin()]
        }
    }
}

/// Points at log-uniform normal distance in `[radius·1e-4, radius]` from
/// random points of the manifold, in random normal directions.
pub fn near_manifold(
    rng: &mut Prng,
    manifold: &CriticalManifoldModel,
    count: usize,
    radius: f64,
) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let p = manifold_point(rng, manifold, 1.0);
            let basis = manifold.normal_basis(&p);
            let mut dir = vec![0.0; p.len()];
            for b in &basis {
                let c: f64 = rng.random_range(-1.0..1.0);
                for (d, bi) in dir.iter_mut().zip(b) {
                    *d += c * bi;
                }
            }
            let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            let dist = radius * 10f64.powf(rng.random_range(-4.0..0.0));
            p.iter().zip(&dir).map(|(pi, d)| pi + dist * d / len).collect()
        })
        .collect()
}

/// `count` mesh points of the manifold pushed off along the first normal
/// direction by `offset`.
pub fn offset_mesh(manifold: &CriticalManifoldModel, count: usize, extent: f64, offset: f64) -> Vec<Vec<f64>> {
    manifold
        .mesh(count, extent)
        .into_iter()
        .map(|p| {
            let normal = &manifold.normal_basis(&p)[0];
            p.iter().zip(normal).map(|(a, b)| a + offset * b).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = uniform_box(&mut stream(5, "x"), 4, &[0.0], &[1.0]);
        let b = uniform_box(&mut stream(5, "x"), 4, &[0.0], &[1.0]);
        let c = uniform_box(&mut stream(5, "y"), 4, &[0.0], &[1.0]);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ball_points_lie_inside() {
        let pts = uniform_ball(&mut stream(1, "b"), 200, &[1.0, 2.0], 0.3);
        for p in pts {
            let r = ((p[0] - 1.0).powi(2) + (p[1] - 2.0).powi(2)).sqrt();
            assert!(r < 0.3 && r > 0.0);
        }
    }

    #[test]
    fn near_manifold_distances() {
        let m = CriticalManifoldModel::Circle { radius: 1.0 };
        for p in near_manifold(&mut stream(2, "n"), &m, 100, 0.2) {
            let d = m.distance(&p);
            assert!(d <= 0.2 + 1e-12 && d >= 0.2e-4 * 0.99);
        }
    }

    #[test]
    fn offset_mesh_on_circle_is_radial() {
        let m = CriticalManifoldModel::Circle { radius: 1.0 };
        for p in offset_mesh(&m, 12, 0.0, 0.5) {
            assert!((p[0].hypot(p[1]) - 1.5).abs() < 1e-12);
        }
    }
}
