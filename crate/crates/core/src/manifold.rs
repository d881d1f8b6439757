//! Analytic models of critical submanifolds.
//!
//! Every model supplies an exact nearest-point projection and orthonormal
//! bases of the tangent and normal spaces, so that projections onto
//! `T_pN` and its complement carry no reconstruction error.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::field::{dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CriticalManifoldModel {
    /// An isolated point.
    Point { location: Vec<f64> },
    /// The linear span of the listed coordinate axes in ℝ^ambient.
    CoordinateSubspace { ambient: usize, axes: Vec<usize> },
    /// A circle in the plane centred at the origin.
    Circle { radius: f64 },
}

impl CriticalManifoldModel {
    pub fn axis_line(ambient: usize, axis: usize) -> Self {
        CriticalManifoldModel::CoordinateSubspace { ambient, axes: vec![axis] }
    }

    pub fn ambient_dimension(&self) -> usize {
        match self {
            CriticalManifoldModel::Point { location } => location.len(),
            CriticalManifoldModel::CoordinateSubspace { ambient, .. } => *ambient,
            CriticalManifoldModel::Circle { .. } => 2,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            CriticalManifoldModel::Point { .. } => 0,
            CriticalManifoldModel::CoordinateSubspace { axes, .. } => axes.len(),
            CriticalManifoldModel::Circle { .. } => 1,
        }
    }

    /// Nearest point of the manifold. The circle maps its centre to `(r, 0)`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            CriticalManifoldModel::Point { location } => location.clone(),
            CriticalManifoldModel::CoordinateSubspace { axes, .. } => x
                .iter()
                .enumerate()
                .map(|(i, &v)| if axes.contains(&i) { v } else { 0.0 })
                .collect(),
            CriticalManifoldModel::Circle { radius } => {
                let r = x[0].hypot(x[1]);
                if r == 0.0 {
                    vec![*radius, 0.0]
                } else {
                    vec![radius * x[0] / r, radius * x[1] / r]
                }
            }
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            CriticalManifoldModel::Circle { radius } => (x[0].hypot(x[1]) - radius).abs(),
            _ => {
                let p = self.project(x);
                norm(&x.iter().zip(&p).map(|(a, b)| a - b).collect::<Vec<_>>())
            }
        }
    }

    /// Orthonormal basis of `T_pN`, `p` on the manifold.
    pub fn tangent_basis(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let n = self.ambient_dimension();
        match self {
            CriticalManifoldModel::Point { .. } => Vec::new(),
            CriticalManifoldModel::CoordinateSubspace { axes, .. } => {
                let mut axes = axes.clone();
                axes.sort_unstable();
                axes.iter().map(|&a| unit(n, a)).collect()
            }
            CriticalManifoldModel::Circle { .. } => {
                let r = p[0].hypot(p[1]);
                vec![vec![-p[1] / r, p[0] / r]]
            }
        }
    }

    /// Orthonormal basis of the normal space at `p`.
    pub fn normal_basis(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let n = self.ambient_dimension();
        match self {
            CriticalManifoldModel::Point { .. } => (0..n).map(|i| unit(n, i)).collect(),
            CriticalManifoldModel::CoordinateSubspace { axes, .. } => {
                (0..n).filter(|i| !axes.contains(i)).map(|i| unit(n, i)).collect()
            }
            CriticalManifoldModel::Circle { .. } => {
                let r = p[0].hypot(p[1]);
                vec![vec![p[0] / r, p[1] / r]]
            }
        }
    }

    /// Orthogonal projector onto `T_pN`.
    pub fn tangent_projector(&self, p: &[f64]) -> DMatrix<f64> {
        projector(self.ambient_dimension(), &self.tangent_basis(p))
    }

    /// Orthogonal projector onto the normal space, `I - P`.
    pub fn normal_projector(&self, p: &[f64]) -> DMatrix<f64> {
        projector(self.ambient_dimension(), &self.normal_basis(p))
    }

    /// Splits `v` into tangential and normal components at `p`.
    pub fn split(&self, p: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = v.len();
        let mut tangential = vec![0.0; n];
        for b in self.tangent_basis(p) {
            let c = dot(&b, v);
            for (t, bi) in tangential.iter_mut().zip(&b) {
                *t += c * bi;
            }
        }
        let mut normal = vec![0.0; n];
        for b in self.normal_basis(p) {
            let c = dot(&b, v);
            for (t, bi) in normal.iter_mut().zip(&b) {
                *t += c * bi;
            }
        }
        (tangential, normal)
    }

    /// `count` evenly spaced points; linear models use `[-extent, extent]`
    /// along their first axis.
    pub fn mesh(&self, count: usize, extent: f64) -> Vec<Vec<f64>> {
        match self {
            CriticalManifoldModel::Point { location } => vec![location.clone()],
            CriticalManifoldModel::CoordinateSubspace { ambient, axes } => {
                let axis = axes.iter().copied().min().unwrap_or(0);
                (0..count)
                    .map(|i| {
                        let s = if count == 1 {
                            0.0
                        } else {
                            -extent + 2.0 * extent * i as f64 / (count - 1) as f64
                        };
                        let mut p = vec![0.0; *ambient];
                        if !axes.is_empty() {
                            p[axis] = s;
                        }
                        p
                    })
                    .collect()
            }
            CriticalManifoldModel::Circle { radius } => (0..count)
                .map(|i| {
                    let a = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                    vec![radius * a.cos(), radius * a.sin()]
                })
                .collect(),
        }
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

fn projector(n: usize, basis: &[Vec<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for b in basis {
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += b[i] * b[j];
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_check(model: &CriticalManifoldModel, p: &[f64]) {
        let n = model.ambient_dimension();
        let mut all = model.tangent_basis(p);
        all.extend(model.normal_basis(p));
        assert_eq!(all.len(), n);
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(a, b) - expect).abs() < 1e-10);
            }
        }
        let sum = model.tangent_projector(p) + model.normal_projector(p);
        assert!((sum - DMatrix::identity(n, n)).amax() < 1e-10);
    }

    #[test]
    fn bases_are_orthonormal_and_complementary() {
        gram_check(&CriticalManifoldModel::axis_line(3, 2), &[0.0, 0.0, 1.5]);
        gram_check(&CriticalManifoldModel::Circle { radius: 1.0 }, &[0.6, 0.8]);
        gram_check(&CriticalManifoldModel::Point { location: vec![1.0, 2.0] }, &[1.0, 2.0]);
    }

    #[test]
    fn projections() {
        let c = CriticalManifoldModel::Circle { radius: 1.0 };
        assert_eq!(c.project(&[0.0, 3.0]), vec![0.0, 1.0]);
        assert!((c.distance(&[0.0, 0.25]) - 0.75).abs() < 1e-15);
        let z = CriticalManifoldModel::axis_line(2, 1);
        assert_eq!(z.project(&[0.3, -4.0]), vec![0.0, -4.0]);
        let (t, n) = z.split(&[0.0, -4.0], &[0.3, 0.1]);
        assert_eq!(t, vec![0.0, 0.1]);
        assert_eq!(n, vec![0.3, 0.0]);
    }

    #[test]
    fn mesh_points_lie_on_model() {
        let c = CriticalManifoldModel::Circle { radius: 1.0 };
        for p in c.mesh(17, 0.0) {
            assert!(c.distance(&p) < 1e-15);
        }
        let z = CriticalManifoldModel::axis_line(3, 2);
        let m = z.mesh(5, 1.0);
        assert_eq!(m.first().unwrap(), &vec![0.0, 0.0, -1.0]);
        assert_eq!(m.last().unwrap(), &vec![0.0, 0.0, 1.0]);
    }
}
