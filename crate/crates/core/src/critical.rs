//! Critical points: location, Hessian classification, invariant-manifold
//! branches and connections between critical points.

use std::io::{self, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::field::{norm, ScalarField};
use crate::flow::{self, event_crossings, Direction, IntegratorConfig, Trajectory};
use crate::par::{self, Execution};

/// Relative cutoff below which a Hessian eigenvalue counts as zero.
pub const DEGENERACY_REL_TOL: f64 = 1e-7;
/// Merge radius for sweeps, relative to the region diagonal.
pub const MERGE_RADIUS_REL: f64 = 1e-4;
pub const DEFAULT_SEED_EPS: f64 = 1e-4;
pub const DEFAULT_LOCATE_TOL: f64 = 1e-4;
pub const DEFAULT_ENDPOINT_GRAD_TOL: f64 = 1e-8;

const MAX_NEWTON_ITERS: usize = 200;
const MAX_POLISH_ITERS: usize = 60;
const PINV_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalClass {
    LocalMin,
    Saddle,
    LocalMax,
    Degenerate,
}

impl CriticalClass {
    pub fn from_counts(index: usize, nullity: usize, n: usize) -> CriticalClass {
        if nullity > 0 {
            CriticalClass::Degenerate
        } else if index == 0 {
            CriticalClass::LocalMin
        } else if index == n {
            CriticalClass::LocalMax
        } else {
            CriticalClass::Saddle
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CriticalClass::LocalMin => "local_min",
            CriticalClass::Saddle => "saddle",
            CriticalClass::LocalMax => "local_max",
            CriticalClass::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonDiagnostics {
    pub iterations: usize,
    /// Newton steps where the Hessian was (numerically) singular and the
    /// pseudo-inverse dropped at least one direction.
    pub singular_steps: usize,
    /// Steps taken along `−H∇f`, the descent direction of `|∇f|²/2`.
    pub fallback_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub value: f64,
    /// Hessian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors matching `eigenvalues`.
    pub eigenvectors: Vec<Vec<f64>>,
    pub index: usize,
    pub nullity: usize,
    pub class: CriticalClass,
    pub grad_norm: f64,
    pub diagnostics: NewtonDiagnostics,
}

impl CriticalPoint {
    pub fn is_degenerate(&self) -> bool {
        self.nullity > 0
    }
}

/// Ascending eigen-decomposition of a symmetric matrix.
pub fn sorted_spectrum(h: &DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    (values, vectors)
}

/// Index and nullity from a spectrum using the scale-relative cutoff.
pub fn index_and_nullity(eigenvalues: &[f64]) -> (usize, usize) {
    let radius = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = DEGENERACY_REL_TOL * radius.max(1.0);
    let nullity = eigenvalues.iter().filter(|v| v.abs() < cut).count();
    let index = eigenvalues.iter().filter(|v| **v <= -cut).count();
    (index, nullity)
}

/// Classifies `x` from its Hessian spectrum, without checking `∇f`.
pub fn classify(field: &ScalarField, x: &[f64]) -> Result<CriticalPoint> {
    field.check_point(x)?;
    let location = field.domain().wrap(x);
    let (eigenvalues, eigenvectors) = sorted_spectrum(&field.hessian_at(&location));
    let (index, nullity) = index_and_nullity(&eigenvalues);
    Ok(CriticalPoint {
        value: field.value_at(&location),
        grad_norm: norm(&field.gradient_at(&location)),
        class: CriticalClass::from_counts(index, nullity, location.len()),
        location,
        eigenvalues,
        eigenvectors,
        index,
        nullity,
        diagnostics: NewtonDiagnostics::default(),
    })
}

/// Damped Newton iteration on `∇f = 0` from `seed`.
///
/// Singular Hessians are handled with a spectral pseudo-inverse; if the
/// Newton direction does not reduce `|∇f|` the step falls back to
/// `−H∇f`. After reaching `tol` the iteration keeps polishing while the
/// residual still decreases, which pins slow degenerate directions close
/// enough for the nullity count.
pub fn find_critical(field: &ScalarField, seed: &[f64], tol: f64) -> Result<CriticalPoint> {
    field.check_point(seed)?;
    if !(tol > 0.0) {
        return Err(input(format!("tolerance must be positive, got {tol}")));
    }
    let mut x = seed.to_vec();
    let mut g = field.gradient_at(&x);
    let mut gn = norm(&g);
    let mut diag = NewtonDiagnostics::default();
    let mut polish = 0;
    while diag.iterations < MAX_NEWTON_ITERS + MAX_POLISH_ITERS {
        if gn == 0.0 {
            break;
        }
        if gn < tol {
            if polish >= MAX_POLISH_ITERS {
                break;
            }
            polish += 1;
        } else if diag.iterations >= MAX_NEWTON_ITERS {
            break;
        }
        diag.iterations += 1;
        let h = field.hessian_at(&x);
        let (vals, vecs) = sorted_spectrum(&h);
        let radius = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cut = PINV_REL_TOL * radius.max(1.0);
        let mut newton = vec![0.0; x.len()];
        let mut dropped = false;
        for (lam, v) in vals.iter().zip(&vecs) {
            if lam.abs() <= cut {
                dropped = true;
                continue;
            }
            let c = v.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / lam;
            for (s, vi) in newton.iter_mut().zip(v) {
                *s -= c * vi;
            }
        }
        if dropped {
            diag.singular_steps += 1;
        }
        let accepted = line_search(field, &x, &newton, gn).or_else(|| {
            let hg = &h * nalgebra::DVector::from_column_slice(&g);
            let descent: Vec<f64> = hg.iter().map(|v| -v).collect();
            let res = line_search(field, &x, &descent, gn);
            if res.is_some() {
                diag.fallback_steps += 1;
            }
            res
        });
        match accepted {
            Some((nx, ng, ngn)) => {
                x = nx;
                g = ng;
                gn = ngn;
            }
            None => break,
        }
    }
    if !(gn < tol) {
        return Err(Error::NotFound(format!(
            "|grad f| = {gn:e} after {} iterations from {seed:?}",
            diag.iterations
        )));
    }
    let mut cp = classify(field, &x)?;
    cp.diagnostics = diag;
    Ok(cp)
}

fn line_search(
    field: &ScalarField,
    x: &[f64],
    dir: &[f64],
    gn: f64,
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    if dir.iter().all(|d| *d == 0.0) || dir.iter().any(|d| !d.is_finite()) {
        return None;
    }
    let mut alpha = 1.0;
    for _ in 0..40 {
        let trial: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        let g = field.gradient_at(&trial);
        let n = norm(&g);
        if n.is_finite() && n < gn * (1.0 - 1e-4 * alpha).max(0.0) + f64::MIN_POSITIVE {
            return Some((trial, g, n));
        }
        alpha *= 0.5;
    }
    None
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Region> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(input("region bounds must have equal, non-zero length"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(input("region must satisfy lo < hi on every axis"));
        }
        Ok(Region { lo, hi })
    }

    pub fn diagonal(&self) -> f64 {
        norm(&self.hi.iter().zip(&self.lo).map(|(h, l)| h - l).collect::<Vec<_>>())
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v >= l - slack && *v <= h + slack)
    }

    /// Cell-centred grid nodes, `counts[i]` per axis.
    pub fn grid(&self, counts: &[usize]) -> Result<Vec<Vec<f64>>> {
        if counts.len() != self.lo.len() || counts.iter().any(|c| *c == 0) {
            return Err(input("grid needs one positive count per axis"));
        }
        let mut nodes = vec![Vec::new()];
        for (axis, &c) in counts.iter().enumerate() {
            let (l, h) = (self.lo[axis], self.hi[axis]);
            let step = (h - l) / c as f64;
            nodes = nodes
                .into_iter()
                .flat_map(|prefix: Vec<f64>| {
                    (0..c).map(move |i| {
                        let mut p = prefix.clone();
                        p.push(l + (i as f64 + 0.5) * step);
                        p
                    })
                })
                .collect();
        }
        Ok(nodes)
    }
}

/// Newton from every grid node, merged by distance.
pub fn sweep_critical(
    field: &ScalarField,
    region: &Region,
    grid: &[usize],
    tol: f64,
    exec: Execution,
) -> Result<Vec<CriticalPoint>> {
    if region.lo.len() != field.dimension() {
        return Err(Error::Dimension { expected: field.dimension(), got: region.lo.len() });
    }
    let seeds = region.grid(grid)?;
    let found: Vec<Option<CriticalPoint>> =
        par::map(exec, &seeds, |s| find_critical(field, s, tol).ok());
    let diag = region.diagonal();
    let domain = field.domain();
    let mut candidates: Vec<CriticalPoint> = found
        .into_iter()
        .flatten()
        .filter(|cp| domain.is_periodic() || region.contains(&cp.location, 1e-9 * diag))
        .collect();
    candidates.sort_by(|a, b| {
        a.value.total_cmp(&b.value).then_with(|| {
            a.location
                .iter()
                .zip(&b.location)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let radius = MERGE_RADIUS_REL * diag;
    let mut merged: Vec<CriticalPoint> = Vec::new();
    for cp in candidates {
        if merged.iter().all(|m| domain.distance(&m.location, &cp.location) >= radius) {
            merged.push(cp);
        }
    }
    Ok(merged)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Stable,
    Unstable,
}

/// Seed directions: `±v` for each eigenvector of the requested sign, or,
/// with `sphere_samples > 0` and a subspace of dimension ≥ 2, evenly
/// spread unit vectors in that subspace (always including `±v`).
pub fn branch_directions(cp: &CriticalPoint, kind: ManifoldKind, sphere_samples: usize) -> Vec<Vec<f64>> {
    let cut = DEGENERACY_REL_TOL
        * cp.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let basis: Vec<&Vec<f64>> = cp
        .eigenvalues
        .iter()
        .zip(&cp.eigenvectors)
        .filter(|(lam, _)| match kind {
            ManifoldKind::Unstable => **lam <= -cut,
            ManifoldKind::Stable => **lam >= cut,
        })
        .map(|(_, v)| v)
        .collect();
    let n = cp.location.len();
    let combine = |coeffs: &[f64]| -> Vec<f64> {
        let mut d = vec![0.0; n];
        for (c, v) in coeffs.iter().zip(&basis) {
            for (di, vi) in d.iter_mut().zip(v.iter()) {
                *di += c * vi;
            }
        }
        let len = norm(&d);
        d.iter().map(|x| x / len).collect()
    };
    let m = basis.len();
    if m >= 2 && sphere_samples > 0 {
        let mut dirs = Vec::new();
        if m == 2 {
            let count = sphere_samples.max(4);
            for j in 0..count {
                let a = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                // exact axes at multiples of a quarter turn
                let (s, c) = match (4 * j) % count {
                    0 => {
                        let q = 4 * j / count;
                        [(0.0, 1.0), (1.0, 0.0), (0.0, -1.0), (-1.0, 0.0)][q % 4]
                    }
                    _ => a.sin_cos(),
                };
                dirs.push(combine(&[c, s]));
            }
        } else {
            for i in 0..m {
                for sign in [1.0, -1.0] {
                    let mut c = vec![0.0; m];
                    c[i] = sign;
                    dirs.push(combine(&c));
                }
            }
            for i in 0..m {
                for j in i + 1..m {
                    for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                        let mut c = vec![0.0; m];
                        c[i] = si;
                        c[j] = sj;
                        dirs.push(combine(&c));
                    }
                }
            }
        }
        return dirs;
    }
    basis
        .iter()
        .flat_map(|v| [v.to_vec(), v.iter().map(|x| -x).collect()])
        .collect()
}

/// Traces the stable or unstable manifold of a non-degenerate critical
/// point from seeds `cp ± seed_eps·v`. Stable branches follow the
/// reversed field `+∇f` over the horizon in `cfg`.
pub fn manifold_branches(
    field: &ScalarField,
    cp: &CriticalPoint,
    kind: ManifoldKind,
    seed_eps: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<Trajectory>> {
    trace_branches(field, cp, kind, seed_eps, 0, cfg, Execution::default())
}

/// As [`manifold_branches`], but with `sphere_samples` directions on
/// subspaces of dimension ≥ 2 and an explicit execution mode.
pub fn trace_branches(
    field: &ScalarField,
    cp: &CriticalPoint,
    kind: ManifoldKind,
    seed_eps: f64,
    sphere_samples: usize,
    cfg: &IntegratorConfig,
    exec: Execution,
) -> Result<Vec<Trajectory>> {
    if cp.is_degenerate() {
        return Err(Error::Unsupported(format!(
            "manifold tracing needs a non-degenerate critical point (nullity {})",
            cp.nullity
        )));
    }
    if !(seed_eps > 0.0 && seed_eps.is_finite()) {
        return Err(input(format!("seed_eps must be positive, got {seed_eps}")));
    }
    let direction = match kind {
        ManifoldKind::Unstable => Direction::Descent,
        ManifoldKind::Stable => Direction::Ascent,
    };
    let seeds: Vec<Vec<f64>> = branch_directions(cp, kind, sphere_samples)
        .into_iter()
        .map(|v| cp.location.iter().zip(&v).map(|(p, d)| p + seed_eps * d).collect())
        .collect();
    par::map(exec, &seeds, |s| flow::integrate(field, s, cfg, direction)).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConnectionConfig {
    pub seed_eps: f64,
    pub locate_tol: f64,
    pub endpoint_grad_tol: f64,
    /// Directions sampled on unstable spheres of dimension ≥ 2.
    pub sphere_samples: usize,
}

impl Default for ConnectionConfig {
    fn default() -> Self {
        ConnectionConfig {
            seed_eps: DEFAULT_SEED_EPS,
            locate_tol: DEFAULT_LOCATE_TOL,
            endpoint_grad_tol: DEFAULT_ENDPOINT_GRAD_TOL,
            sphere_samples: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub source: CriticalPoint,
    pub target: CriticalPoint,
    pub source_id: usize,
    pub target_id: usize,
    pub branch_id: usize,
    /// `dim W^u(p) + dim W^s(q) − n = λ_p − λ_q`.
    pub expected_dimension: i64,
    pub representative: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnresolvedBranch {
    pub source_id: usize,
    pub branch_id: usize,
    pub endpoint: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDimension {
    pub source_id: usize,
    pub target_id: usize,
    pub unstable_dim: usize,
    pub stable_dim: usize,
    pub ambient_dim: usize,
    pub expected_dimension: i64,
    pub branch_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionReport {
    pub points: Vec<CriticalPoint>,
    pub connections: Vec<Connection>,
    pub unresolved: Vec<UnresolvedBranch>,
    pub dimensions: Vec<PairDimension>,
}

/// Follows every unstable branch of every critical point with positive
/// index and matches the endpoints against `points`.
pub fn find_connections(
    field: &ScalarField,
    points: &[CriticalPoint],
    ccfg: &ConnectionConfig,
    cfg: &IntegratorConfig,
    exec: Execution,
) -> Result<ConnectionReport> {
    if let Some(p) = points.iter().find(|p| p.is_degenerate()) {
        return Err(Error::Unsupported(format!(
            "connection search needs non-degenerate points; {:?} has nullity {}",
            p.location, p.nullity
        )));
    }
    let domain = field.domain();
    let n = field.dimension();
    let mut connections = Vec::new();
    let mut unresolved = Vec::new();
    for (source_id, p) in points.iter().enumerate() {
        if p.index == 0 {
            continue;
        }
        let branches = match trace_branches(
            field,
            p,
            ManifoldKind::Unstable,
            ccfg.seed_eps,
            ccfg.sphere_samples,
            cfg,
            exec,
        ) {
            Ok(b) => b,
            Err(e) => {
                unresolved.push(UnresolvedBranch {
                    source_id,
                    branch_id: 0,
                    endpoint: p.location.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        for (branch_id, traj) in branches.into_iter().enumerate() {
            let end = traj.endpoint().to_vec();
            let grad_end = traj.last().grad_norm;
            if !traj.converged() || grad_end >= ccfg.endpoint_grad_tol {
                unresolved.push(UnresolvedBranch {
                    source_id,
                    branch_id,
                    endpoint: end,
                    reason: format!("not converged ({:?}, |grad f| = {grad_end:e})", traj.stop_reason),
                });
                continue;
            }
            let target = points
                .iter()
                .enumerate()
                .map(|(i, q)| (i, domain.distance(&q.location, &end)))
                .filter(|(_, d)| *d < ccfg.locate_tol)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match target {
                Some((target_id, _)) if points[target_id].value < p.value => {
                    let q = &points[target_id];
                    connections.push(Connection {
                        source: p.clone(),
                        target: q.clone(),
                        source_id,
                        target_id,
                        branch_id,
                        expected_dimension: p.index as i64 - q.index as i64,
                        representative: traj,
                    });
                }
                _ => unresolved.push(UnresolvedBranch {
                    source_id,
                    branch_id,
                    endpoint: end,
                    reason: "endpoint matches no lower critical point".into(),
                }),
            }
        }
    }
    let mut dimensions: Vec<PairDimension> = Vec::new();
    for c in &connections {
        if let Some(d) = dimensions
            .iter_mut()
            .find(|d| d.source_id == c.source_id && d.target_id == c.target_id)
        {
            d.branch_count += 1;
            continue;
        }
        let unstable_dim = c.source.index;
        let stable_dim = n - c.target.index;
        dimensions.push(PairDimension {
            source_id: c.source_id,
            target_id: c.target_id,
            unstable_dim,
            stable_dim,
            ambient_dim: n,
            expected_dimension: unstable_dim as i64 + stable_dim as i64 - n as i64,
            branch_count: 1,
        });
    }
    Ok(ConnectionReport { points: points.to_vec(), connections, unresolved, dimensions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePoint {
    pub branch_id: usize,
    /// Number of refined crossings of the level; 1 on a genuine connection.
    pub crossings: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub value: f64,
}

/// Intersects each connecting flow line with the level set `f = level`.
pub fn level_slice_samples(
    field: &ScalarField,
    connections: &[Connection],
    level: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<SlicePoint>> {
    if connections.is_empty() {
        return Err(input("no connections given"));
    }
    let mut out = Vec::with_capacity(connections.len());
    for c in connections {
        if !(level > c.target.value && level < c.source.value) {
            return Err(input(format!(
                "level {level} outside the open interval ({}, {})",
                c.target.value, c.source.value
            )));
        }
        let hits = event_crossings(field, &c.representative, |x| field.value_at(x) - level, cfg)?;
        let first = hits.first().ok_or_else(|| {
            Error::NotFound(format!("branch {} never reaches level {level}", c.branch_id))
        })?;
        out.push(SlicePoint {
            branch_id: c.branch_id,
            crossings: hits.len(),
            t: first.t,
            value: field.value_at(&first.x),
            x: first.x.clone(),
        });
    }
    Ok(out)
}

/// CSV with columns `x_1..x_n,value,eig_1..eig_n,index,nullity,class`.
pub fn write_critical_csv<W: Write>(points: &[CriticalPoint], mut w: W) -> io::Result<()> {
    let n = points.first().map_or(0, |p| p.location.len());
    let mut header: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    header.push("value".into());
    header.extend((1..=n).map(|i| format!("eig_{i}")));
    header.extend(["index", "nullity", "class"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for p in points {
        let mut row: Vec<String> = p.location.iter().map(|v| v.to_string()).collect();
        row.push(p.value.to_string());
        row.extend(p.eigenvalues.iter().map(|v| v.to_string()));
        row.push(p.index.to_string());
        row.push(p.nullity.to_string());
        row.push(p.class.as_str().to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use std::f64::consts::PI;

    #[test]
    fn saddle_of_quadratic_normal_form() {
        let f = catalog::field("quad_saddle").unwrap();
        let cp = find_critical(&f, &[0.3, -0.2], 1e-10).unwrap();
        assert!(norm(&cp.location) < 1e-12);
        assert_eq!(cp.eigenvalues, vec![-2.0, 2.0]);
        assert_eq!((cp.index, cp.nullity, cp.class), (1, 0, CriticalClass::Saddle));
    }

    #[test]
    fn torus_minimum_from_nearby_seed() {
        let f = catalog::field("torus_height").unwrap();
        let cp = find_critical(&f, &[3.0, 3.0], 1e-10).unwrap();
        assert!((cp.location[0] - PI).abs() < 1e-10 && (cp.location[1] - PI).abs() < 1e-10);
        assert_eq!((cp.index, cp.class), (0, CriticalClass::LocalMin));
    }

    #[test]
    fn degenerate_point_on_z_axis() {
        let f = catalog::field("x4y2").unwrap();
        let cp = find_critical(&f, &[0.1, 0.1, 5.0], 1e-10).unwrap();
        assert!(cp.location[0].abs() < 1e-3 && cp.location[1].abs() < 1e-12);
        assert_eq!(cp.location[2], 5.0);
        assert_eq!(cp.nullity, 2);
        assert_eq!(cp.class, CriticalClass::Degenerate);
        assert!((cp.eigenvalues[2] - 2.0).abs() < 1e-12);
        assert!(cp.diagnostics.singular_steps > 0);
    }

    #[test]
    fn no_critical_point_is_not_found() {
        let f = catalog::field("linear").unwrap();
        assert!(matches!(find_critical(&f, &[0.0, 0.0], 1e-10), Err(Error::NotFound(_))));
    }

    #[test]
    fn torus_sweep_finds_four_points() {
        let f = catalog::field("torus_height").unwrap();
        let region = Region::new(vec![0.0, 0.0], vec![2.0 * PI, 2.0 * PI]).unwrap();
        let pts = sweep_critical(&f, &region, &[8, 8], 1e-10, Execution::default()).unwrap();
        assert_eq!(pts.len(), 4);
        let classes: Vec<_> = pts.iter().map(|p| p.class).collect();
        assert_eq!(classes.iter().filter(|c| **c == CriticalClass::LocalMax).count(), 1);
        assert_eq!(classes.iter().filter(|c| **c == CriticalClass::Saddle).count(), 2);
        assert_eq!(classes.iter().filter(|c| **c == CriticalClass::LocalMin).count(), 1);
    }

    #[test]
    fn quad_saddle_sweep_finds_one_point() {
        let f = catalog::field("quad_saddle").unwrap();
        let region = Region::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let pts = sweep_critical(&f, &region, &[5, 5], 1e-10, Execution::Sequential).unwrap();
        assert_eq!(pts.len(), 1);
    }

    #[test]
    fn circle_well_sweep_lands_on_critical_set() {
        let f = catalog::field("circle_well").unwrap();
        let region = Region::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let pts = sweep_critical(&f, &region, &[9, 9], 1e-10, Execution::default()).unwrap();
        assert!(pts.len() > 1);
        let mut origin = 0;
        for p in &pts {
            let r = norm(&p.location);
            if r < 1e-6 {
                origin += 1;
                assert_eq!(p.class, CriticalClass::LocalMax);
            } else {
                assert!((r - 1.0).abs() < 1e-6, "r = {r}");
                assert_eq!(p.class, CriticalClass::Degenerate);
            }
        }
        assert_eq!(origin, 1);
    }

    #[test]
    fn region_validation() {
        assert!(Region::new(vec![0.0], vec![0.0]).is_err());
        assert!(Region::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let r = Region::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let g = r.grid(&[2, 1]).unwrap();
        assert_eq!(g, vec![vec![0.25, 1.0], vec![0.75, 1.0]]);
        assert!(r.grid(&[0, 1]).is_err());
    }

    #[test]
    fn torus_saddle_unstable_branches_reach_minimum() {
        let f = catalog::field("torus_height").unwrap();
        let saddle = classify(&f, &[0.0, PI]).unwrap();
        let cfg = IntegratorConfig::default();
        let branches = manifold_branches(&f, &saddle, ManifoldKind::Unstable, 1e-4, &cfg).unwrap();
        assert_eq!(branches.len(), 2);
        for b in &branches {
            assert!(b.converged());
            let end = f.domain().wrap(b.endpoint());
            assert!(f.domain().distance(&end, &[PI, PI]) < 1e-8);
            let cp = classify(&f, b.endpoint()).unwrap();
            assert_eq!(cp.index, 0);
        }
    }

    #[test]
    fn quad_saddle_branches_stay_on_axis() {
        let f = catalog::field("quad_saddle").unwrap();
        let cp = classify(&f, &[0.0, 0.0]).unwrap();
        let cfg = IntegratorConfig { t_max: 5.0, ..Default::default() };
        let branches = manifold_branches(&f, &cp, ManifoldKind::Unstable, 1e-4, &cfg).unwrap();
        assert_eq!(branches.len(), 2);
        for b in &branches {
            for s in &b.samples {
                assert!(s.x[1].abs() < 1e-8);
            }
            assert!(b.endpoint()[0].abs() > 1.0);
        }
        let stable = manifold_branches(&f, &cp, ManifoldKind::Stable, 1e-4, &cfg).unwrap();
        assert_eq!(stable.len(), 2);
        for b in &stable {
            assert!(b.samples.iter().all(|s| s.x[0].abs() < 1e-8));
            assert!(b.endpoint()[1].abs() > 1.0);
        }
    }

    #[test]
    fn minimum_has_no_unstable_branches_and_bad_inputs_fail() {
        let f = catalog::field("bowl").unwrap();
        let cp = classify(&f, &[0.0, 0.0]).unwrap();
        let cfg = IntegratorConfig::default();
        assert!(manifold_branches(&f, &cp, ManifoldKind::Unstable, 1e-4, &cfg).unwrap().is_empty());
        assert!(manifold_branches(&f, &cp, ManifoldKind::Unstable, 0.0, &cfg).is_err());
        let g = catalog::field("x4y2").unwrap();
        let d = classify(&g, &[0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            manifold_branches(&g, &d, ManifoldKind::Stable, 1e-4, &cfg),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn single_minimum_has_no_connections() {
        let f = catalog::field("bowl").unwrap();
        let cp = classify(&f, &[0.0, 0.0]).unwrap();
        let report = find_connections(
            &f,
            &[cp],
            &ConnectionConfig::default(),
            &IntegratorConfig::default(),
            Execution::default(),
        )
        .unwrap();
        assert!(report.connections.is_empty());
        assert!(report.unresolved.is_empty());
    }

    #[test]
    fn critical_csv_layout() {
        let f = catalog::field("quad_saddle").unwrap();
        let cp = classify(&f, &[0.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        write_critical_csv(&[cp], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "x_1,x_2,value,eig_1,eig_2,index,nullity,class\n0,0,0,-2,2,1,0,saddle\n");
    }
}
