//! Closed-form test fields with known critical structure.
//!
//! | id              | f                         | domain        |
//! |-----------------|---------------------------|---------------|
//! | `quadratic`     | Σ cᵢ xᵢ² (params c1..cn)  | ℝⁿ            |
//! | `quad_saddle`   | −x² + y²                  | ℝ²            |
//! | `bowl`          | x² + y²                   | ℝ²            |
//! | `trough`        | y² in coordinates (y, z)  | ℝ²            |
//! | `x4y2`          | x⁴ + y²                   | ℝ³            |
//! | `even_power`    | x^(2k) (param k ≥ 1)      | ℝ             |
//! | `torus_height`  | cos x + cos y             | flat 2π-torus |
//! | `circle_well`   | (x² + y² − 1)²            | ℝ²            |
//! | `warped_trough` | (1 + z²) y² in (y, z)     | ℝ²            |
//! | `linear`        | Σ xᵢ (param n)            | ℝⁿ            |

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::critical::CriticalClass;
use crate::error::{input, Error, Result};
use crate::field::ScalarField;
use crate::manifold::CriticalManifoldModel;

pub const CATALOG_IDS: &[&str] = &[
    "quadratic",
    "quad_saddle",
    "bowl",
    "trough",
    "x4y2",
    "even_power",
    "torus_height",
    "circle_well",
    "warped_trough",
    "linear",
];

/// Closed-form evaluators. Every variant has exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum CatalogField {
    /// `xᵀ A x`, `A` symmetric.
    Quadratic(DMatrix<f64>),
    QuarticPlusSquare,
    EvenPower { k: u32 },
    TorusHeight,
    CircleWell,
    WarpedTrough,
    Linear { n: usize },
}

impl CatalogField {
    pub fn dimension(&self) -> usize {
        match self {
            CatalogField::Quadratic(a) => a.nrows(),
            CatalogField::QuarticPlusSquare => 3,
            CatalogField::EvenPower { .. } => 1,
            CatalogField::TorusHeight | CatalogField::CircleWell | CatalogField::WarpedTrough => 2,
            CatalogField::Linear { n } => *n,
        }
    }

    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        match self {
            CatalogField::Quadratic(a) => {
                let n = a.nrows();
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += x[i] * a[(i, j)] * x[j];
                    }
                }
                s
            }
            CatalogField::QuarticPlusSquare => x[0].powi(4) + x[1] * x[1],
            CatalogField::EvenPower { k } => x[0].powi(2 * *k as i32),
            CatalogField::TorusHeight => x[0].cos() + x[1].cos(),
            CatalogField::CircleWell => {
                let s = x[0] * x[0] + x[1] * x[1] - 1.0;
                s * s
            }
            CatalogField::WarpedTrough => (1.0 + x[1] * x[1]) * x[0] * x[0],
            CatalogField::Linear { .. } => x.iter().sum(),
        }
    }

    pub(crate) fn gradient_into(&self, x: &[f64], g: &mut [f64]) {
        match self {
            CatalogField::Quadratic(a) => {
                let n = a.nrows();
                for i in 0..n {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += a[(i, j)] * x[j];
                    }
                    g[i] = 2.0 * s;
                }
            }
            CatalogField::QuarticPlusSquare => {
                g[0] = 4.0 * x[0].powi(3);
                g[1] = 2.0 * x[1];
                g[2] = 0.0;
            }
            CatalogField::EvenPower { k } => {
                let m = 2 * *k as i32;
                g[0] = m as f64 * x[0].powi(m - 1);
            }
            CatalogField::TorusHeight => {
                g[0] = -x[0].sin();
                g[1] = -x[1].sin();
            }
            CatalogField::CircleWell => {
                let s = x[0] * x[0] + x[1] * x[1] - 1.0;
                g[0] = 4.0 * s * x[0];
                g[1] = 4.0 * s * x[1];
            }
            CatalogField::WarpedTrough => {
                g[0] = 2.0 * (1.0 + x[1] * x[1]) * x[0];
                g[1] = 2.0 * x[1] * x[0] * x[0];
            }
            CatalogField::Linear { .. } => g.iter_mut().for_each(|v| *v = 1.0),
        }
    }

    pub(crate) fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dimension();
        match self {
            CatalogField::Quadratic(a) => a * 2.0,
            CatalogField::QuarticPlusSquare => {
                diagonal(&[12.0 * x[0] * x[0], 2.0, 0.0])
            }
            CatalogField::EvenPower { k } => {
                let m = 2 * *k as i32;
                DMatrix::from_element(1, 1, (m * (m - 1)) as f64 * x[0].powi(m - 2))
            }
            CatalogField::TorusHeight => diagonal(&[-x[0].cos(), -x[1].cos()]),
            CatalogField::CircleWell => {
                let s = x[0] * x[0] + x[1] * x[1] - 1.0;
                let off = 8.0 * x[0] * x[1];
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[4.0 * s + 8.0 * x[0] * x[0], off, off, 4.0 * s + 8.0 * x[1] * x[1]],
                )
            }
            CatalogField::WarpedTrough => {
                let off = 4.0 * x[0] * x[1];
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[2.0 * (1.0 + x[1] * x[1]), off, off, 2.0 * x[0] * x[0]],
                )
            }
            CatalogField::Linear { .. } => DMatrix::zeros(n, n),
        }
    }

    /// Exact solution of `γ̇ = −∇f(γ)`, `γ(0) = x0`, where one is known.
    pub fn closed_form_flow(&self, x0: &[f64], t: f64) -> Option<Vec<f64>> {
        match self {
            CatalogField::Quadratic(a) => {
                let n = a.nrows();
                let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] == 0.0));
                diagonal.then(|| (0..n).map(|i| x0[i] * (-2.0 * a[(i, i)] * t).exp()).collect())
            }
            CatalogField::QuarticPlusSquare => Some(vec![
                even_power_flow(2, x0[0], t),
                x0[1] * (-2.0 * t).exp(),
                x0[2],
            ]),
            CatalogField::EvenPower { k } => Some(vec![even_power_flow(*k, x0[0], t)]),
            CatalogField::TorusHeight => Some(x0.iter().map(|&v| torus_flow(v, t)).collect()),
            CatalogField::CircleWell => {
                let r0sq = x0[0] * x0[0] + x0[1] * x0[1];
                if r0sq == 0.0 {
                    return Some(vec![0.0, 0.0]);
                }
                // u = r² solves the logistic equation u̇ = 8u(1 − u).
                let u = 1.0 / (1.0 + (1.0 / r0sq - 1.0) * (-8.0 * t).exp());
                let scale = (u / r0sq).sqrt();
                Some(vec![x0[0] * scale, x0[1] * scale])
            }
            CatalogField::WarpedTrough => None,
            CatalogField::Linear { n } => Some((0..*n).map(|i| x0[i] - t).collect()),
        }
    }
}

pub(crate) fn diagonal(d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))
}

/// Flow of `ẋ = −2k x^(2k−1)`.
fn even_power_flow(k: u32, x0: f64, t: f64) -> f64 {
    if k == 1 {
        return x0 * (-2.0 * t).exp();
    }
    let m = 2.0 * k as f64;
    let p = m - 2.0;
    x0 * (1.0 + m * p * x0.abs().powf(p) * t).powf(-1.0 / p)
}

/// Flow of `ẋ = sin x`: `tan(x/2)` grows like `eᵗ`.
fn torus_flow(x0: f64, t: f64) -> f64 {
    let m = (x0 / (2.0 * PI)).round();
    let r = x0 - 2.0 * PI * m;
    if r.abs() >= PI {
        return x0;
    }
    2.0 * ((r / 2.0).tan() * t.exp()).atan() + 2.0 * PI * m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownCritical {
    pub location: Vec<f64>,
    pub value: f64,
    pub index: usize,
    pub nullity: usize,
    pub class: CriticalClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Morse,
    MorseBott,
    Degenerate,
    NoCriticalPoints,
}

/// Analytically known facts about a catalog field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFacts {
    pub kind: FieldKind,
    /// Representative critical points. For non-isolated critical sets
    /// these are sample points of the set.
    pub critical_points: Vec<KnownCritical>,
    /// The minimum set when it is a submanifold.
    pub critical_manifold: Option<CriticalManifoldModel>,
    pub minimum_value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub field: ScalarField,
    pub facts: ReferenceFacts,
}

/// Catalog field with default parameters.
pub fn field(id: &str) -> Result<ScalarField> {
    lookup(id, &BTreeMap::new()).map(|e| e.field)
}

pub fn entry(id: &str) -> Result<CatalogEntry> {
    lookup(id, &BTreeMap::new())
}

pub fn lookup(id: &str, params: &BTreeMap<String, f64>) -> Result<CatalogEntry> {
    let allowed: &[&str] = match id {
        "quadratic" => &[],
        "even_power" => &["k"],
        "linear" => &["n"],
        _ if CATALOG_IDS.contains(&id) => &[],
        _ => return Err(Error::UnknownCatalog(id.to_string())),
    };
    if id != "quadratic" {
        if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(input(format!("catalog field `{id}` has no parameter `{bad}`")));
        }
    }

    let (field, facts) = match id {
        "quadratic" => {
            let coeffs = quadratic_coefficients(params)?;
            quadratic(id, &coeffs)
        }
        "quad_saddle" => quadratic(id, &[-1.0, 1.0]),
        "bowl" => quadratic(id, &[1.0, 1.0]),
        "trough" => quadratic(id, &[1.0, 0.0]),
        "x4y2" => {
            let pts = [0.0, 5.0]
                .iter()
                .map(|&z| KnownCritical {
                    location: vec![0.0, 0.0, z],
                    value: 0.0,
                    index: 0,
                    nullity: 2,
                    class: CriticalClass::Degenerate,
                })
                .collect();
            (
                ScalarField::from_catalog(id, CatalogField::QuarticPlusSquare),
                ReferenceFacts {
                    kind: FieldKind::Degenerate,
                    critical_points: pts,
                    critical_manifold: Some(CriticalManifoldModel::axis_line(3, 2)),
                    minimum_value: Some(0.0),
                },
            )
        }
        "even_power" => {
            let k = integer_param(params, "k", 1.0)?;
            if k < 1 {
                return Err(input("even_power needs k >= 1"));
            }
            let (nullity, class) =
                if k == 1 { (0, CriticalClass::LocalMin) } else { (1, CriticalClass::Degenerate) };
            (
                ScalarField::from_catalog(id, CatalogField::EvenPower { k: k as u32 }),
                ReferenceFacts {
                    kind: if k == 1 { FieldKind::Morse } else { FieldKind::Degenerate },
                    critical_points: vec![KnownCritical {
                        location: vec![0.0],
                        value: 0.0,
                        index: 0,
                        nullity,
                        class,
                    }],
                    critical_manifold: Some(CriticalManifoldModel::Point { location: vec![0.0] }),
                    minimum_value: Some(0.0),
                },
            )
        }
        "torus_height" => {
            let pt = |x: f64, y: f64, index: usize, class: CriticalClass| KnownCritical {
                location: vec![x, y],
                value: x.cos() + y.cos(),
                index,
                nullity: 0,
                class,
            };
            (
                ScalarField::from_catalog(id, CatalogField::TorusHeight),
                ReferenceFacts {
                    kind: FieldKind::Morse,
                    critical_points: vec![
                        pt(0.0, 0.0, 2, CriticalClass::LocalMax),
                        pt(0.0, PI, 1, CriticalClass::Saddle),
                        pt(PI, 0.0, 1, CriticalClass::Saddle),
                        pt(PI, PI, 0, CriticalClass::LocalMin),
                    ],
                    critical_manifold: Some(CriticalManifoldModel::Point { location: vec![PI, PI] }),
                    minimum_value: Some(-2.0),
                },
            )
        }
        "circle_well" => {
            let mut pts = vec![KnownCritical {
                location: vec![0.0, 0.0],
                value: 1.0,
                index: 2,
                nullity: 0,
                class: CriticalClass::LocalMax,
            }];
            for a in [0.0, 0.5 * PI, 1.25 * PI] {
                pts.push(KnownCritical {
                    location: vec![a.cos(), a.sin()],
                    value: 0.0,
                    index: 0,
                    nullity: 1,
                    class: CriticalClass::Degenerate,
                });
            }
            (
                ScalarField::from_catalog(id, CatalogField::CircleWell),
                ReferenceFacts {
                    kind: FieldKind::MorseBott,
                    critical_points: pts,
                    critical_manifold: Some(CriticalManifoldModel::Circle { radius: 1.0 }),
                    minimum_value: Some(0.0),
                },
            )
        }
        "warped_trough" => {
            let pts = [-1.0, 0.0, 0.5]
                .iter()
                .map(|&z| KnownCritical {
                    location: vec![0.0, z],
                    value: 0.0,
                    index: 0,
                    nullity: 1,
                    class: CriticalClass::Degenerate,
                })
                .collect();
            (
                ScalarField::from_catalog(id, CatalogField::WarpedTrough),
                ReferenceFacts {
                    kind: FieldKind::MorseBott,
                    critical_points: pts,
                    critical_manifold: Some(CriticalManifoldModel::axis_line(2, 1)),
                    minimum_value: Some(0.0),
                },
            )
        }
        "linear" => {
            let n = integer_param(params, "n", 2.0)?;
            if n < 1 {
                return Err(input("linear needs n >= 1"));
            }
            (
                ScalarField::from_catalog(id, CatalogField::Linear { n: n as usize }),
                ReferenceFacts {
                    kind: FieldKind::NoCriticalPoints,
                    critical_points: Vec::new(),
                    critical_manifold: None,
                    minimum_value: None,
                },
            )
        }
        _ => unreachable!("id checked above"),
    };
    Ok(CatalogEntry { name: id.to_string(), params: params.clone(), field, facts })
}

/// One instance of every catalog id, with parameterised ids expanded to
/// the instances the verification suite exercises.
pub fn verification_entries() -> Vec<CatalogEntry> {
    let p = |pairs: &[(&str, f64)]| -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    };
    let specs: Vec<(&str, BTreeMap<String, f64>)> = vec![
        ("quadratic", p(&[("c1", 1.0), ("c2", 2.0), ("c3", 0.5)])),
        ("quad_saddle", p(&[])),
        ("bowl", p(&[])),
        ("trough", p(&[])),
        ("x4y2", p(&[])),
        ("even_power", p(&[("k", 1.0)])),
        ("even_power", p(&[("k", 2.0)])),
        ("even_power", p(&[("k", 3.0)])),
        ("torus_height", p(&[])),
        ("circle_well", p(&[])),
        ("warped_trough", p(&[])),
        ("linear", p(&[("n", 3.0)])),
    ];
    specs.into_iter().map(|(id, params)| lookup(id, &params).expect("catalog instance")).collect()
}

fn integer_param(params: &BTreeMap<String, f64>, name: &str, default: f64) -> Result<i64> {
    let v = params.get(name).copied().unwrap_or(default);
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(input(format!("parameter `{name}` must be an integer, got {v}")));
    }
    Ok(v as i64)
}

fn quadratic_coefficients(params: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    let mut coeffs = Vec::new();
    while let Some(c) = params.get(&format!("c{}", coeffs.len() + 1)) {
        coeffs.push(*c);
    }
    if coeffs.is_empty() || coeffs.len() != params.len() {
        return Err(input("quadratic expects parameters c1, c2, ..., cn and nothing else"));
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(input("quadratic coefficients must be finite"));
    }
    Ok(coeffs)
}

/// Diagonal quadratic `Σ cᵢ xᵢ²`. Zero coefficients give a critical
/// subspace spanned by their axes.
fn quadratic(id: &str, coeffs: &[f64]) -> (ScalarField, ReferenceFacts) {
    let n = coeffs.len();
    let field = ScalarField::from_catalog(id, CatalogField::Quadratic(diagonal(coeffs)));
    let index = coeffs.iter().filter(|c| **c < 0.0).count();
    let nullity = coeffs.iter().filter(|c| **c == 0.0).count();
    let class = CriticalClass::from_counts(index, nullity, n);
    let zero_axes: Vec<usize> = (0..n).filter(|&i| coeffs[i] == 0.0).collect();
    let is_min = index == 0;
    let manifold = if nullity == 0 {
        Some(CriticalManifoldModel::Point { location: vec![0.0; n] })
    } else {
        Some(CriticalManifoldModel::CoordinateSubspace { ambient: n, axes: zero_axes })
    };
    let facts = ReferenceFacts {
        kind: if nullity == 0 { FieldKind::Morse } else { FieldKind::MorseBott },
        critical_points: vec![KnownCritical {
            location: vec![0.0; n],
            value: 0.0,
            index,
            nullity,
            class,
        }],
        critical_manifold: if is_min { manifold } else { None },
        minimum_value: is_min.then_some(0.0),
    };
    (field, facts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_id_resolves_with_defaults() {
        for id in CATALOG_IDS {
            let params = if *id == "quadratic" {
                [("c1".to_string(), 2.0), ("c2".to_string(), -0.5)].into()
            } else {
                BTreeMap::new()
            };
            let e = lookup(id, &params).unwrap();
            assert_eq!(e.field.id(), *id);
        }
    }

    #[test]
    fn unknown_ids_and_params_are_rejected() {
        assert_eq!(field("nope").unwrap_err(), Error::UnknownCatalog("nope".into()));
        assert!(lookup("bowl", &[("k".to_string(), 2.0)].into()).is_err());
        assert!(lookup("even_power", &[("k".to_string(), 1.5)].into()).is_err());
        assert!(lookup("quadratic", &[("c2".to_string(), 1.0)].into()).is_err());
    }

    #[test]
    fn quadratic_facts() {
        let e = lookup("quadratic", &[("c1".into(), 1.0), ("c2".into(), -2.0), ("c3".into(), 0.0)].into())
            .unwrap();
        let cp = &e.facts.critical_points[0];
        assert_eq!((cp.index, cp.nullity, cp.class), (1, 1, CriticalClass::Degenerate));
        let t = entry("trough").unwrap();
        assert_eq!(t.facts.critical_manifold, Some(CriticalManifoldModel::axis_line(2, 1)));
    }

    #[test]
    fn closed_forms_start_at_initial_point() {
        for id in ["bowl", "x4y2", "torus_height", "circle_well", "even_power"] {
            let f = field(id).unwrap();
            let c = f.catalog_field().unwrap();
            let x0: Vec<f64> = (0..f.dimension()).map(|i| 0.3 + 0.2 * i as f64).collect();
            let at0 = c.closed_form_flow(&x0, 0.0).unwrap();
            for (a, b) in at0.iter().zip(&x0) {
                assert!((a - b).abs() < 1e-14, "{id}");
            }
        }
    }

    #[test]
    fn closed_form_satisfies_ode() {
        // central difference in time against −∇f
        for (id, x0) in [
            ("x4y2", vec![0.7, -0.4, 2.0]),
            ("torus_height", vec![2.5, -7.0]),
            ("circle_well", vec![0.2, 0.1]),
            ("circle_well", vec![1.4, -0.9]),
        ] {
            let f = field(id).unwrap();
            let c = f.catalog_field().unwrap();
            let t = 0.37;
            let h = 1e-5;
            let xp = c.closed_form_flow(&x0, t + h).unwrap();
            let xm = c.closed_form_flow(&x0, t - h).unwrap();
            let x = c.closed_form_flow(&x0, t).unwrap();
            let g = f.gradient(&x).unwrap();
            for i in 0..x.len() {
                let v = (xp[i] - xm[i]) / (2.0 * h);
                assert!((v + g[i]).abs() < 1e-7, "{id} component {i}: {v} vs {}", -g[i]);
            }
        }
    }
}
