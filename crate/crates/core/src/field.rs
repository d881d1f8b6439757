//! Scalar fields on Euclidean space or a flat torus.
//!
//! The metric is always the flat one, so the gradient is the vector of
//! partial derivatives and the Hessian is the matrix of second partials.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::catalog::CatalogField;
use crate::error::{input, Error, Result};
use crate::expr::{self, Expr};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Euclidean,
    /// ℝⁿ modulo `periods[i]` along axis `i`. Trajectories keep unwrapped
    /// coordinates; distances use the minimal image.
    FlatTorus { periods: Vec<f64> },
}

impl Domain {
    pub fn is_periodic(&self) -> bool {
        matches!(self, Domain::FlatTorus { .. })
    }

    /// Canonical representative with every periodic coordinate in `[0, period)`.
    pub fn wrap(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Domain::Euclidean => x.to_vec(),
            Domain::FlatTorus { periods } => x
                .iter()
                .zip(periods)
                .map(|(&v, &p)| {
                    let w = v.rem_euclid(p);
                    if w >= p {
                        0.0
                    } else {
                        w
                    }
                })
                .collect(),
        }
    }

    /// `a - b`, reduced to the minimal image on a torus.
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        match self {
            Domain::Euclidean => a.iter().zip(b).map(|(p, q)| p - q).collect(),
            Domain::FlatTorus { periods } => a
                .iter()
                .zip(b)
                .zip(periods)
                .map(|((p, q), &per)| {
                    let d = p - q;
                    d - per * (d / per).round()
                })
                .collect(),
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        norm(&self.displacement(a, b))
    }
}

#[derive(Debug)]
struct ExprField {
    variables: Vec<String>,
    expr: Expr,
    gradient: Vec<Expr>,
    /// Upper triangle, row-major: (i, j) with j >= i.
    hessian: Vec<Expr>,
}

#[derive(Debug, Clone)]
enum Source {
    Catalog(CatalogField),
    Expression(Arc<ExprField>),
}

/// An immutable smooth function with exact first and second derivatives.
#[derive(Debug, Clone)]
pub struct ScalarField {
    id: String,
    dimension: usize,
    domain: Domain,
    source: Source,
}

impl ScalarField {
    pub(crate) fn from_catalog(id: impl Into<String>, field: CatalogField) -> ScalarField {
        let dimension = field.dimension();
        let domain = match field {
            CatalogField::TorusHeight => Domain::FlatTorus { periods: vec![2.0 * PI; 2] },
            _ => Domain::Euclidean,
        };
        ScalarField { id: id.into(), dimension, domain, source: Source::Catalog(field) }
    }

    /// `f(x) = xᵀ A x` for a symmetric `A`.
    pub fn quadratic_form(matrix: DMatrix<f64>) -> Result<ScalarField> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(input("quadratic form needs a non-empty square matrix"));
        }
        if (&matrix - matrix.transpose()).amax() > 1e-12 * (1.0 + matrix.amax()) {
            return Err(input("quadratic form matrix must be symmetric"));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Ok(ScalarField::from_catalog("quadratic_form", CatalogField::Quadratic(sym)))
    }

    /// Builds a field from an expression string over named coordinates.
    pub fn from_expression(text: &str, variables: &[String], domain: Domain) -> Result<ScalarField> {
        if variables.is_empty() {
            return Err(input("expression field needs at least one variable"));
        }
        if let Domain::FlatTorus { periods } = &domain {
            if periods.len() != variables.len() {
                return Err(Error::Dimension { expected: variables.len(), got: periods.len() });
            }
            if periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                return Err(input("torus periods must be positive and finite"));
            }
        }
        let expr = expr::parse(text, variables)?.simplify();
        let n = variables.len();
        let gradient: Vec<Expr> = (0..n).map(|i| expr.differentiate(i)).collect();
        let mut hessian = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                hessian.push(gradient[i].differentiate(j));
            }
        }
        Ok(ScalarField {
            id: format!("expr:{text}"),
            dimension: n,
            domain,
            source: Source::Expression(Arc::new(ExprField {
                variables: variables.to_vec(),
                expr,
                gradient,
                hessian,
            })),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn catalog_field(&self) -> Option<&CatalogField> {
        match &self.source {
            Source::Catalog(c) => Some(c),
            Source::Expression(_) => None,
        }
    }

    /// Expression text and variables for parsed fields.
    pub fn expression(&self) -> Option<(String, &[String])> {
        match &self.source {
            Source::Expression(e) => Some((e.expr.display(&e.variables).to_string(), &e.variables)),
            Source::Catalog(_) => None,
        }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Dimension { expected: self.dimension, got: x.len() });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.value_at(x))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut g = vec![0.0; self.dimension];
        self.gradient_into(x, &mut g);
        Ok(g)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        Ok(self.hessian_at(x))
    }

    pub(crate) fn value_at(&self, x: &[f64]) -> f64 {
        match &self.source {
            Source::Catalog(c) => c.value(x),
            Source::Expression(e) => e.expr.eval(x),
        }
    }

    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.source {
            Source::Catalog(c) => c.gradient_into(x, out),
            Source::Expression(e) => {
                for (o, g) in out.iter_mut().zip(&e.gradient) {
                    *o = g.eval(x);
                }
            }
        }
    }

    pub(crate) fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dimension];
        self.gradient_into(x, &mut g);
        g
    }

    pub(crate) fn hessian_at(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.source {
            Source::Catalog(c) => c.hessian(x),
            Source::Expression(e) => {
                let n = self.dimension;
                let mut h = DMatrix::zeros(n, n);
                let mut k = 0;
                for i in 0..n {
                    for j in i..n {
                        let v = e.hessian[k].eval(x);
                        h[(i, j)] = v;
                        h[(j, i)] = v;
                        k += 1;
                    }
                }
                h
            }
        }
    }
}

/// Central-difference gradient with step `h`; error is O(h²).
pub fn finite_diff_gradient(field: &ScalarField, x: &[f64], h: f64) -> Result<Vec<f64>> {
    field.check_point(x)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(input(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = field.value_at(&probe);
        probe[i] = x[i] - h;
        let fm = field.value_at(&probe);
        probe[i] = x[i];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn eval_examples() {
        let f = catalog::field("x4y2").unwrap();
        assert_eq!(f.eval(&[0.0, 0.0, 5.0]).unwrap(), 0.0);
        let t = catalog::field("torus_height").unwrap();
        assert_eq!(t.eval(&[0.0, 0.0]).unwrap(), 2.0);
        let s = catalog::field("quad_saddle").unwrap();
        assert_eq!(s.eval(&[1.0, 2.0]).unwrap(), 3.0);
    }

    #[test]
    fn eval_rejects_bad_points() {
        let f = catalog::field("x4y2").unwrap();
        assert_eq!(f.eval(&[1.0, 2.0]), Err(Error::Dimension { expected: 3, got: 2 }));
        assert_eq!(f.eval(&[1.0, f64::NAN, 0.0]), Err(Error::NonFinite(1)));
        assert!(f.gradient(&[f64::INFINITY, 0.0, 0.0]).is_err());
        assert!(f.hessian(&[0.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let f = catalog::field("x4y2").unwrap();
        assert_eq!(f.gradient(&[1.0, 1.0, 0.0]).unwrap(), vec![4.0, 2.0, 0.0]);
        let t = catalog::field("torus_height").unwrap();
        let g = t.gradient(&[PI / 2.0, 0.0]).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-15 && g[1].abs() < 1e-15);
    }

    #[test]
    fn hessian_examples() {
        let s = catalog::field("quad_saddle").unwrap();
        for x in [[0.0, 0.0], [3.0, -7.5]] {
            assert_eq!(s.hessian(&x).unwrap(), crate::catalog::diagonal(&[-2.0, 2.0]));
        }
        let f = catalog::field("x4y2").unwrap();
        assert_eq!(
            f.hessian(&[0.0, 0.0, 0.0]).unwrap(),
            crate::catalog::diagonal(&[0.0, 2.0, 0.0])
        );
    }

    #[test]
    fn finite_difference_examples() {
        let f = catalog::field("x4y2").unwrap();
        let fd = finite_diff_gradient(&f, &[1.0, 1.0, 0.0], 1e-5).unwrap();
        let exact = f.gradient(&[1.0, 1.0, 0.0]).unwrap();
        for (a, b) in fd.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-8);
        }
        let lin = catalog::lookup("linear", &[("n".to_string(), 3.0)].into()).unwrap().field;
        for h in [1e-3, 0.5, 2.0] {
            let g = finite_diff_gradient(&lin, &[0.25, -3.0, 8.0], h).unwrap();
            for v in g {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
        assert!(matches!(finite_diff_gradient(&f, &[0.0; 3], 0.0), Err(Error::Input(_))));
    }

    #[test]
    fn torus_displacement_uses_minimal_image() {
        let d = Domain::FlatTorus { periods: vec![2.0 * PI, 2.0 * PI] };
        let a = [0.1, 2.0 * PI - 0.1];
        let b = [2.0 * PI - 0.1, 0.1];
        assert!((d.distance(&a, &b) - (0.08f64).sqrt()).abs() < 1e-12);
        let w = d.wrap(&[-0.5, 7.0]);
        assert!((w[0] - (2.0 * PI - 0.5)).abs() < 1e-15 && (w[1] - (7.0 - 2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn expression_field_matches_catalog() {
        let names = vec!["x".to_string(), "y".to_string()];
        let torus = Domain::FlatTorus { periods: vec![2.0 * PI; 2] };
        let e = ScalarField::from_expression("cos(x) + cos(y)", &names, torus).unwrap();
        let c = catalog::field("torus_height").unwrap();
        let p = [0.4, -2.2];
        assert!((e.eval(&p).unwrap() - c.eval(&p).unwrap()).abs() < 1e-15);
        assert!((e.hessian(&p).unwrap() - c.hessian(&p).unwrap()).amax() < 1e-15);
        assert!(ScalarField::from_expression("x", &names, Domain::FlatTorus { periods: vec![1.0] })
            .is_err());
    }

    #[test]
    fn quadratic_form_requires_symmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(ScalarField::quadratic_form(m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -1.0]);
        let f = ScalarField::quadratic_form(m).unwrap();
        assert_eq!(f.eval(&[1.0, 1.0]).unwrap(), 1.0);
    }
}
