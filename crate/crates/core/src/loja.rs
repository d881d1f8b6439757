//! Empirical checks of Łojasiewicz-type estimates along gradient flows.
//!
//! Every analysis is a pure function of an immutable trajectory (or point
//! cloud) and an analytic manifold model. Fits are ordinary least squares
//! in log-log space.

use serde::{Deserialize, Serialize};

use crate::critical::DEFAULT_LOCATE_TOL;
use crate::error::{input, Error, Result};
use crate::field::{dot, norm, ScalarField};
use crate::flow::{self, IntegratorConfig, Trajectory};
use crate::manifold::CriticalManifoldModel;
use crate::par::{self, Execution};

/// Samples with `f - f_p` at or below this are rounding noise.
pub const VALUE_GAP_FLOOR: f64 = 1e-13;
/// Fraction of valid samples, counted from the end, used by tail fits.
pub const TAIL_FRACTION: f64 = 0.6;
pub const MIN_FIT_SAMPLES: usize = 8;
/// Margin added to the estimated θ when choosing the Z-set exponent.
pub const THETA_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisFit {
    pub exponent: f64,
    pub log_constant: f64,
    /// RMS of the log-space residuals.
    pub residual: f64,
    /// Half-open index range `[start, end)` of the input that fed the fit.
    pub window: (usize, usize),
    pub sample_count: usize,
}

impl AnalysisFit {
    pub fn constant(&self) -> f64 {
        self.log_constant.exp()
    }

    /// `(log x, log y)` points on the fitted line at the given abscissae.
    pub fn line(&self, log_x: &[f64]) -> Vec<(f64, f64)> {
        log_x.iter().map(|&u| (u, self.log_constant + self.exponent * u)).collect()
    }
}

fn fit_loglog(points: &[(f64, f64)], window: (usize, usize)) -> Result<AnalysisFit> {
    if points.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData { needed: MIN_FIT_SAMPLES, got: points.len() });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-24 * n {
        return Err(input("fit abscissae do not vary"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let residual = (rss / n).sqrt();
    if !slope.is_finite() || !residual.is_finite() {
        return Err(input("log-log fit is not finite"));
    }
    Ok(AnalysisFit {
        exponent: slope,
        log_constant: intercept,
        residual,
        window,
        sample_count: points.len(),
    })
}

/// Indices of samples with `f - f_p > VALUE_GAP_FLOOR`, trimmed to the tail.
fn tail_window(traj: &Trajectory, f_p: f64) -> Vec<usize> {
    let valid: Vec<usize> =
        (0..traj.samples.len()).filter(|&i| traj.samples[i].f - f_p > VALUE_GAP_FLOOR).collect();
    let keep = ((valid.len() as f64) * TAIL_FRACTION).ceil() as usize;
    valid[valid.len() - keep.min(valid.len())..].to_vec()
}

fn span(indices: &[usize]) -> (usize, usize) {
    match (indices.first(), indices.last()) {
        (Some(&a), Some(&b)) => (a, b + 1),
        _ => (0, 0),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LojasiewiczReport {
    pub fit: AnalysisFit,
    /// `θ̂ ∈ [0.45, 1)`.
    pub exponent_in_range: bool,
    /// `|∇f| ≥ 0.5·Ĉ·(f - f_p)^θ̂` at every window sample.
    pub bound_holds: bool,
    /// Smallest `|∇f| / (Ĉ (f - f_p)^θ̂)` over the window.
    pub min_bound_ratio: f64,
    /// `(log(f - f_p), log|∇f|)` for every window sample.
    pub series: Vec<(f64, f64)>,
}

/// Fits `log|∇f(γ)|` against `log(f(γ) - f_p)` over the tail of `traj`.
pub fn estimate_lojasiewicz(
    field: &ScalarField,
    traj: &Trajectory,
    p: &[f64],
    f_p: f64,
) -> Result<LojasiewiczReport> {
    field.check_point(p)?;
    if !traj.converged() {
        return Err(input("Łojasiewicz fit needs a trajectory that met the gradient threshold"));
    }
    let window: Vec<usize> =
        tail_window(traj, f_p).into_iter().filter(|&i| traj.samples[i].grad_norm > 0.0).collect();
    let series: Vec<(f64, f64)> = window
        .iter()
        .map(|&i| {
            let s = &traj.samples[i];
            ((s.f - f_p).ln(), s.grad_norm.ln())
        })
        .collect();
    let fit = fit_loglog(&series, span(&window))?;
    let min_bound_ratio = series
        .iter()
        .map(|&(lf, lg)| (lg - fit.log_constant - fit.exponent * lf).exp())
        .fold(f64::INFINITY, f64::min);
    Ok(LojasiewiczReport {
        exponent_in_range: (0.45..1.0).contains(&fit.exponent),
        bound_holds: min_bound_ratio >= 0.5,
        min_bound_ratio,
        fit,
        series,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceReport {
    pub fit: AnalysisFit,
    /// Radius of the neighbourhood the exponent was fitted on.
    pub fit_radius: f64,
    /// `(radius, α̂)` for every radius with enough samples.
    pub exponents_by_radius: Vec<(f64, f64)>,
    /// Lower-bound constant: half the smallest `f / dist^α̂` on the fit
    /// neighbourhood.
    pub bound_constant: f64,
    /// Samples inside the largest radius with `f < Ĉ dist^α̂ - 1e-9`.
    pub violations: usize,
    /// Samples dropped for lying on the manifold.
    pub excluded: usize,
    pub passed: bool,
    /// `(log dist, log f)` for the fit neighbourhood.
    pub series: Vec<(f64, f64)>,
}

/// Fits `f(x) ≥ C·dist(x, N)^α` over neighbourhoods of `N` that shrink
/// through `radii`. The exponent comes from the smallest radius holding
/// at least eight usable samples; the bound is then checked on every
/// sample inside the largest radius.
pub fn check_distance_inequality(
    field: &ScalarField,
    manifold: &CriticalManifoldModel,
    samples: &[Vec<f64>],
    radii: &[f64],
) -> Result<DistanceReport> {
    const SLACK: f64 = 1e-9;
    const ON_MANIFOLD: f64 = 1e-12;
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(input("neighbourhood radii must be positive and finite"));
    }
    if manifold.ambient_dimension() != field.dimension() {
        return Err(Error::Dimension { expected: field.dimension(), got: manifold.ambient_dimension() });
    }
    let mut points = Vec::new();
    let mut excluded = 0;
    for (i, x) in samples.iter().enumerate() {
        field.check_point(x)?;
        let d = manifold.distance(x);
        if d < ON_MANIFOLD {
            excluded += 1;
            continue;
        }
        points.push((i, d, field.value_at(x)));
    }
    if points.is_empty() {
        return Err(Error::InsufficientData { needed: MIN_FIT_SAMPLES, got: 0 });
    }
    let mut sorted_radii = radii.to_vec();
    sorted_radii.sort_by(|a, b| b.total_cmp(a));
    let within = |r: f64| -> Vec<(usize, f64, f64)> {
        points.iter().copied().filter(|&(_, d, f)| d <= r && f > 0.0).collect()
    };
    let mut exponents_by_radius = Vec::new();
    let mut chosen = None;
    for &r in &sorted_radii {
        let near = within(r);
        let series: Vec<(f64, f64)> = near.iter().map(|&(_, d, f)| (d.ln(), f.ln())).collect();
        let idx: Vec<usize> = near.iter().map(|p| p.0).collect();
        if let Ok(fit) = fit_loglog(&series, span(&idx)) {
            exponents_by_radius.push((r, fit.exponent));
            chosen = Some((r, fit, near, series));
        }
    }
    let Some((fit_radius, fit, near, series)) = chosen else {
        return Err(Error::InsufficientData { needed: MIN_FIT_SAMPLES, got: within(sorted_radii[0]).len() });
    };
    let alpha = fit.exponent;
    let bound_constant =
        0.5 * near.iter().map(|&(_, d, f)| f / d.powf(alpha)).fold(f64::INFINITY, f64::min);
    let violations = points
        .iter()
        .filter(|&&(_, d, f)| d <= sorted_radii[0] && f < bound_constant * d.powf(alpha) - SLACK)
        .count();
    Ok(DistanceReport {
        passed: violations == 0 && bound_constant > 0.0 && bound_constant.is_finite(),
        fit,
        fit_radius,
        exponents_by_radius,
        bound_constant,
        violations,
        excluded,
        series,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub fit: AnalysisFit,
    /// `β̂ ∈ (0, 1)`.
    pub exponent_in_range: bool,
    /// `(log(f - f_p), log tail length)`.
    pub series: Vec<(f64, f64)>,
}

/// Fits the remaining length `l(γ[t,∞))` against `f(γ(t)) - f_p`. The
/// infinite tail is approximated by the sampled arc length to the last
/// sample plus the chord from there to `p`.
pub fn tail_length_rate(
    field: &ScalarField,
    traj: &Trajectory,
    p: &[f64],
    f_p: f64,
) -> Result<RateReport> {
    field.check_point(p)?;
    let chord = field.domain().distance(traj.endpoint(), p);
    let mut idx = Vec::new();
    let mut series = Vec::new();
    for i in tail_window(traj, f_p) {
        let s = &traj.samples[i];
        let length = traj.tail_arc_length(s.t)? + chord;
        if length > 0.0 {
            idx.push(i);
            series.push(((s.f - f_p).ln(), length.ln()));
        }
    }
    let fit = fit_loglog(&series, span(&idx))?;
    Ok(RateReport { exponent_in_range: fit.exponent > 0.0 && fit.exponent < 1.0, fit, series })
}

/// Tangential parts below this multiple of the rounding level of `p`
/// cannot be resolved, so ratios are only formed where `|𝒬|²` clears it.
fn normal_floor(p: &[f64]) -> f64 {
    let scale = 1.0 + p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (1e4 * f64::EPSILON * scale).sqrt().max(1e-12)
}

fn check_on_manifold(manifold: &CriticalManifoldModel, p: &[f64]) -> Result<()> {
    if p.len() != manifold.ambient_dimension() {
        return Err(Error::Dimension { expected: manifold.ambient_dimension(), got: p.len() });
    }
    let d = manifold.distance(p);
    if !(d <= DEFAULT_LOCATE_TOL) {
        return Err(input(format!("limit point is {d:e} from the critical manifold")));
    }
    Ok(())
}

/// `(sample index, 𝒫(γ-p), 𝒬(γ-p))` for samples whose normal part clears
/// the floor.
fn split_tail(
    field: &ScalarField,
    traj: &Trajectory,
    manifold: &CriticalManifoldModel,
    p: &[f64],
) -> Vec<(usize, Vec<f64>, Vec<f64>)> {
    let floor = normal_floor(p);
    traj.samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let v = field.domain().displacement(p, &s.x);
            let (tangential, normal) = manifold.split(p, &v);
            (norm(&normal) > floor).then_some((i, tangential, normal))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasReport {
    /// `(t, |𝒫(γ-p)| / |𝒬(γ-p)|²)`.
    pub ratio_series: Vec<(f64, f64)>,
    /// Supremum over the last half of the valid samples.
    pub tail_sup: f64,
    pub tail_median: f64,
    pub limit_point: Vec<f64>,
    pub manifold: CriticalManifoldModel,
    pub passed: bool,
}

/// Ratio of tangential displacement to squared normal displacement along
/// a trajectory converging to `p ∈ N`.
pub fn normal_bias(
    field: &ScalarField,
    traj: &Trajectory,
    manifold: &CriticalManifoldModel,
    p: &[f64],
) -> Result<BiasReport> {
    check_on_manifold(manifold, p)?;
    let parts = split_tail(field, traj, manifold, p);
    if parts.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: parts.len() });
    }
    let ratio_series: Vec<(f64, f64)> = parts
        .iter()
        .map(|(i, tangential, normal)| (traj.samples[*i].t, norm(tangential) / dot(normal, normal)))
        .collect();
    let mut tail: Vec<f64> = ratio_series[ratio_series.len() / 2..].iter().map(|r| r.1).collect();
    let tail_sup = tail.iter().copied().fold(0.0, f64::max);
    tail.sort_by(f64::total_cmp);
    let tail_median = tail[tail.len() / 2];
    Ok(BiasReport {
        passed: tail_sup.is_finite() && tail_sup <= 2.0 * tail_median,
        ratio_series,
        tail_sup,
        tail_median,
        limit_point: p.to_vec(),
        manifold: manifold.clone(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecantReport {
    /// `(t, (γ-p)/|γ-p|)`.
    pub direction_series: Vec<(f64, Vec<f64>)>,
    pub limit_estimate: Vec<f64>,
    /// Angle between the limit estimate and `T_pN`, in radians.
    pub tangent_angle: f64,
    /// Largest angle between any two secants in the last quarter.
    pub max_pairwise_angle: f64,
}

fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let cross2 = dot(a, a) * dot(b, b) - dot(a, b).powi(2);
    cross2.max(0.0).sqrt().atan2(dot(a, b))
}

/// Unit secants toward `p` over the tail and their limit.
pub fn secant_limit(
    field: &ScalarField,
    traj: &Trajectory,
    manifold: &CriticalManifoldModel,
    p: &[f64],
) -> Result<SecantReport> {
    check_on_manifold(manifold, p)?;
    let parts = split_tail(field, traj, manifold, p);
    if parts.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: parts.len() });
    }
    let direction_series: Vec<(f64, Vec<f64>)> = parts
        .iter()
        .map(|(i, tangential, normal)| {
            let v: Vec<f64> = tangential.iter().zip(normal).map(|(a, b)| a + b).collect();
            let len = norm(&v);
            (traj.samples[*i].t, v.iter().map(|c| c / len).collect())
        })
        .collect();
    let quarter = &direction_series[direction_series.len() - (direction_series.len() / 4).max(2)..];
    let mut max_pairwise_angle: f64 = 0.0;
    for (a, (_, u)) in quarter.iter().enumerate() {
        for (_, w) in &quarter[a + 1..] {
            max_pairwise_angle = max_pairwise_angle.max(angle_between(u, w));
        }
    }
    let limit_estimate = direction_series.last().expect("at least two secants").1.clone();
    let (tangential, normal) = manifold.split(p, &limit_estimate);
    Ok(SecantReport {
        tangent_angle: norm(&normal).atan2(norm(&tangential)),
        direction_series,
        limit_estimate,
        max_pairwise_angle,
    })
}

/// Smallest `k` with `2kθ < 2k - 1` once `θ̂` is padded by the margin.
pub fn minimum_z_exponent(theta_hat: f64) -> Result<u32> {
    let theta = theta_hat + THETA_MARGIN;
    if !(theta_hat.is_finite() && theta < 1.0) {
        return Err(input(format!("no admissible Z-set exponent for θ̂ = {theta_hat}")));
    }
    Ok((1.0 / (2.0 * (1.0 - theta))).floor() as u32 + 1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZCrossing {
    pub t: f64,
    pub x: Vec<f64>,
    /// `τ̇` at the crossing, evaluated analytically.
    pub tau_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZSetReport {
    pub k: u32,
    pub minimum_k: u32,
    pub crossings: Vec<ZCrossing>,
    /// At most one crossing and `τ̇ < 0` at it.
    pub passed: bool,
}

/// Crossings of `Z = {f - f_p = |x - p|^{2k}}` along `traj`, found as
/// refined sign changes of `τ = (f - f_p) - |γ - p|^{2k}`.
pub fn z_set_crossings(
    field: &ScalarField,
    traj: &Trajectory,
    p: &[f64],
    f_p: f64,
    k: u32,
    theta_hat: f64,
    cfg: &IntegratorConfig,
) -> Result<ZSetReport> {
    field.check_point(p)?;
    let minimum_k = minimum_z_exponent(theta_hat)?;
    if k < minimum_k {
        return Err(input(format!(
            "Z-set exponent k = {k} is too small for θ̂ = {theta_hat:.4}; the minimum admissible k is {minimum_k}"
        )));
    }
    let domain = field.domain();
    let power = 2 * k as i32;
    let tau = |x: &[f64]| field.value_at(x) - f_p - dot_self(&domain.displacement(p, x)).sqrt().powi(power);
    let found = flow::event_crossings(field, traj, tau, cfg)?;
    let sign = traj.direction.sign();
    let crossings: Vec<ZCrossing> = found
        .into_iter()
        .map(|c| {
            let g = field.gradient_at(&c.x);
            let d = domain.displacement(p, &c.x);
            let r2 = dot_self(&d);
            let w = 2.0 * k as f64 * r2.powi(k as i32 - 1);
            let grad_tau: Vec<f64> = g.iter().zip(&d).map(|(gi, di)| gi - w * di).collect();
            ZCrossing { tau_rate: sign * dot(&grad_tau, &g), t: c.t, x: c.x }
        })
        .collect();
    Ok(ZSetReport {
        passed: crossings.len() <= 1 && crossings.iter().all(|c| c.tau_rate < 0.0),
        k,
        minimum_k,
        crossings,
    })
}

fn dot_self(v: &[f64]) -> f64 {
    dot(v, v)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LengthBound {
    pub fit: AnalysisFit,
    /// Envelope `max L / d^α̂` over the calibration half (even indices).
    pub envelope: f64,
    /// Odd-indexed starts with `L > 1.5 · envelope · d^α̂`.
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurveyReport {
    /// Limit point on the manifold for every start; `None` if it did not
    /// converge.
    pub limits: Vec<Option<Vec<f64>>>,
    pub non_convergent: Vec<usize>,
    /// Largest distance from a mesh point to its nearest limit.
    pub max_gap: f64,
    /// Largest angular gap between consecutive limits, for circles.
    pub angular_gap: Option<f64>,
    /// `(dist(x0, N), arc length)` per convergent start.
    pub lengths: Vec<(f64, f64)>,
    /// Present when the start distances vary enough to fit.
    pub length_bound: Option<LengthBound>,
}

/// Integrates every start and records where on `N` it lands.
pub fn dense_limit_survey(
    field: &ScalarField,
    manifold: &CriticalManifoldModel,
    starts: &[Vec<f64>],
    mesh: &[Vec<f64>],
    cfg: &IntegratorConfig,
    exec: Execution,
) -> Result<SurveyReport> {
    if starts.is_empty() || mesh.is_empty() {
        return Err(input("survey needs at least one start and one mesh point"));
    }
    for x in starts {
        field.check_point(x)?;
    }
    let runs = par::map(exec, starts, |x0| flow::integrate_flow(field, x0, cfg));
    let mut limits = Vec::with_capacity(starts.len());
    let mut non_convergent = Vec::new();
    let mut lengths = Vec::new();
    for (i, (run, x0)) in runs.into_iter().zip(starts).enumerate() {
        match run {
            Ok(traj) if traj.converged() => {
                let limit = manifold.project(traj.endpoint());
                let total = traj.last().arc_length + field.domain().distance(traj.endpoint(), &limit);
                lengths.push((manifold.distance(x0), total));
                limits.push(Some(limit));
            }
            _ => {
                non_convergent.push(i);
                limits.push(None);
            }
        }
    }
    let achieved: Vec<&Vec<f64>> = limits.iter().flatten().collect();
    if achieved.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let max_gap = mesh
        .iter()
        .map(|m| achieved.iter().map(|l| field.domain().distance(m, l)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let angular_gap = matches!(manifold, CriticalManifoldModel::Circle { .. }).then(|| {
        let mut angles: Vec<f64> = achieved.iter().map(|l| l[1].atan2(l[0])).collect();
        angles.sort_by(f64::total_cmp);
        let wrap = angles[0] + std::f64::consts::TAU - angles[angles.len() - 1];
        angles.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
    });
    Ok(SurveyReport {
        length_bound: length_bound(&lengths),
        limits,
        non_convergent,
        max_gap,
        angular_gap,
        lengths,
    })
}

fn length_bound(lengths: &[(f64, f64)]) -> Option<LengthBound> {
    let usable: Vec<(f64, f64)> = lengths.iter().copied().filter(|&(d, l)| d > 0.0 && l > 0.0).collect();
    let (lo, hi) = usable.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &(d, _)| (lo.min(d), hi.max(d)));
    if usable.len() < MIN_FIT_SAMPLES || hi < 1.5 * lo {
        return None;
    }
    let series: Vec<(f64, f64)> = usable.iter().map(|&(d, l)| (d.ln(), l.ln())).collect();
    let fit = fit_loglog(&series, (0, usable.len())).ok()?;
    let alpha = fit.exponent;
    let envelope =
        usable.iter().step_by(2).map(|&(d, l)| l / d.powf(alpha)).fold(0.0, f64::max);
    let violations =
        usable.iter().skip(1).step_by(2).filter(|&&(d, l)| l > 1.5 * envelope * d.powf(alpha)).count();
    Some(LengthBound { fit, envelope, violations })
}

/// `(t, max_{s ≥ t} dist(γ(s), p))`: the tail-supremum distance to the
/// limit, which must shrink to zero for a convergent trajectory.
pub fn tail_distance_profile(field: &ScalarField, traj: &Trajectory, p: &[f64]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(traj.len());
    let mut running: f64 = 0.0;
    for s in traj.samples.iter().rev() {
        running = running.max(field.domain().distance(&s.x, p));
        out.push((s.t, running));
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use std::collections::BTreeMap;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    fn even_power(k: f64) -> ScalarField {
        catalog::lookup("even_power", &BTreeMap::from([("k".to_string(), k)])).unwrap().field
    }

    fn flow(f: &ScalarField, x0: &[f64]) -> Trajectory {
        flow::integrate_flow(f, x0, &IntegratorConfig::default()).unwrap()
    }

    #[test]
    fn exponents_for_even_powers() {
        for (k, theta) in [(1.0, 0.5), (2.0, 0.75), (3.0, 5.0 / 6.0)] {
            let f = even_power(k);
            let rep = estimate_lojasiewicz(&f, &flow(&f, &[1.0]), &[0.0], 0.0).unwrap();
            assert!((rep.fit.exponent - theta).abs() < 0.02, "k={k}: {}", rep.fit.exponent);
            assert!(rep.exponent_in_range && rep.bound_holds);
            assert!(rep.fit.sample_count >= MIN_FIT_SAMPLES);
        }
    }

    #[test]
    fn quartic_direction_controls_x4y2_tail() {
        let f = catalog::field("x4y2").unwrap();
        let rep = estimate_lojasiewicz(&f, &flow(&f, &[1.0, 1.0, 0.0]), &[0.0, 0.0, 0.0], 0.0).unwrap();
        assert!((rep.fit.exponent - 0.75).abs() < 0.03, "{}", rep.fit.exponent);
    }

    #[test]
    fn unconverged_trajectory_is_rejected() {
        let f = even_power(1.0);
        let traj = flow::integrate_flow(&f, &[1.0], &IntegratorConfig::default().with_horizon(0.1)).unwrap();
        assert!(estimate_lojasiewicz(&f, &traj, &[0.0], 0.0).is_err());
    }

    fn log_radii() -> Vec<f64> {
        vec![1.0, 0.3, 0.1, 0.03, 0.01]
    }

    #[test]
    fn distance_exponent_for_trough() {
        let f = catalog::field("trough").unwrap();
        let n = CriticalManifoldModel::axis_line(2, 1);
        let samples: Vec<Vec<f64>> =
            (0..200).map(|i| vec![0.5 * (-(i as f64) / 20.0).exp() * if i % 2 == 0 { 1.0 } else { -1.0 }, i as f64 * 0.01]).collect();
        let rep = check_distance_inequality(&f, &n, &samples, &log_radii()).unwrap();
        assert!((rep.fit.exponent - 2.0).abs() < 0.05);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn distance_exponent_for_x4y2_ray() {
        let f = catalog::field("x4y2").unwrap();
        let n = CriticalManifoldModel::axis_line(3, 2);
        let samples: Vec<Vec<f64>> = (1..=50).map(|i| vec![0.5 * 0.9f64.powi(i), 0.0, 0.0]).collect();
        let rep = check_distance_inequality(&f, &n, &samples, &log_radii()).unwrap();
        assert!((rep.fit.exponent - 4.0).abs() < 0.1);
        assert!(rep.passed);
    }

    #[test]
    fn distance_exponent_for_circle_well() {
        let f = catalog::field("circle_well").unwrap();
        let n = CriticalManifoldModel::Circle { radius: 1.0 };
        let samples: Vec<Vec<f64>> = (0..400)
            .map(|i| {
                let a = 0.37 * i as f64;
                let d = 0.2 * 0.97f64.powi(i / 2) * if i % 2 == 0 { 1.0 } else { -1.0 };
                vec![(1.0 + d) * a.cos(), (1.0 + d) * a.sin()]
            })
            .collect();
        let rep = check_distance_inequality(&f, &n, &samples, &log_radii()).unwrap();
        assert!((rep.fit.exponent - 2.0).abs() < 0.1, "{}", rep.fit.exponent);
        assert!(rep.passed);
    }

    #[test]
    fn samples_on_manifold_are_excluded() {
        let f = catalog::field("trough").unwrap();
        let n = CriticalManifoldModel::axis_line(2, 1);
        let on: Vec<Vec<f64>> = (0..20).map(|i| vec![0.0, i as f64]).collect();
        assert!(matches!(
            check_distance_inequality(&f, &n, &on, &[1.0]),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn tail_rates_for_even_powers() {
        for (k, beta) in [(1.0, 0.5), (2.0, 0.25)] {
            let f = even_power(k);
            let rep = tail_length_rate(&f, &flow(&f, &[1.0]), &[0.0], 0.0).unwrap();
            assert!((rep.fit.exponent - beta).abs() < 0.02, "k={k}: {}", rep.fit.exponent);
            assert!(rep.exponent_in_range);
        }
    }

    #[test]
    fn constant_trajectory_has_no_rate() {
        let f = even_power(1.0);
        assert!(matches!(
            tail_length_rate(&f, &flow(&f, &[0.0]), &[0.0], 0.0),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn trough_bias_is_zero_and_secant_normal() {
        let f = catalog::field("trough").unwrap();
        let n = CriticalManifoldModel::axis_line(2, 1);
        let traj = flow(&f, &[1.0, 0.3]);
        let p = n.project(traj.endpoint());
        let bias = normal_bias(&f, &traj, &n, &p).unwrap();
        assert!(bias.ratio_series.iter().all(|r| r.1.abs() < 1e-12));
        assert!(bias.passed);
        let sec = secant_limit(&f, &traj, &n, &p).unwrap();
        assert!((sec.tangent_angle - FRAC_PI_2).abs() < 1e-12);
        assert!(sec.max_pairwise_angle < 1e-12);
        for (_, u) in &sec.direction_series {
            assert!((norm(u) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn warped_trough_bias_is_bounded() {
        let f = catalog::field("warped_trough").unwrap();
        let n = CriticalManifoldModel::axis_line(2, 1);
        let traj = flow(&f, &[0.5, 0.5]);
        let p = n.project(traj.endpoint());
        let bias = normal_bias(&f, &traj, &n, &p).unwrap();
        assert!(bias.passed, "{} vs {}", bias.tail_sup, bias.tail_median);
        let z = p[1];
        let limit = z / (2.0 * (1.0 + z * z));
        assert!((bias.tail_sup - limit).abs() < 0.05 * limit, "{} vs {limit}", bias.tail_sup);
        let sec = secant_limit(&f, &traj, &n, &p).unwrap();
        assert!(sec.max_pairwise_angle < 1e-3);
        assert!((sec.tangent_angle - FRAC_PI_2).abs() < 1e-2);
    }

    #[test]
    fn radial_circle_flow_has_zero_bias() {
        let f = catalog::field("circle_well").unwrap();
        let n = CriticalManifoldModel::Circle { radius: 1.0 };
        let c = 1.5 * FRAC_1_SQRT_2;
        let starts = [[1.5, 0.0], [0.0, 1.5], [-1.5, 0.0], [0.0, -1.5], [c, c], [-c, c], [-c, -c], [c, -c]];
        for x0 in starts {
            let a = x0[1].atan2(x0[0]);
            let traj = flow(&f, &x0);
            let p = n.project(traj.endpoint());
            let bias = normal_bias(&f, &traj, &n, &p).unwrap();
            assert!(bias.tail_sup < 1e-12, "angle {a}: {}", bias.tail_sup);
            let sec = secant_limit(&f, &traj, &n, &p).unwrap();
            assert!((sec.tangent_angle - FRAC_PI_2).abs() < 1e-9);
        }
    }

    #[test]
    fn limit_off_manifold_is_rejected() {
        let f = catalog::field("trough").unwrap();
        let n = CriticalManifoldModel::axis_line(2, 1);
        let traj = flow(&f, &[1.0, 0.3]);
        assert!(matches!(normal_bias(&f, &traj, &n, &[0.1, 0.3]), Err(Error::Input(_))));
        assert!(secant_limit(&f, &traj, &n, &[0.1, 0.3]).is_err());
    }

    #[test]
    fn minimum_k_from_theta() {
        assert_eq!(minimum_z_exponent(0.5).unwrap(), 2);
        assert_eq!(minimum_z_exponent(0.75).unwrap(), 3);
        assert!(minimum_z_exponent(0.97).is_err());
    }

    #[test]
    fn z_set_rejects_small_k() {
        let f = catalog::field("x4y2").unwrap();
        let traj = flow(&f, &[0.1, 0.1, 0.05]);
        let err = z_set_crossings(&f, &traj, &[0.0; 3], 0.0, 2, 0.75, &IntegratorConfig::default()).unwrap_err();
        assert!(err.to_string().contains("minimum admissible k is 3"), "{err}");
    }

    #[test]
    fn z_set_quadratic_starts() {
        let f = even_power(1.0);
        let cfg = IntegratorConfig::default();
        for i in 1..20 {
            let traj = flow(&f, &[i as f64 / 20.0]);
            let rep = z_set_crossings(&f, &traj, &[0.0], 0.0, 2, 0.5, &cfg).unwrap();
            assert!(rep.passed);
        }
    }

    #[test]
    fn z_set_single_transversal_crossing_on_x4y2() {
        let f = catalog::field("x4y2").unwrap();
        let cfg = IntegratorConfig::default();
        let traj = flow(&f, &[0.15, 0.1, 0.05]);
        let rep = z_set_crossings(&f, &traj, &[0.0; 3], 0.0, 3, 0.75, &cfg).unwrap();
        assert_eq!(rep.crossings.len(), 1);
        assert!(rep.crossings[0].tau_rate < 0.0);
        assert!(rep.passed);
    }

    #[test]
    fn z_set_start_inside_stays_inside() {
        let f = catalog::field("x4y2").unwrap();
        let traj = flow(&f, &[0.01, 0.0, 0.5]);
        let rep = z_set_crossings(&f, &traj, &[0.0; 3], 0.0, 3, 0.75, &IntegratorConfig::default()).unwrap();
        assert!(rep.crossings.is_empty());
    }

    #[test]
    fn trough_survey_conserves_z() {
        let f = catalog::field("trough").unwrap();
        let n = CriticalManifoldModel::axis_line(2, 1);
        let starts: Vec<Vec<f64>> = (0..50).map(|i| vec![0.5, -1.0 + 2.0 * i as f64 / 49.0]).collect();
        let mesh = n.mesh(50, 1.0);
        let rep = dense_limit_survey(&f, &n, &starts, &mesh, &IntegratorConfig::default(), Execution::default())
            .unwrap();
        assert!(rep.non_convergent.is_empty());
        for (lim, x0) in rep.limits.iter().zip(&starts) {
            assert_eq!(lim.as_ref().unwrap(), &vec![0.0, x0[1]]);
        }
        assert!(rep.max_gap < 1e-12);
        assert!(rep.length_bound.is_none());
    }

    #[test]
    fn circle_survey_covers_circle() {
        let f = catalog::field("circle_well").unwrap();
        let n = CriticalManifoldModel::Circle { radius: 1.0 };
        let count = 200;
        let starts: Vec<Vec<f64>> = (0..count)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / count as f64;
                vec![1.5 * a.cos(), 1.5 * a.sin()]
            })
            .collect();
        let rep = dense_limit_survey(&f, &n, &starts, &n.mesh(400, 0.0), &IntegratorConfig::default(), Execution::default())
            .unwrap();
        assert!(rep.angular_gap.unwrap() < 2.0 * 2.0 * PI / count as f64);
    }

    #[test]
    fn warped_survey_limits_stay_near_start() {
        let f = catalog::field("warped_trough").unwrap();
        let n = CriticalManifoldModel::axis_line(2, 1);
        let starts: Vec<Vec<f64>> = (0..41).map(|i| vec![0.5, -1.0 + i as f64 / 20.0]).collect();
        let rep = dense_limit_survey(&f, &n, &starts, &n.mesh(100, 1.0), &IntegratorConfig::default(), Execution::Sequential)
            .unwrap();
        assert!(rep.max_gap < 0.1, "{}", rep.max_gap);
    }

    #[test]
    fn radial_lengths_fit_distance() {
        let f = catalog::field("circle_well").unwrap();
        let n = CriticalManifoldModel::Circle { radius: 1.0 };
        let starts: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let d = 0.5 * 0.7f64.powi(i);
                let a = 0.3 * i as f64;
                vec![(1.0 + d) * a.cos(), (1.0 + d) * a.sin()]
            })
            .collect();
        let rep = dense_limit_survey(&f, &n, &starts, &n.mesh(10, 0.0), &IntegratorConfig::default(), Execution::default())
            .unwrap();
        let bound = rep.length_bound.unwrap();
        assert!((bound.fit.exponent - 1.0).abs() < 0.02);
        assert_eq!(bound.violations, 0);
    }

    #[test]
    fn tail_distance_shrinks() {
        let f = catalog::field("torus_height").unwrap();
        let traj = flow(&f, &[0.4, 2.0]);
        let p = [PI, PI];
        let prof = tail_distance_profile(&f, &traj, &p);
        assert!(prof.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(prof.last().unwrap().1 < 1e-6);
    }
}
