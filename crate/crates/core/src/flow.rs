//! Numerical gradient flow `γ̇ = −∇f(γ)`.
//!
//! Integration uses the Dormand–Prince 5(4) embedded pair with FSAL and
//! standard PI-free step control. Every accepted step becomes a sample.
//! Arc length is accumulated with the fifth-order weights applied to the
//! stage speeds `|∇f|`, so it has the same order as the state.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::field::{dot, norm, ScalarField};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Integration horizon.
    pub t_max: f64,
    /// Terminate once `|∇f|` drops below this value.
    pub stop_grad_norm: f64,
    /// When positive, terminate once a step lowers `f` by less than this.
    pub stop_value_delta: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_step: 1e3,
            t_max: 1e6,
            stop_grad_norm: 1e-8,
            stop_value_delta: 0.0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(input(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("rel_tol", self.rel_tol)?;
        positive("abs_tol", self.abs_tol)?;
        positive("max_step", self.max_step)?;
        positive("t_max", self.t_max)?;
        if !(self.stop_grad_norm >= 0.0 && self.stop_grad_norm.is_finite()) {
            return Err(input("stop_grad_norm must be non-negative and finite"));
        }
        if !(self.stop_value_delta >= 0.0 && self.stop_value_delta.is_finite()) {
            return Err(input("stop_value_delta must be non-negative and finite"));
        }
        Ok(())
    }

    /// Same config with both tolerances divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        IntegratorConfig { rel_tol: self.rel_tol / factor, abs_tol: self.abs_tol / factor, ..*self }
    }

    pub fn with_horizon(&self, t_max: f64) -> Self {
        IntegratorConfig { t_max, ..*self }
    }
}

/// `Descent` follows `−∇f`; `Ascent` follows `+∇f` (the time-reversed flow).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Descent,
    Ascent,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Descent => -1.0,
            Direction::Ascent => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradNormMet,
    HorizonReached,
    StepUnderflow,
    ValueStalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub arc_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub field_id: String,
    pub direction: Direction,
    pub samples: Vec<Sample>,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub field_id: String,
    pub direction: Direction,
    pub stop_reason: StopReason,
    pub sample_count: usize,
    pub start: Vec<f64>,
    pub endpoint: Vec<f64>,
    pub t_end: f64,
    pub f_start: f64,
    pub f_end: f64,
    pub grad_norm_end: f64,
    pub arc_length: f64,
}

/// A refined zero of an event function along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: f64,
    pub x: Vec<f64>,
    /// Time derivative of the event function at the crossing.
    pub rate: f64,
}

const MAX_STEPS: usize = 5_000_000;

// Dormand–Prince 5(4) tableau. The field is autonomous, so the nodes c_i
// are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Stepper<'a> {
    field: &'a ScalarField,
    sign: f64,
    cfg: IntegratorConfig,
    n: usize,
    k: [Vec<f64>; 7],
    scratch: Vec<f64>,
}

struct StepResult {
    y: Vec<f64>,
    err: f64,
    arc: f64,
}

impl<'a> Stepper<'a> {
    fn new(field: &'a ScalarField, direction: Direction, cfg: IntegratorConfig) -> Self {
        let n = field.dimension();
        Stepper {
            field,
            sign: direction.sign(),
            cfg,
            n,
            k: std::array::from_fn(|_| vec![0.0; n]),
            scratch: vec![0.0; n],
        }
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) {
        self.field.gradient_into(y, out);
        for v in out.iter_mut() {
            *v *= self.sign;
        }
    }

    fn scaled_norm(&self, v: &[f64], y: &[f64]) -> f64 {
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let sc = self.cfg.abs_tol + self.cfg.rel_tol * b.abs();
                (a / sc).powi(2)
            })
            .sum();
        (s / self.n as f64).sqrt()
    }

    fn initial_step(&mut self, y0: &[f64]) -> f64 {
        let mut f0 = vec![0.0; self.n];
        self.rhs(y0, &mut f0);
        let d0 = self.scaled_norm(y0, y0);
        let d1 = self.scaled_norm(&f0, y0);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1: Vec<f64> = y0.iter().zip(&f0).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = vec![0.0; self.n];
        self.rhs(&y1, &mut f1);
        let diff: Vec<f64> = f1.iter().zip(&f0).map(|(a, b)| a - b).collect();
        let d2 = self.scaled_norm(&diff, y0) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.cfg.max_step)
    }

    /// One trial step from `y` (with `k[0]` already holding the slope at `y`).
    fn trial(&mut self, y: &[f64], h: f64) -> StepResult {
        for s in 1..7 {
            for i in 0..self.n {
                let mut acc = y[i];
                for j in 0..s {
                    acc += h * A[s][j] * self.k[j][i];
                }
                self.scratch[i] = acc;
            }
            let stage = std::mem::take(&mut self.scratch);
            let mut out = std::mem::take(&mut self.k[s]);
            self.rhs(&stage, &mut out);
            self.k[s] = out;
            self.scratch = stage;
        }
        // Row 6 of A is B, so the last stage point is the new state.
        let y_new = self.scratch.clone();
        let mut err_vec = vec![0.0; self.n];
        for (i, e) in err_vec.iter_mut().enumerate() {
            *e = h * (0..7).map(|s| E[s] * self.k[s][i]).sum::<f64>();
        }
        let s: f64 = err_vec
            .iter()
            .zip(y.iter().zip(&y_new))
            .map(|(e, (a, b))| {
                let sc = self.cfg.abs_tol + self.cfg.rel_tol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum();
        let err = (s / self.n as f64).sqrt();
        let arc = h * (0..7).map(|s| B[s] * norm(&self.k[s])).sum::<f64>();
        StepResult { y: y_new, err, arc }
    }
}

fn grad_norm_of(field: &ScalarField, x: &[f64]) -> f64 {
    norm(&field.gradient_at(x))
}

fn run(
    field: &ScalarField,
    x0: &[f64],
    cfg: &IntegratorConfig,
    direction: Direction,
    record: bool,
) -> Result<(Vec<Sample>, StopReason)> {
    field.check_point(x0)?;
    cfg.validate()?;
    let mut stepper = Stepper::new(field, direction, *cfg);
    let mut y = x0.to_vec();
    let mut t = 0.0;
    let mut arc = 0.0;
    let mut f_val = field.value_at(&y);
    let mut k0 = vec![0.0; stepper.n];
    stepper.rhs(&y, &mut k0);
    let mut gnorm = norm(&k0);
    stepper.k[0] = k0;

    let mut samples = Vec::new();
    let push = |samples: &mut Vec<Sample>, t, y: &[f64], f, g, arc| {
        samples.push(Sample { t, x: y.to_vec(), f, grad_norm: g, arc_length: arc });
    };
    push(&mut samples, t, &y, f_val, gnorm, arc);

    let mut h = stepper.initial_step(&y);
    let mut accepted = 0usize;
    let reason = loop {
        if gnorm < cfg.stop_grad_norm {
            break StopReason::GradNormMet;
        }
        if t >= cfg.t_max {
            break StopReason::HorizonReached;
        }
        if accepted >= MAX_STEPS || h < 1e-14 * t.abs().max(1.0) {
            break StopReason::StepUnderflow;
        }
        let remaining = cfg.t_max - t;
        let h_try = h.min(cfg.max_step).min(remaining);
        let step = stepper.trial(&y, h_try);
        if !step.err.is_finite() || step.y.iter().any(|v| !v.is_finite()) {
            h = h_try * 0.2;
            if h >= 1e-14 * t.abs().max(1.0) {
                continue;
            }
            return Err(Error::Integration { t, reason: "state became non-finite".into() });
        }
        if step.err <= 1.0 {
            let landed_on_horizon = h_try == remaining;
            t = if landed_on_horizon { cfg.t_max } else { t + h_try };
            y = step.y;
            arc += step.arc;
            let f_prev = f_val;
            f_val = field.value_at(&y);
            stepper.k.swap(0, 6);
            gnorm = norm(&stepper.k[0]);
            accepted += 1;
            if record {
                push(&mut samples, t, &y, f_val, gnorm, arc);
            }
            let factor = if step.err == 0.0 { 5.0 } else { (0.9 * step.err.powf(-0.2)).clamp(0.2, 5.0) };
            h = h_try * factor;
            if cfg.stop_value_delta > 0.0 && (f_prev - f_val).abs() < cfg.stop_value_delta {
                break StopReason::ValueStalled;
            }
        } else {
            h = h_try * (0.9 * step.err.powf(-0.2)).max(0.2);
        }
    };
    if !record {
        push(&mut samples, t, &y, f_val, gnorm, arc);
    }
    Ok((samples, reason))
}

/// Integrates the gradient flow from `x0`.
pub fn integrate_flow(field: &ScalarField, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
    integrate(field, x0, cfg, Direction::Descent)
}

pub fn integrate(
    field: &ScalarField,
    x0: &[f64],
    cfg: &IntegratorConfig,
    direction: Direction,
) -> Result<Trajectory> {
    let (samples, stop_reason) = run(field, x0, cfg, direction, true)?;
    Ok(Trajectory { field_id: field.id().to_string(), direction, samples, stop_reason })
}

/// State after flowing exactly `duration` from `x0`, ignoring stop criteria.
pub fn advance(
    field: &ScalarField,
    x0: &[f64],
    duration: f64,
    cfg: &IntegratorConfig,
    direction: Direction,
) -> Result<Vec<f64>> {
    if duration < 0.0 || !duration.is_finite() {
        return Err(input(format!("duration must be non-negative, got {duration}")));
    }
    if duration == 0.0 {
        field.check_point(x0)?;
        return Ok(x0.to_vec());
    }
    let run_cfg = IntegratorConfig {
        t_max: duration,
        max_step: cfg.max_step.min(duration),
        stop_grad_norm: 0.0,
        stop_value_delta: 0.0,
        ..*cfg
    };
    let (samples, _) = run(field, x0, &run_cfg, direction, false)?;
    Ok(samples.into_iter().last().map(|s| s.x).unwrap_or_else(|| x0.to_vec()))
}

/// Integrates many starts; output order matches `starts`.
pub fn integrate_many(
    field: &ScalarField,
    starts: &[Vec<f64>],
    cfg: &IntegratorConfig,
    exec: Execution,
) -> Vec<Result<Trajectory>> {
    par::map(exec, starts, |x0| integrate_flow(field, x0, cfg))
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn endpoint(&self) -> &[f64] {
        &self.last().x
    }

    pub fn t_end(&self) -> f64 {
        self.last().t
    }

    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::GradNormMet
    }

    fn index_at_or_before(&self, t: f64) -> usize {
        match self.samples.binary_search_by(|s| s.t.total_cmp(&t)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let (t0, t1) = (self.first().t, self.t_end());
        if !(t >= t0 && t <= t1) {
            return Err(input(format!("time {t} outside sampled range [{t0}, {t1}]")));
        }
        Ok(())
    }

    /// State at time `t`, re-integrated from the preceding sample.
    pub fn state_at(&self, field: &ScalarField, t: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let i = self.index_at_or_before(t);
        let s = &self.samples[i];
        advance(field, &s.x, t - s.t, cfg, self.direction)
    }

    /// `l(γ[t, T_end])`: arc length from `t` to the last sample, the
    /// numerical proxy for the length of the remaining infinite tail.
    pub fn tail_arc_length(&self, t: f64) -> Result<f64> {
        if self.stop_reason != StopReason::GradNormMet {
            return Err(input("tail length needs a trajectory that met the gradient threshold"));
        }
        self.check_time(t)?;
        let i = self.index_at_or_before(t);
        let s = &self.samples[i];
        let arc_t = match self.samples.get(i + 1) {
            Some(next) if t > s.t => {
                let w = (t - s.t) / (next.t - s.t);
                s.arc_length + w * (next.arc_length - s.arc_length)
            }
            _ => s.arc_length,
        };
        Ok((self.last().arc_length - arc_t).max(0.0))
    }

    pub fn summary(&self) -> TrajectorySummary {
        let first = self.first();
        let last = self.last();
        TrajectorySummary {
            field_id: self.field_id.clone(),
            direction: self.direction,
            stop_reason: self.stop_reason,
            sample_count: self.samples.len(),
            start: first.x.clone(),
            endpoint: last.x.clone(),
            t_end: last.t,
            f_start: first.f,
            f_end: last.f,
            grad_norm_end: last.grad_norm,
            arc_length: last.arc_length,
        }
    }

    /// CSV with columns `t,x_1..x_n,f,grad_norm,arc_length`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.samples.first().map_or(0, |s| s.x.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend(["f", "grad_norm", "arc_length"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            write!(w, "{}", s.t)?;
            for v in &s.x {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{},{},{}", s.f, s.grad_norm, s.arc_length)?;
        }
        Ok(())
    }
}

/// Largest violation of the dissipation identity `d/dt f(γ) = ∓|∇f(γ)|²`
/// between consecutive samples: the change in `f` over each step against
/// Simpson's rule for `∓|∇f|²`, with the midpoint from cubic-Hermite
/// interpolation. Each step's violation is divided by `max(1, |∇f|²)`, so
/// the residual is absolute on bounded flows and relative on flows that
/// run off to infinity.
pub fn dissipation_residual(field: &ScalarField, traj: &Trajectory) -> Result<f64> {
    if traj.samples.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: traj.samples.len() });
    }
    let sign = traj.direction.sign();
    let velocity = |x: &[f64]| -> Vec<f64> { field.gradient_at(x).iter().map(|g| sign * g).collect() };
    let mut worst: f64 = 0.0;
    let mut v_prev = velocity(&traj.samples[0].x);
    for pair in traj.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let h = b.t - a.t;
        let v_next = velocity(&b.x);
        let mid: Vec<f64> = (0..a.x.len())
            .map(|i| 0.5 * (a.x[i] + b.x[i]) + h / 8.0 * (v_prev[i] - v_next[i]))
            .collect();
        let g_mid = field.gradient_at(&mid);
        let rate = (b.f - a.f) / h;
        let expected = sign * (dot(&v_prev, &v_prev) + 4.0 * dot(&g_mid, &g_mid) + dot(&v_next, &v_next)) / 6.0;
        worst = worst.max((rate - expected).abs() / expected.abs().max(1.0));
        v_prev = v_next;
    }
    Ok(worst)
}

/// Sign changes of `g(γ(t))` between samples, refined by bisection on
/// re-integrated states until `|g| < 1e-10`. The reported rate is
/// `∇g · γ̇` with `∇g` from central differences.
pub fn event_crossings<G>(
    field: &ScalarField,
    traj: &Trajectory,
    g: G,
    cfg: &IntegratorConfig,
) -> Result<Vec<Crossing>>
where
    G: Fn(&[f64]) -> f64,
{
    const TARGET: f64 = 1e-10;
    let values: Vec<f64> = traj.samples.iter().map(|s| g(&s.x)).collect();
    let mut out = Vec::new();
    for i in 0..values.len() {
        let s = &traj.samples[i];
        if values[i] == 0.0 {
            out.push(crossing_at(field, traj.direction, &g, s.t, s.x.clone()));
            continue;
        }
        let Some(&next_val) = values.get(i + 1) else { break };
        if next_val == 0.0 || values[i].signum() == next_val.signum() {
            continue;
        }
        let h = traj.samples[i + 1].t - s.t;
        let (mut lo, mut hi) = (0.0, h);
        let lo_sign = values[i].signum();
        let mut best = (h, traj.samples[i + 1].x.clone(), next_val);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let x_mid = advance(field, &s.x, mid, cfg, traj.direction)?;
            let v = g(&x_mid);
            if v.abs() < best.2.abs() {
                best = (mid, x_mid.clone(), v);
            }
            if v.abs() < TARGET || v == 0.0 {
                break;
            }
            if v.signum() == lo_sign {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(crossing_at(field, traj.direction, &g, s.t + best.0, best.1));
    }
    Ok(out)
}

fn crossing_at<G: Fn(&[f64]) -> f64>(
    field: &ScalarField,
    direction: Direction,
    g: &G,
    t: f64,
    x: Vec<f64>,
) -> Crossing {
    let vel: Vec<f64> = field.gradient_at(&x).iter().map(|v| direction.sign() * v).collect();
    let mut probe = x.clone();
    let mut rate = 0.0;
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let gp = g(&probe);
        probe[i] = x[i] - h;
        let gm = g(&probe);
        probe[i] = x[i];
        rate += (gp - gm) / (2.0 * h) * vel[i];
    }
    Crossing { t, x, rate }
}

/// Gradient norm at a point, exposed for analyses that need it without
/// constructing a trajectory.
pub fn gradient_norm(field: &ScalarField, x: &[f64]) -> Result<f64> {
    field.check_point(x)?;
    Ok(grad_norm_of(field, x))
}
