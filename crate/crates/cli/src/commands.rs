//! Subcommand bodies. Each writes its artifacts through [`Outputs`] and
//! appends verdicts to the run report.

use std::f64::consts::FRAC_PI_2;

use anyhow::{anyhow, Context, Result};
use gradlab_core::critical::{
    find_connections, level_slice_samples, sweep_critical, write_critical_csv, ConnectionConfig, Region,
};
use gradlab_core::flow::{dissipation_residual, integrate_many};
use gradlab_core::loja::{
    check_distance_inequality, dense_limit_survey, estimate_lojasiewicz, minimum_z_exponent, normal_bias,
    secant_limit, tail_length_rate, z_set_crossings,
};
use gradlab_core::{integrate_flow, CriticalManifoldModel, Execution, IntegratorConfig, ScalarField, Trajectory};
use serde_json::json;

use crate::config::{
    Analysis, DistanceSection, LoadedConfig, ResolvedField, SurveySection, ZSetSection,
};
use crate::plot::{emit_plot_data, PlotStyle, Series};
use crate::report::{timed, Outputs, RunReport, Verdict};
use crate::starts::{near_manifold, offset_mesh, stream, uniform_ball, uniform_box};
use crate::{suite, UsageError};

pub struct Env<'a> {
    pub config: Option<&'a LoadedConfig>,
    pub seed: Option<u64>,
    pub exec: Execution,
}

impl Env<'_> {
    fn config(&self) -> Result<&LoadedConfig> {
        self.config.ok_or_else(|| UsageError::new("this subcommand needs --config").into())
    }

    fn field(&self) -> Result<ResolvedField> {
        Ok(self.config()?.resolve_field().map_err(UsageError::from)?)
    }

    fn integrator(&self) -> IntegratorConfig {
        self.config.map(|c| c.config.integrator.clone()).unwrap_or_default()
    }

    fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| UsageError::new("this run needs a seed (config `seed` or --seed)").into())
    }

    fn missing(&self, section: &str) -> anyhow::Error {
        let msg = format!("missing [{section}] section");
        match self.config {
            Some(c) => UsageError::from(c.error(msg)).into(),
            None => UsageError::new(msg).into(),
        }
    }
}

fn write_trajectory(out: &mut Outputs, name: &str, traj: &Trajectory) -> Result<()> {
    out.write(name, |w| traj.write_csv(w))?;
    Ok(())
}

fn write_json<T: serde::Serialize>(out: &mut Outputs, name: &str, value: &T) -> Result<()> {
    out.write(name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })?;
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------

pub fn flow(env: &Env, out: &mut Outputs, report: &mut RunReport) -> Result<()> {
    let cfg = env.config()?;
    let flow = cfg.config.flow.as_ref().ok_or_else(|| env.missing("flow"))?;
    let field = env.field()?;
    let n = field.field.dimension();
    let mut starts = flow.starts.clone();
    if let Some(r) = &flow.random {
        starts.extend(uniform_box(&mut stream(env.seed()?, "flow"), r.count, &r.lo, &r.hi));
    }
    if let Some(bad) = starts.iter().find(|s| s.len() != n) {
        return Err(UsageError::from(cfg.error_at(
            cfg.section_span("flow"),
            format!("start {bad:?} has {} coordinates, the field has {n}", bad.len()),
        ))
        .into());
    }
    let icfg = env.integrator();
    let runs = timed(&mut report.timings, "integrate", || integrate_many(&field.field, &starts, &icfg, env.exec));
    let mut summaries = Vec::new();
    let mut worst = 0.0f64;
    let mut monotone = true;
    for (i, run) in runs.into_iter().enumerate() {
        let traj = match run {
            Ok(t) => t,
            Err(e) => {
                report.errors.push(format!("start {i}: {e}"));
                continue;
            }
        };
        if flow.write_trajectories {
            write_trajectory(out, &format!("trajectory_{i:04}.csv"), &traj)?;
        }
        if traj.len() >= 2 {
            worst = worst.max(dissipation_residual(&field.field, &traj)?);
        }
        monotone &= traj.samples.windows(2).all(|w| w[1].f <= w[0].f + 1e-12 * w[0].f.abs().max(1.0));
        summaries.push((i, traj.summary()));
    }
    out.write("flow_summary.csv", |w| {
        writeln!(w, "start,x0,endpoint,t_end,f_start,f_end,grad_norm_end,arc_length,stop_reason,samples")?;
        for (i, s) in &summaries {
            writeln!(
                w,
                "{i},{},{},{},{},{},{},{},{:?},{}",
                join(&s.start),
                join(&s.endpoint),
                s.t_end,
                s.f_start,
                s.f_end,
                s.grad_norm_end,
                s.arc_length,
                s.stop_reason,
                s.sample_count
            )?;
        }
        Ok(())
    })?;
    write_json(out, "flow_summary.json", &summaries.iter().map(|(_, s)| s).collect::<Vec<_>>())?;
    let mut v = Verdict::new("F1", "dissipation identity", &["gradient-flow-equation"]);
    v.passed = worst < 1e-3 && monotone;
    v.measured = json!({ "max_residual": worst, "monotone": monotone, "trajectories": summaries.len() });
    v.threshold = "residual < 1e-3, f non-increasing".into();
    v.detail = format!("{} trajectories of {}, max residual {worst:.2e}", summaries.len(), field.label);
    report.verdicts.push(v);
    Ok(())
}

// ---------------------------------------------------------------------------

fn sweep(env: &Env, report: &mut RunReport, field: &ScalarField) -> Result<Vec<gradlab_core::CriticalPoint>> {
    let cfg = env.config()?;
    let sec = cfg.config.critical.as_ref().ok_or_else(|| env.missing("critical"))?;
    let region = Region::new(sec.lo.clone(), sec.hi.clone())?;
    Ok(timed(&mut report.timings, "sweep", || sweep_critical(field, &region, &sec.grid, sec.tol, env.exec))?)
}

pub fn critical(env: &Env, out: &mut Outputs, report: &mut RunReport) -> Result<()> {
    let field = env.field()?;
    let points = sweep(env, report, &field.field)?;
    out.write("critical_points.csv", |w| write_critical_csv(&points, w))?;
    write_json(out, "critical_points.json", &points)?;
    let tol = env.config()?.config.critical.as_ref().map_or(1e-12, |c| c.tol);
    let worst = points.iter().map(|p| p.grad_norm).fold(0.0, f64::max);
    let degenerate = points.iter().filter(|p| p.is_degenerate()).count();
    let mut v = Verdict::new("K1", "critical points located", &["nondegenerate-critical-point", "index-nullity"]);
    v.passed = !points.is_empty() && worst <= tol.max(1e-8);
    v.measured = json!({ "count": points.len(), "degenerate": degenerate, "max_grad_norm": worst });
    v.threshold = format!("at least one point, |grad f| <= {}", tol.max(1e-8));
    let classes: Vec<String> =
        points.iter().map(|p| format!("{}(index {}, nullity {})", p.class.as_str(), p.index, p.nullity)).collect();
    v.detail = format!("{} points: {}", points.len(), classes.join(", "));
    report.verdicts.push(v);
    Ok(())
}

// ---------------------------------------------------------------------------

pub fn connections(env: &Env, out: &mut Outputs, report: &mut RunReport) -> Result<()> {
    let cfg = env.config()?;
    let field = env.field()?;
    let sec = cfg.config.connections.clone().unwrap_or_default();
    let defaults = ConnectionConfig::default();
    let ccfg = ConnectionConfig {
        seed_eps: sec.seed_eps.unwrap_or(defaults.seed_eps),
        locate_tol: sec.locate_tol.unwrap_or(defaults.locate_tol),
        endpoint_grad_tol: sec.endpoint_grad_tol.unwrap_or(defaults.endpoint_grad_tol),
        sphere_samples: sec.sphere_samples.unwrap_or(defaults.sphere_samples),
    };
    let icfg = env.integrator();
    let points = sweep(env, report, &field.field)?;
    out.write("critical_points.csv", |w| write_critical_csv(&points, w))?;
    let rep = timed(&mut report.timings, "connections", || {
        find_connections(&field.field, &points, &ccfg, &icfg, env.exec)
    })?;
    let mut edges = Vec::new();
    for c in &rep.connections {
        let file = format!("branches/branch_{:03}_{:03}.csv", c.source_id, c.branch_id);
        write_trajectory(out, &file, &c.representative)?;
        edges.push(json!({
            "source": c.source_id, "target": c.target_id, "branch": c.branch_id,
            "expected_dimension": c.expected_dimension, "trajectory": file,
        }));
    }
    write_json(
        out,
        "connections.json",
        &json!({ "nodes": points, "edges": edges, "unresolved": rep.unresolved, "dimensions": rep.dimensions }),
    )?;
    out.write("connections.csv", |w| {
        writeln!(w, "source,target,branch,source_index,target_index,expected_dimension,endpoint")?;
        for c in &rep.connections {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                c.source_id,
                c.target_id,
                c.branch_id,
                c.source.index,
                c.target.index,
                c.expected_dimension,
                join(c.representative.endpoint())
            )?;
        }
        Ok(())
    })?;
    out.write("dimensions.csv", |w| {
        writeln!(w, "source,target,unstable_dim,stable_dim,ambient_dim,expected_dimension,branches")?;
        for d in &rep.dimensions {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                d.source_id, d.target_id, d.unstable_dim, d.stable_dim, d.ambient_dim, d.expected_dimension, d.branch_count
            )?;
        }
        Ok(())
    })?;
    out.write("unresolved.csv", |w| {
        writeln!(w, "source,branch,endpoint,reason")?;
        for u in &rep.unresolved {
            writeln!(w, "{},{},{},\"{}\"", u.source_id, u.branch_id, join(&u.endpoint), u.reason.replace('"', "'"))?;
        }
        Ok(())
    })?;

    let mut slices = Vec::new();
    let mut single = true;
    for (sid, target) in rep.dimensions.iter().map(|d| (d.source_id, d.target_id)) {
        let group: Vec<_> =
            rep.connections.iter().filter(|c| c.source_id == sid && c.target_id == target).cloned().collect();
        let (hi, lo) = (points[sid].value, points[target].value);
        for frac in &sec.level_fractions {
            let level = lo + frac * (hi - lo);
            for s in level_slice_samples(&field.field, &group, level, &icfg)? {
                single &= s.crossings == 1;
                slices.push((sid, target, level, s));
            }
        }
    }
    out.write("level_slices.csv", |w| {
        writeln!(w, "source,target,branch,level,crossings,t,x,value")?;
        for (sid, tid, level, s) in &slices {
            writeln!(w, "{sid},{tid},{},{level},{},{},{},{}", s.branch_id, s.crossings, s.t, join(&s.x), s.value)?;
        }
        Ok(())
    })?;
    let transversal = rep.connections.iter().all(|c| c.expected_dimension >= 1);
    let mut v = Verdict::new(
        "N1",
        "connections transversal",
        &["morse-smale-transversality", "connection-dimension"],
    );
    v.passed = transversal && single;
    v.measured = json!({
        "connections": rep.connections.len(), "unresolved": rep.unresolved.len(),
        "slices": slices.len(), "single_crossings": single,
    });
    v.threshold = "index drops along every connection; each regular level crossed once".into();
    v.detail = format!(
        "{} connections, {} unresolved branches, {} level slices",
        rep.connections.len(),
        rep.unresolved.len(),
        slices.len()
    );
    report.verdicts.push(v);
    Ok(())
}

// ---------------------------------------------------------------------------

pub fn loja(env: &Env, out: &mut Outputs, report: &mut RunReport) -> Result<()> {
    let cfg = env.config()?;
    let sec = cfg.config.loja.as_ref().ok_or_else(|| env.missing("loja"))?;
    let field = env.field()?;
    let f = &field.field;
    let n = f.dimension();
    let icfg = env.integrator();
    let manifold: Option<CriticalManifoldModel> =
        sec.manifold.clone().or_else(|| field.facts.as_ref().and_then(|fa| fa.critical_manifold.clone()));
    let need_manifold = |what: &str| -> Result<&CriticalManifoldModel> {
        manifold.as_ref().ok_or_else(|| {
            UsageError::from(cfg.error_at(
                cfg.section_span("loja"),
                format!("the {what} analysis needs `manifold` for this field"),
            ))
            .into()
        })
    };
    let start = sec.start.clone().unwrap_or_else(|| vec![1.0; n]);
    if start.len() != n {
        return Err(UsageError::from(cfg.error_at(cfg.section_span("loja"), "`start` has the wrong dimension")).into());
    }
    let traj = timed(&mut report.timings, "integrate", || integrate_flow(f, &start, &icfg))?;
    write_trajectory(out, "loja_trajectory.csv", &traj)?;
    let p = match (&sec.limit, &manifold) {
        (Some(p), _) => p.clone(),
        (None, Some(m)) => m.project(traj.endpoint()),
        (None, None) => traj.endpoint().to_vec(),
    };
    let f_p = match sec.critical_value {
        Some(v) => v,
        None => f.eval(&p)?,
    };

    // θ̂ feeds the Z-set exponent, so estimate it whenever either is asked for.
    let want = |a: Analysis| sec.analyses.contains(&a);
    let theta = if want(Analysis::Exponent) || want(Analysis::ZSet) {
        Some(estimate_lojasiewicz(f, &traj, &p, f_p)?)
    } else {
        None
    };

    let mut reports = serde_json::Map::new();
    reports.insert("limit".into(), json!({ "p": p, "f_p": f_p, "stop_reason": traj.summary().stop_reason }));
    for analysis in &sec.analyses {
        let stage = format!("{analysis:?}").to_lowercase();
        let started = std::time::Instant::now();
        let result = match analysis {
            Analysis::Exponent => {
                let rep = theta.as_ref().expect("estimated above");
                reports.insert("exponent".into(), serde_json::to_value(rep)?);
                let pts: Vec<(f64, f64)> = rep.series.iter().map(|&(a, b)| (a.exp(), b.exp())).collect();
                let style = PlotStyle::new(&format!("Lojasiewicz fit, {}", field.label), "f - f(p)", "|grad f|")
                    .log_log()
                    .scatter()
                    .with_power_law(rep.fit.exponent, rep.fit.log_constant);
                emit_plot_data(out, "loja_exponent", &[Series { label: "tail".into(), points: pts }], &style)?;
                let mut v = Verdict::new("L1", "Lojasiewicz exponent", &["lojasiewicz-inequality"]);
                v.passed = rep.exponent_in_range && rep.bound_holds;
                v.measured = json!({ "theta": rep.fit.exponent, "log_c": rep.fit.log_constant, "residual": rep.fit.residual, "min_bound_ratio": rep.min_bound_ratio });
                v.threshold = "theta in [0.45, 1); |grad f| >= 0.5 C |f - f(p)|^theta on the tail".into();
                v.detail = format!("theta = {:.4} over {} samples", rep.fit.exponent, rep.fit.sample_count);
                Ok::<Verdict, anyhow::Error>(v)
            }
            Analysis::Rate => (|| {
                let rep = tail_length_rate(f, &traj, &p, f_p)?;
                reports.insert("rate".into(), serde_json::to_value(&rep)?);
                let pts: Vec<(f64, f64)> = rep.series.iter().map(|&(a, b)| (a.exp(), b.exp())).collect();
                let style = PlotStyle::new("Tail length against value gap", "f - f(p)", "tail length")
                    .log_log()
                    .scatter()
                    .with_power_law(rep.fit.exponent, rep.fit.log_constant);
                emit_plot_data(out, "loja_rate", &[Series { label: "tail".into(), points: pts }], &style)?;
                let mut v = Verdict::new("L2", "tail-length rate", &["convergence-rate"]);
                v.passed = rep.exponent_in_range;
                v.measured = json!({ "beta": rep.fit.exponent, "log_c": rep.fit.log_constant });
                v.threshold = "beta in (0, 0.55]".into();
                v.detail = format!("beta = {:.4}", rep.fit.exponent);
                Ok(v)
            })(),
            Analysis::Bias => (|| {
                let m = need_manifold("bias")?;
                let rep = normal_bias(f, &traj, m, &p)?;
                reports.insert("bias".into(), serde_json::to_value(&rep)?);
                let style = PlotStyle::new("Normal bias ratio", "t", "|P(x-p)| / |Q(x-p)|^2").with_median_band();
                emit_plot_data(out, "loja_bias", &[Series { label: "ratio".into(), points: rep.ratio_series.clone() }], &style)?;
                let mut v = Verdict::new("L3", "normal bias", &["normal-bias"]);
                v.passed = rep.passed;
                v.measured = json!({ "tail_sup": rep.tail_sup, "tail_median": rep.tail_median });
                v.threshold = "tail sup <= 2 x tail median".into();
                v.detail = format!("tail sup {:.4e}, median {:.4e}", rep.tail_sup, rep.tail_median);
                Ok(v)
            })(),
            Analysis::Secant => (|| {
                let m = need_manifold("secant")?;
                let rep = secant_limit(f, &traj, m, &p)?;
                reports.insert("secant".into(), serde_json::to_value(&rep)?);
                out.write("loja_secants.csv", |w| {
                    writeln!(w, "t,direction")?;
                    for (t, d) in &rep.direction_series {
                        writeln!(w, "{t},{}", join(d))?;
                    }
                    Ok(())
                })?;
                let mut v = Verdict::new("L4", "secant limit", &["secant-limit"]);
                v.passed = rep.max_pairwise_angle < 1e-3 && (rep.tangent_angle - FRAC_PI_2).abs() < 1e-2;
                v.measured = json!({ "limit": rep.limit_estimate, "tangent_angle": rep.tangent_angle, "max_pairwise_angle": rep.max_pairwise_angle });
                v.threshold = "pairwise angle < 1e-3, normal within 1e-2 rad".into();
                v.detail = format!("limit {:?}, angle to tangent {:.5}", rep.limit_estimate, rep.tangent_angle);
                Ok(v)
            })(),
            Analysis::ZSet => (|| {
                let zs = ZSetSection::or_default(&sec.z_set);
                let th = theta.as_ref().expect("estimated above").fit.exponent;
                let k = match zs.k {
                    Some(k) => k,
                    None => minimum_z_exponent(th)?,
                };
                let starts = uniform_ball(&mut stream(env.seed()?, "loja/z_set"), zs.count, &p, zs.radius);
                let mut crossings = Vec::new();
                let mut zreports = Vec::new();
                let mut passed = true;
                for (i, run) in integrate_many(f, &starts, &icfg, env.exec).into_iter().enumerate() {
                    let rep = z_set_crossings(f, &run?, &p, f_p, k, th, &icfg)?;
                    zreports.push(serde_json::to_value(&rep)?);
                    passed &= rep.passed;
                    crossings.extend(rep.crossings.into_iter().map(|c| (i, c)));
                }
                reports.insert("z_set".into(), serde_json::Value::Array(zreports));
                out.write("loja_zset.csv", |w| {
                    writeln!(w, "start,t,x,tau_rate")?;
                    for (i, c) in &crossings {
                        writeln!(w, "{i},{},{},{}", c.t, join(&c.x), c.tau_rate)?;
                    }
                    Ok(())
                })?;
                let mut v = Verdict::new("L5", "Z-set crossings", &["z-set-transversality"]);
                v.passed = passed;
                v.measured = json!({ "k": k, "theta": th, "crossings": crossings.len(), "starts": starts.len() });
                v.threshold = "<= 1 crossing per trajectory, tau' < 0".into();
                v.detail = format!("k = {k}, {} crossings over {} starts", crossings.len(), starts.len());
                Ok(v)
            })(),
            Analysis::Distance => (|| {
                let m = need_manifold("distance")?;
                let ds = DistanceSection::or_default(&sec.distance);
                let samples = near_manifold(&mut stream(env.seed()?, "loja/distance"), m, ds.count, ds.radius);
                let rep = check_distance_inequality(f, m, &samples, &ds.radii)?;
                reports.insert("distance".into(), serde_json::to_value(&rep)?);
                let pts: Vec<(f64, f64)> = rep.series.iter().map(|&(a, b)| (a.exp(), b.exp())).collect();
                let style = PlotStyle::new("Value gap against distance", "dist(x, N)", "f - f(N)")
                    .log_log()
                    .scatter()
                    .with_power_law(rep.fit.exponent, rep.fit.log_constant);
                emit_plot_data(out, "loja_distance", &[Series { label: "samples".into(), points: pts }], &style)?;
                let mut v = Verdict::new("L6", "distance inequality", &["distance-inequality"]);
                v.passed = rep.passed;
                v.measured = json!({ "alpha": rep.fit.exponent, "bound_constant": rep.bound_constant, "violations": rep.violations, "by_radius": rep.exponents_by_radius });
                v.threshold = "f - f(N) >= C dist^alpha on every sample within the largest radius".into();
                v.detail = format!("alpha = {:.4} at radius {}, {} violations", rep.fit.exponent, rep.fit_radius, rep.violations);
                Ok(v)
            })(),
            Analysis::Survey => (|| {
                let m = need_manifold("survey")?;
                let ss = SurveySection::or_default(&sec.survey);
                let starts = offset_mesh(m, ss.count, ss.extent, ss.offset);
                let mesh = m.mesh(ss.mesh, ss.extent);
                let rep = dense_limit_survey(f, m, &starts, &mesh, &icfg, env.exec)?;
                reports.insert("survey".into(), serde_json::to_value(&rep)?);
                out.write("loja_survey.csv", |w| {
                    writeln!(w, "start,x0,limit,distance,arc_length")?;
                    for (i, (x0, lim)) in starts.iter().zip(&rep.limits).enumerate() {
                        let lim = lim.as_deref().map(join).unwrap_or_default();
                        let (d, l) = rep.lengths.get(i).copied().unwrap_or((f64::NAN, f64::NAN));
                        writeln!(w, "{i},{},{lim},{d},{l}", join(x0))?;
                    }
                    Ok(())
                })?;
                let mut v = Verdict::new("L7", "dense limit survey", &["dense-limit-set", "limit-length-hypothesis"]);
                let violations = rep.length_bound.as_ref().map_or(0, |b| b.violations);
                v.passed = rep.non_convergent.is_empty() && violations == 0;
                v.measured = json!({ "max_gap": rep.max_gap, "angular_gap": rep.angular_gap, "non_convergent": rep.non_convergent.len(), "length_violations": violations });
                v.threshold = "every start converges; no length-bound violation".into();
                v.detail = format!("max gap {:.4e}, {} non-convergent", rep.max_gap, rep.non_convergent.len());
                Ok(v)
            })(),
        };
        report.timings.push(crate::report::Timing { stage, seconds: started.elapsed().as_secs_f64() });
        match result {
            Ok(v) => report.verdicts.push(v),
            Err(e) if e.is::<UsageError>() => return Err(e),
            Err(e) => report.errors.push(format!("{analysis:?}: {e:#}")),
        }
    }
    write_json(out, "loja_reports.json", &reports)?;
    Ok(())
}

// ---------------------------------------------------------------------------

pub fn verify(env: &Env, out: &mut Outputs, report: &mut RunReport) -> Result<()> {
    let only = env.config.and_then(|c| c.config.verify.as_ref()).map(|v| v.only.clone()).unwrap_or_default();
    let seed = env.seed.unwrap_or(crate::DEFAULT_SEED);
    report.seed = Some(seed);
    let verdicts = timed(&mut report.timings, "suite", || suite::run_suite(seed, env.exec, out, &only))
        .context("running the verification suite")?;
    report.verdicts.extend(verdicts);
    if report.verdicts.is_empty() {
        return Err(anyhow!("no criteria selected"));
    }
    Ok(())
}
