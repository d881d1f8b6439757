//! `gradlab`: config-driven runner for the gradient-flow laboratory.
//!
//! Exit codes: 0 when every verdict passes, 1 on a failed verdict or a
//! runtime error, 2 on a configuration or usage problem.

pub mod commands;
pub mod config;
pub mod plot;
pub mod report;
pub mod starts;
pub mod suite;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Parser, Subcommand};
use gradlab_core::Execution;

use crate::commands::Env;
use crate::config::{ConfigError, LoadedConfig};
use crate::report::{check_manifest, summary_markdown, Outputs, RunReport, REPORT_FILE};

pub const DEFAULT_SEED: u64 = 20_240_101;
pub const DEFAULT_OUT: &str = "gradlab-out";

/// A problem with the invocation or its inputs (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        UsageError(msg.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

impl From<ConfigError> for UsageError {
    fn from(e: ConfigError) -> Self {
        UsageError(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "gradlab", version, about = "Numerical experiments on negative-gradient flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config and GRADLAB_OUT.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Seed for every random draw; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate trajectories from the [flow] starts.
    Flow(Common),
    /// Locate and classify critical points in the [critical] box.
    Critical(Common),
    /// Trace unstable manifolds between the located critical points.
    Connections(Common),
    /// Run the [loja] analyses near a limit point or critical manifold.
    Loja(Common),
    /// Run the acceptance suite.
    Verify(Common),
    /// Re-check a finished run's report and manifest.
    Report(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Flow(c) => ("flow", c),
            Command::Critical(c) => ("critical", c),
            Command::Connections(c) => ("connections", c),
            Command::Loja(c) => ("loja", c),
            Command::Verify(c) => ("verify", c),
            Command::Report(c) => ("report", c),
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() || e.is::<ConfigError>() {
                2
            } else {
                1
            }
        }
    }
}

fn output_dir(common: &Common, config: Option<&LoadedConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| config.and_then(|c| c.config.output_dir.clone()))
        .or_else(|| std::env::var_os("GRADLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn run(command: &Command) -> Result<i32> {
    let (name, common) = command.parts();
    let config = match &common.config {
        Some(p) => Some(config::load(p).map_err(UsageError::from)?),
        None => None,
    };
    let dir = output_dir(common, config.as_ref());
    if name == "report" {
        return rereport(&dir);
    }
    if common.workers == Some(0) {
        return Err(UsageError::new("--workers must be at least 1").into());
    }
    let workers = common.workers.or_else(|| config.as_ref().and_then(|c| c.config.workers));
    let seed = common.seed.or_else(|| config.as_ref().and_then(|c| c.config.seed));
    let exec = match workers {
        Some(1) => Execution::Sequential,
        _ => Execution::default(),
    };
    let env = Env { config: config.as_ref(), seed, exec };
    let echo = config.as_ref().map(|c| c.config.to_toml()).unwrap_or_default();

    let mut out = Outputs::create(&dir)?;
    let mut report = RunReport::new(name, seed, echo);
    let body = || -> Result<()> {
        match command {
            Command::Flow(_) => commands::flow(&env, &mut out, &mut report),
            Command::Critical(_) => commands::critical(&env, &mut out, &mut report),
            Command::Connections(_) => commands::connections(&env, &mut out, &mut report),
            Command::Loja(_) => commands::loja(&env, &mut out, &mut report),
            Command::Verify(_) => commands::verify(&env, &mut out, &mut report),
            Command::Report(_) => unreachable!(),
        }
    };
    let result = with_workers(workers, body)?;
    if let Err(e) = result {
        if e.is::<UsageError>() || e.is::<ConfigError>() {
            return Err(e);
        }
        report.errors.push(format!("{e:#}"));
    }
    out.write_report(&mut report)?;
    let summary = summary_markdown(&report);
    fs::write(out.path("summary.md"), summary)?;
    print_report(&report, out.dir());
    Ok(if report.passed { 0 } else { 1 })
}

#[cfg(feature = "parallel")]
fn with_workers<T: Send>(workers: Option<usize>, body: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) if n > 1 => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| anyhow::anyhow!("building worker pool: {e}"))?;
            Ok(pool.install(body))
        }
        _ => Ok(body()),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_workers<T>(_workers: Option<usize>, body: impl FnOnce() -> T) -> Result<T> {
    Ok(body())
}

fn print_report(report: &RunReport, dir: &Path) {
    for v in &report.verdicts {
        println!("{}", v.line());
    }
    for e in &report.errors {
        println!("ERROR {e}");
    }
    println!(
        "{}: {} ({} artifacts in {})",
        report.subcommand,
        if report.passed { "PASS" } else { "FAIL" },
        report.artifacts.len(),
        dir.display()
    );
}

fn rereport(dir: &Path) -> Result<i32> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| UsageError::new(format!("cannot read {}: {e}", path.display())))?;
    let mut report: RunReport = serde_json::from_str(&text)
        .map_err(|e| UsageError::new(format!("{}: malformed report: {e}", path.display())))?;
    let mut problems = check_manifest(dir, &report);
    if !report.config.is_empty() {
        if let Err(e) = config::parse_config(Path::new("<config echo>"), &report.config) {
            problems.push(format!("config echo no longer validates: {e}"));
        }
    }
    report.errors.extend(problems.iter().cloned());
    report.finish();
    fs::write(dir.join("summary.md"), summary_markdown(&report))?;
    print_report(&report, dir);
    Ok(if report.passed { 0 } else { 1 })
}
