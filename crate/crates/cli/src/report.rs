//! Run reports and artifact bookkeeping.
//!
//! `report.json` schema:
//!
//! | key          | type                                                     |
//! |--------------|----------------------------------------------------------|
//! | `tool`       | `"gradlab"`                                              |
//! | `version`    | crate version                                            |
//! | `subcommand` | `flow`, `critical`, `connections`, `loja` or `verify`    |
//! | `seed`       | integer or null                                          |
//! | `passed`     | true when every verdict passed and no errors occurred   |
//! | `verdicts`   | `[{id, name, tags, passed, measured, threshold, detail, seconds}]` |
//! | `artifacts`  | `[{path, kind, bytes}]`, paths relative to the report    |
//! | `timings`    | `[{stage, seconds}]`                                     |
//! | `errors`     | runtime failures, as strings                             |
//! | `config`     | the effective config, as TOML text                       |

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub name: String,
    /// Theorem or invariant tags exercised by this check.
    pub tags: Vec<String>,
    pub passed: bool,
    pub measured: serde_json::Value,
    pub threshold: String,
    pub detail: String,
    pub seconds: f64,
}

impl Verdict {
    pub fn new(id: &str, name: &str, tags: &[&str]) -> Verdict {
        Verdict {
            id: id.into(),
            name: name.into(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            passed: true,
            measured: serde_json::Value::Null,
            threshold: String::new(),
            detail: String::new(),
            seconds: 0.0,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{:<4} {} {}: {} (threshold: {})",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub kind: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: Option<u64>,
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
    pub artifacts: Vec<Artifact>,
    pub timings: Vec<Timing>,
    pub errors: Vec<String>,
    pub config: String,
}

impl RunReport {
    pub fn new(subcommand: &str, seed: Option<u64>, config: String) -> RunReport {
        RunReport {
            tool: "gradlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            seed,
            passed: true,
            verdicts: Vec::new(),
            artifacts: Vec::new(),
            timings: Vec::new(),
            errors: Vec::new(),
            config,
        }
    }

    pub fn finish(&mut self) {
        self.passed = self.errors.is_empty() && self.verdicts.iter().all(|v| v.passed);
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.passed)
    }
}

/// Writes files under one output directory and records each in the
/// manifest.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    pub artifacts: Vec<Artifact>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Outputs> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Outputs { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Creates `name`, hands a buffered writer to `body`, then records it.
    pub fn write<F>(&mut self, name: &str, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> io::Result<()>,
    {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = io::BufWriter::new(file);
        body(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
        drop(w);
        self.record(name)?;
        Ok(path)
    }

    pub fn write_str(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        self.write(name, |w| w.write_all(text.as_bytes()))
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let bytes = fs::metadata(self.path(name))?.len();
        let kind = Path::new(name).extension().and_then(|e| e.to_str()).unwrap_or("").to_string();
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact { path: name.to_string(), kind, bytes });
        Ok(())
    }

    /// Serializes `report` (with this manifest) as `report.json`.
    pub fn write_report(&mut self, report: &mut RunReport) -> Result<PathBuf> {
        report.artifacts = self.artifacts.clone();
        report.finish();
        let path = self.path(REPORT_FILE);
        let text = serde_json::to_string_pretty(report)?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Runs `body` and appends its wall-clock time to `timings`.
pub fn timed<T>(timings: &mut Vec<Timing>, stage: &str, body: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = body();
    timings.push(Timing { stage: stage.into(), seconds: start.elapsed().as_secs_f64() });
    out
}

/// Manifest entries whose files are missing or changed size.
pub fn check_manifest(dir: &Path, report: &RunReport) -> Vec<String> {
    report
        .artifacts
        .iter()
        .filter_map(|a| match fs::metadata(dir.join(&a.path)) {
            Ok(m) if m.len() == a.bytes => None,
            Ok(m) => Some(format!("{} has {} bytes, manifest says {}", a.path, m.len(), a.bytes)),
            Err(_) => Some(format!("{} is missing", a.path)),
        })
        .collect()
}

/// Markdown table of verdicts.
pub fn summary_markdown(report: &RunReport) -> String {
    let mut s = format!(
        "# gradlab {} report\n\nOverall: **{}**\n\n",
        report.subcommand,
        if report.passed { "PASS" } else { "FAIL" }
    );
    if !report.verdicts.is_empty() {
        s.push_str("| id | check | result | measured | threshold | tags |\n|---|---|---|---|---|---|\n");
        for v in &report.verdicts {
            s.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                v.id,
                v.name,
                if v.passed { "pass" } else { "FAIL" },
                v.detail.replace('|', "\\|"),
                v.threshold.replace('|', "\\|"),
                v.tags.join(", ")
            ));
        }
    }
    if !report.errors.is_empty() {
        s.push_str("\n## Errors\n\n");
        for e in &report.errors {
            s.push_str(&format!("- {e}\n"));
        }
    }
    s.push_str(&format!("\n{} artifacts.\n", report.artifacts.len()));
    s
}
