//! Acceptance suite: every criterion at its pinned tolerance, one line per
//! criterion. Run with `cargo test -p gradlab --test acceptance -- --nocapture`
//! to see the lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use gradlab::report::{Outputs, RunReport, REPORT_FILE};
use gradlab::suite::{criteria, run_suite, THEOREM_TAGS};
use gradlab::DEFAULT_SEED;
use gradlab_core::Execution;

#[test]
fn all_criteria_pass() {
    let dir = tempfile::tempdir().unwrap();
    let mut out = Outputs::create(dir.path()).unwrap();
    let verdicts = run_suite(DEFAULT_SEED, Execution::default(), &mut out, &[]).unwrap();

    println!("acceptance (seed {DEFAULT_SEED}):");
    for v in &verdicts {
        println!("  {}", v.line());
    }
    let ids: Vec<&str> = verdicts.iter().map(|v| v.id.as_str()).collect();
    for c in criteria() {
        assert!(ids.contains(&c.id), "{} produced no verdict", c.id);
    }
    assert!(ids.contains(&"COV"));
    let failed: Vec<&str> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id.as_str()).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
    assert!(THEOREM_TAGS.len() >= 25);
}

#[test]
fn subset_selection_runs_only_requested() {
    let dir = tempfile::tempdir().unwrap();
    let mut out = Outputs::create(dir.path()).unwrap();
    let only = vec!["C2".to_string(), "C4".to_string()];
    let verdicts = run_suite(DEFAULT_SEED, Execution::Sequential, &mut out, &only).unwrap();
    let ids: Vec<&str> = verdicts.iter().map(|v| v.id.as_str()).collect();
    assert_eq!(ids, ["C2", "C4"]);
    assert!(verdicts.iter().all(|v| v.passed));
}

fn csv_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let report: RunReport = serde_json::from_str(&fs::read_to_string(dir.join(REPORT_FILE)).unwrap()).unwrap();
    report
        .artifacts
        .iter()
        .filter(|a| a.kind == "csv")
        .map(|a| (a.path.clone(), fs::read(dir.join(&a.path)).unwrap()))
        .collect()
}

#[test]
fn verify_twice_gives_identical_csv() {
    let exe = env!("CARGO_BIN_EXE_gradlab");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path, workers: &str| {
        let status = Command::new(exe)
            .args(["verify", "--workers", workers, "--out"])
            .arg(dir)
            .output()
            .unwrap();
        assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stdout));
    };
    run(a.path(), "1");
    run(b.path(), "2");
    let (x, y) = (csv_bytes(a.path()), csv_bytes(b.path()));
    assert!(x.len() >= 14, "only {} CSV files", x.len());
    assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>());
    for (name, bytes) in &x {
        assert!(bytes == &y[name], "{name} differs between runs");
    }
    assert!(a.path().join("summary.md").exists());
    assert!(a.path().join("c08_lojasiewicz_x4.svg").exists());
}
