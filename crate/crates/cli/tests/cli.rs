use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gradlab(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gradlab"));
    cmd.args(args).arg("--out").arg(out).env_remove("GRADLAB_OUT");
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_catalog_id_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n\n[field]\ncatalog = \"not_a_field\"\n\n[flow]\nstarts = [[1.0]]\n");
    let o = gradlab(&["flow"], Some(&cfg), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("not_a_field"), "{err}");
    assert!(err.contains("exp.toml:4:11"), "{err}");
}

#[test]
fn bad_expression_points_inside_the_string() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[field]\nexpression = \"x^2 + * y\"\nvariables = [\"x\", \"y\"]\n\n[flow]\nstarts = [[1.0, 1.0]]\n",
    );
    let o = gradlab(&["flow"], Some(&cfg), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("exp.toml:2:"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[field]\ncatalog = \"bowl\"\n\n[integrator]\nrel_tol = 1e-9\nstep = 3\n");
    let o = gradlab(&["flow"], Some(&cfg), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("step"), "{}", stderr(&o));
}

#[test]
fn flow_on_x4y2_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[field]\ncatalog = \"x4y2\"\n\n[integrator]\nt_max = 5.0\n\n[flow]\nstarts = [[1.0, 1.0, 0.0]]\n",
    );
    let out = dir.path().join("out");
    let o = gradlab(&["flow"], Some(&cfg), &out);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let mut rdr = csv::Reader::from_path(out.join("trajectory_0000.csv")).unwrap();
    assert_eq!(&rdr.headers().unwrap()[1], "x_1");
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let t: f64 = rec[0].parse().unwrap();
        let x: f64 = rec[1].parse().unwrap();
        assert!((x - (1.0 + 8.0 * t).powf(-0.5)).abs() < 1e-6, "t={t}: {x}");
        rows += 1;
    }
    assert!(rows > 10);
    assert!(out.join("report.json").exists() && out.join("summary.md").exists());
}

#[test]
fn report_rechecks_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[field]\ncatalog = \"bowl\"\n\n[flow]\nstarts = [[0.5, -0.3]]\n");
    let out = dir.path().join("out");
    assert_eq!(gradlab(&["flow"], Some(&cfg), &out).status.code(), Some(0));
    assert_eq!(gradlab(&["report"], None, &out).status.code(), Some(0));
    fs::write(out.join("flow_summary.csv"), "tampered").unwrap();
    let o = gradlab(&["report"], None, &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("flow_summary.csv"), "{}", stdout(&o));
}

#[test]
fn critical_and_connections_on_torus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[field]\ncatalog = \"torus_height\"\n\n[critical]\nlo = [0.0, 0.0]\nhi = [6.283185307179586, 6.283185307179586]\ngrid = [12, 12]\n",
    );
    let out = dir.path().join("out");
    let o = gradlab(&["critical"], Some(&cfg), &out);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let rows = csv::Reader::from_path(out.join("critical_points.csv")).unwrap().records().count();
    assert_eq!(rows, 4);
    let o = gradlab(&["connections"], Some(&cfg), &out);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(out.join("level_slices.csv").exists());
}

#[test]
fn loja_runs_requested_analyses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 3\n\n[field]\ncatalog = \"warped_trough\"\n\n[loja]\nstart = [0.5, 0.5]\nanalyses = [\"exponent\", \"rate\", \"bias\", \"secant\", \"distance\", \"survey\"]\n\n[loja.survey]\ncount = 41\nmesh = 100\n",
    );
    let out = dir.path().join("out");
    let o = gradlab(&["loja"], Some(&cfg), &out);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    for id in ["L1", "L2", "L3", "L4", "L6", "L7"] {
        assert!(stdout(&o).contains(&format!("{id:<4} PASS")), "{id}: {}", stdout(&o));
    }
    assert!(out.join("loja_bias.svg").exists());
}

#[test]
fn random_starts_without_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[field]\ncatalog = \"bowl\"\n\n[flow.random]\ncount = 4\nlo = [-1.0, -1.0]\nhi = [1.0, 1.0]\n",
    );
    let o = gradlab(&["flow"], Some(&cfg), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[field]\ncatalog = \"bowl\"\n\n[flow]\nstarts = [[0.5, -0.3]]\n");
    let target = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_gradlab"))
        .args(["flow", "--config"])
        .arg(&cfg)
        .env("GRADLAB_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("report.json").exists());
}

#[test]
fn shipped_configs_run() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let cases = [
        ("x4y2_flow.toml", "flow"),
        ("torus_connections.toml", "connections"),
        ("warped_loja.toml", "loja"),
        ("even_power_zset.toml", "loja"),
    ];
    for (file, sub) in cases {
        let dir = tempfile::tempdir().unwrap();
        let o = gradlab(&[sub], Some(&root.join(file)), dir.path());
        assert_eq!(o.status.code(), Some(0), "{file}: {}{}", stdout(&o), stderr(&o));
        assert!(dir.path().join("report.json").exists());
    }
}
