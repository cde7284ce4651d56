use std::path::Path;
use std::process::Command;

use nodal_core::experiment::{self, ExperimentConfig, Summary, POINT_FILE};

const TINY: &str = r#"
mode = "sync"
mu1 = 1.0
mu2 = 1.0
beta = 0.5
k = 1
eps_list = [0.2]

[p]
a = 1.0
m = 2.0

[q]
b = 0.0
n = 3.0

[grid]
landscape_samples = 5

[solver]
enabled = false
"#;

fn nodal() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nodal"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_reports_condition_and_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write_config(tmp.path(), TINY);
    let out = nodal().args(["validate", "--config"]).arg(&good).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");

    let bad = write_config(tmp.path(), &TINY.replace("a = 1.0", "a = -1.0"));
    let out = nodal().args(["validate", "--config"]).arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("condition (1)"));
}

#[test]
fn run_refuses_invalid_config() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), &TINY.replace("a = 1.0", "a = -1.0"));
    let out = nodal().args(["run", "--config"]).arg(&bad).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("condition (1)"));
}

#[test]
fn run_then_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out_dir = tmp.path().join("out");
    let out =
        nodal().args(["run", "--workers", "1", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let point = out_dir.join("sync_eps0.2");
    for name in ["landscape.csv", "point.json", "profile_w.txt"] {
        assert!(point.join(name).exists(), "{name}");
    }
    let summary: Summary =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let p = &summary.points[0];
    assert!(p.errors.is_empty(), "{:?}", p.errors);
    assert!(p.model_interior.unwrap());
    assert!(p.newton_converged.is_none());

    let out = nodal().args(["plot-data", "--out"]).arg(&out_dir).output().unwrap();
    assert!(out.status.success());
    let landscapes = std::fs::read_to_string(out_dir.join("plot/landscapes.csv")).unwrap();
    assert_eq!(landscapes.lines().count(), 1 + 5);
    assert!(landscapes.starts_with("mode,eps,r,measured,model\n"));
}

#[test]
fn resume_reuses_finished_points() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(TINY).unwrap();
    let first = experiment::run(&cfg, tmp.path(), 1, false).unwrap();
    // a marker in the stored point proves it was read back rather than recomputed
    let path = experiment::point_dir(tmp.path(), cfg.mode, 0.2).join(POINT_FILE);
    let text = std::fs::read_to_string(&path).unwrap().replace("\"resumed\": false", "\"resumed\": true");
    std::fs::write(&path, text).unwrap();
    let second = experiment::run(&cfg, tmp.path(), 1, true).unwrap();
    assert!(second.points[0].resumed);
    assert_eq!(second.points[0].landscape_minimizer, first.points[0].landscape_minimizer);
}

#[test]
fn per_point_failure_keeps_other_points() {
    let tmp = tempfile::tempdir().unwrap();
    // at eps = 0.01 the grid would need far more than 41 nodes per axis
    let text = TINY
        .replace("eps_list = [0.2]", "eps_list = [0.2, 0.01]")
        .replace("landscape_samples = 5", "landscape_samples = 5\nmax_nodes = 79");
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let summary = experiment::run(&cfg, tmp.path(), 1, false).unwrap();
    assert!(summary.points[0].errors.is_empty());
    assert!(summary.points[1].errors.iter().any(|e| e.starts_with("landscape:")), "{:?}", summary.points[1].errors);
    assert!(summary.points[1].model_r_star.is_some());
}
