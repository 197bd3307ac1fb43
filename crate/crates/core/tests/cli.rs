use std::path::Path;
use std::process::{Command, Output};

fn gsdot(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsdot"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("GSDOT_CACHE_DIR")
        .output()
        .unwrap()
}

const SMALL: &str = r#"
[geometry]
resolution_cm = 0.25
n_sources = 6
n_detectors = 6

[physics]
t_total_ns = 4.0
dt_ns = 0.05

[phantom]
case = "one-inclusion"

[noise]

[solver]
n_iters = 80

[output]
dir = "out"
jacobian_cache = "cache/j.gsdj"
"#;

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_then_metrics_succeeds() {
    let ws = workspace();
    let o = gsdot(&["run", "run.toml", "--seed", "3"], ws.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("one-inclusion clean"), "{text}");
    assert!(text.contains("113.78x"), "{text}");
    assert!(ws.path().join("out/manifest.json").exists());

    let m = gsdot(&["metrics", "out"], ws.path());
    assert_eq!(m.status.code(), Some(0));
    let csv = stdout(&m);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "case,condition,rmse,ssim,com_error");
    assert!(lines[1].starts_with("one-inclusion,clean,"));
    assert!(lines[2].starts_with("one-inclusion,noisy,"));
    let saved = std::fs::read_to_string(ws.path().join("out/metrics.csv")).unwrap();
    assert_eq!(saved.trim_end(), csv.trim_end());
}

#[test]
fn dry_run_computes_nothing() {
    let ws = workspace();
    let o = gsdot(&["run", "run.toml", "--dry-run"], ws.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("absent, will build"), "{text}");
    assert!(!ws.path().join("out").exists());
    assert!(!ws.path().join("cache").exists());
}

#[test]
fn jacobian_subcommand_builds_then_verifies() {
    let ws = workspace();
    let first = gsdot(&["jacobian", "run.toml"], ws.path());
    assert_eq!(first.status.code(), Some(0));
    assert!(stdout(&first).starts_with("built"));
    let second = gsdot(&["jacobian", "run.toml"], ws.path());
    assert!(stdout(&second).starts_with("verified"));
    let plan = gsdot(&["jacobian", "run.toml", "--dry-run"], ws.path());
    assert!(stdout(&plan).contains("present, matches"));
}

#[test]
fn config_problems_exit_with_two() {
    let ws = workspace();
    assert_eq!(gsdot(&["run", "missing.toml"], ws.path()).status.code(), Some(2));
    std::fs::write(ws.path().join("bad.toml"), SMALL.replace("[noise]", "[noise]\ntypo = 1")).unwrap();
    let o = gsdot(&["run", "bad.toml"], ws.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo"));
    std::fs::write(ws.path().join("neg.toml"), SMALL.replace("n_iters = 80", "n_iters = 80\nbeta = -1")).unwrap();
    assert_eq!(gsdot(&["run", "neg.toml", "--dry-run"], ws.path()).status.code(), Some(2));
}

#[test]
fn damaged_or_stale_cache_exits_with_three_unless_rebuilt() {
    let ws = workspace();
    std::fs::create_dir_all(ws.path().join("cache")).unwrap();
    std::fs::write(ws.path().join("cache/j.gsdj"), b"not a cache").unwrap();
    let o = gsdot(&["jacobian", "run.toml"], ws.path());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(gsdot(&["run", "run.toml"], ws.path()).status.code(), Some(3));

    let rebuilt = gsdot(&["jacobian", "run.toml", "--force-rebuild-jacobian"], ws.path());
    assert_eq!(rebuilt.status.code(), Some(0));

    // Same cache file, different absorption.
    std::fs::write(ws.path().join("stale.toml"), SMALL.replace("[physics]", "[physics]\nmu_a = 0.02")).unwrap();
    let o = gsdot(&["run", "stale.toml"], ws.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mu_a"));
    let plan = gsdot(&["run", "stale.toml", "--dry-run"], ws.path());
    assert!(stdout(&plan).contains("STALE"));
}

#[test]
fn runaway_optimizer_exits_with_four() {
    let ws = workspace();
    let wild = SMALL.replace("n_iters = 80", "n_iters = 80\nlr_amplitude = 1e6\nlr_scale = 1e6");
    std::fs::write(ws.path().join("wild.toml"), wild).unwrap();
    let o = gsdot(&["run", "wild.toml"], ws.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ws.path().join("out/divergence_clean.json").exists());
}

#[test]
fn cache_directory_can_be_redirected() {
    let ws = workspace();
    let text = SMALL.replace("jacobian_cache = \"cache/j.gsdj\"\n", "");
    std::fs::write(ws.path().join("plain.toml"), text).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gsdot"))
        .args(["jacobian", "plain.toml"])
        .current_dir(ws.path())
        .env("GSDOT_CACHE_DIR", "elsewhere")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let files: Vec<_> = std::fs::read_dir(ws.path().join("elsewhere")).unwrap().collect();
    assert_eq!(files.len(), 1);
    assert!(!ws.path().join(".gsdot-cache").exists());
}
