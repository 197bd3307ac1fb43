use std::path::{Path, PathBuf};

use gsdot_core::io::pipeline::{CLEAN_MAP_FILE, GT_MAP_FILE, METRICS_FILE, NOISY_MAP_FILE};
use gsdot_core::io::{recompute_metrics, run_config, RunConfig, RunOptions};
use gsdot_core::Error;
use sha2::{Digest, Sha256};

fn small_config(dir: &Path) -> RunConfig {
    let text = format!(
        r#"
[geometry]
resolution_cm = 0.25
n_sources = 6
n_detectors = 6

[physics]
t_total_ns = 4.0
dt_ns = 0.05

[phantom]
case = "three-circles"

[noise]
seed = 4

[solver]
n_iters = 120

[output]
dir = "{}"
jacobian_cache = "{}"
"#,
        dir.join("run").display(),
        dir.join("cache/j.gsdj").display()
    );
    RunConfig::from_toml(&text).unwrap()
}

fn opts(out: PathBuf) -> RunOptions {
    RunOptions {
        out_dir: Some(out),
        ..RunOptions::default()
    }
}

const COMPARED: [&str; 4] = [METRICS_FILE, GT_MAP_FILE, CLEAN_MAP_FILE, NOISY_MAP_FILE];

#[test]
fn repeated_runs_are_bit_identical_and_cache_reuse_changes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));

    let first = run_config(&config, &opts(a.clone())).unwrap();
    assert!(!first.manifest.jacobian.reused);
    let second = run_config(&config, &opts(b.clone())).unwrap();
    assert!(second.manifest.jacobian.reused);
    let rebuilt = run_config(
        &config,
        &RunOptions {
            force_rebuild_jacobian: true,
            ..opts(c.clone())
        },
    )
    .unwrap();
    assert!(!rebuilt.manifest.jacobian.reused);

    for name in COMPARED {
        let x = std::fs::read(a.join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name} differs after reuse");
        assert_eq!(x, std::fs::read(c.join(name)).unwrap(), "{name} differs after rebuild");
    }
    assert_eq!(first.manifest.metrics, second.manifest.metrics);
}

#[test]
fn manifest_checksums_describe_the_written_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let run = run_config(&small_config(tmp.path()), &opts(out.clone())).unwrap();
    let m = &run.manifest;
    assert_eq!(m.n_splats, 3);
    assert_eq!(m.noise_seed, Some(4));
    assert!(!m.files.is_empty());
    for f in &m.files {
        let bytes = std::fs::read(out.join(&f.name)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes, "{}", f.name);
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(digest, f.sha256, "{}", f.name);
    }
    for name in ["config.resolved.toml", "manifest.json", "gt.pgm", "profile_x.csv", "splats_final.csv"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    // The unknown count is six per splat against the active pixels.
    assert_eq!(m.compression.splat_unknowns, 18);
    assert!((m.compression.ratio - m.compression.grid_unknowns as f64 / 18.0).abs() < 1e-12);
    assert!((m.compression_reference.ratio - 4096.0 / 36.0).abs() < 1e-12);
}

#[test]
fn seed_override_changes_only_the_noisy_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_config(&config, &opts(a.clone())).unwrap();
    run_config(
        &config,
        &RunOptions {
            seed: Some(99),
            ..opts(b.clone())
        },
    )
    .unwrap();
    let read = |d: &Path, n: &str| std::fs::read(d.join(n)).unwrap();
    assert_eq!(read(&a, CLEAN_MAP_FILE), read(&b, CLEAN_MAP_FILE));
    assert_ne!(read(&a, NOISY_MAP_FILE), read(&b, NOISY_MAP_FILE));
}

#[test]
fn recomputed_metrics_match_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let run = run_config(&small_config(tmp.path()), &opts(out.clone())).unwrap();
    let again = recompute_metrics(&out).unwrap();
    assert_eq!(again.len(), 2);
    // Maps are stored in shortest round-trip form, so the values are identical.
    assert_eq!(again, run.manifest.metrics);
}

#[test]
fn pgm_export_decodes_with_expected_geometry() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let run = run_config(&small_config(tmp.path()), &opts(out.clone())).unwrap();
    let setup = small_config(tmp.path()).setup().unwrap();
    let img = image::open(out.join("gt.pgm")).unwrap().to_luma8();
    assert_eq!((img.width() as usize, img.height() as usize), (setup.grid.width, setup.grid.height));
    let peak = img.pixels().map(|p| p.0[0]).max().unwrap();
    assert!(peak > 0);
    let bright = img.pixels().filter(|p| p.0[0] > 0).count();
    let inclusion = run.gt.iter().filter(|&&v| v > 0.0).count();
    assert_eq!(bright, inclusion);
}

#[test]
fn invalid_configs_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let base = small_config(tmp.path()).to_toml().unwrap();

    let unknown_key = base.replace("[noise]", "[noise]\nsigma = 0.1");
    assert!(matches!(RunConfig::from_toml(&unknown_key), Err(Error::Config(_))));

    let missing_section = base.replace("[noise]", "[noisy]");
    assert!(matches!(RunConfig::from_toml(&missing_section), Err(Error::Config(_))));

    let mut c = small_config(tmp.path());
    c.phantom.case = "square".into();
    assert!(matches!(c.setup(), Err(Error::Config(_))));

    let mut c = small_config(tmp.path());
    c.geometry.resolution_cm = -0.1;
    match c.setup() {
        Err(Error::Config(msg)) => assert!(msg.starts_with("geometry"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }

    let mut c = small_config(tmp.path());
    c.solver.n_iters = 0;
    assert!(matches!(c.setup(), Err(Error::Config(_))));

    let mut c = small_config(tmp.path());
    c.noise.level = -1.0;
    assert!(matches!(c.setup(), Err(Error::Config(_))));
}

#[test]
fn resolved_config_round_trips_and_hash_tracks_content() {
    let tmp = tempfile::tempdir().unwrap();
    let c = small_config(tmp.path()).resolved().unwrap();
    let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash().unwrap(), c.hash().unwrap());
    let mut d = c.clone();
    d.solver.lambda_p *= 2.0;
    assert_ne!(d.hash().unwrap(), c.hash().unwrap());
}
