//! End-to-end run: geometry, sensitivity matrix, phantom, data, reconstruction, exports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cache::{load_jacobian_checked, read_header, save_jacobian, CacheHeader};
use super::config::{hex, RunConfig, Setup};
use super::export::{
    export_pgm, read_map_csv, write_loss_trace, write_map_csv, write_metrics_csv,
    write_profile_csv, write_raster_csv, write_splats_csv, MetricsRow,
};
use crate::error::{CacheError, Error, Result};
use crate::forward::{apply_noise, baseline_tpsf, born_forward, SensitivityMatrix};
use crate::geometry::Grid;
use crate::inverse::{reconstruct, Compression, ReconstructionResult};
use crate::metrics::{evaluate, line_profile, Axis};
use crate::phantoms::make_phantom;

/// Splat count and grid size of the reference compression figure.
pub const REFERENCE_SPLATS: usize = 6;
pub const REFERENCE_GRID_UNKNOWNS: usize = 4096;

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const GT_MAP_FILE: &str = "gt_map.csv";
pub const CLEAN_MAP_FILE: &str = "recon_clean_map.csv";
pub const NOISY_MAP_FILE: &str = "recon_noisy_map.csv";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces `noise.seed`.
    pub seed: Option<u64>,
    pub force_rebuild_jacobian: bool,
    /// Replaces `output.dir`.
    pub out_dir: Option<PathBuf>,
}

impl RunOptions {
    /// The configuration after command-line overrides, with `K` resolved.
    pub fn apply(&self, config: &RunConfig) -> Result<RunConfig> {
        let mut c = config.resolved()?;
        if let Some(seed) = self.seed {
            c.noise.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            c.output.dir = dir.clone();
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianInfo {
    pub cache_path: Option<PathBuf>,
    /// True when the matrix was read from an existing cache.
    pub reused: bool,
    pub rows: usize,
    pub columns: usize,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub case: String,
    pub n_splats: usize,
    pub noise_seed: Option<u64>,
    pub jacobian: JacobianInfo,
    pub compression: Compression,
    pub compression_reference: Compression,
    pub best_iteration: Vec<usize>,
    pub metrics: Vec<MetricsRow>,
    pub stages: Vec<StageTime>,
    pub files: Vec<FileRecord>,
}

/// Everything a run produces in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
    pub gt: Vec<f64>,
    pub clean: ReconstructionResult,
    pub noisy: Option<ReconstructionResult>,
}

/// Loads the cached matrix when it matches the configuration, otherwise builds
/// and stores it. A stale or damaged cache is an error unless `force_rebuild`.
pub fn obtain_jacobian(
    config: &RunConfig,
    setup: &Setup,
    force_rebuild: bool,
) -> Result<(SensitivityMatrix, JacobianInfo)> {
    let path = config.cache_path();
    let info = |j: &SensitivityMatrix, reused| JacobianInfo {
        cache_path: Some(path.clone()),
        reused,
        rows: j.n_rows(),
        columns: j.n_pixels,
        size_bytes: j.size_bytes(),
    };
    if path.exists() && !force_rebuild {
        let j = load_jacobian_checked(&path, &setup.cache_header())?;
        log::info!("loaded sensitivity matrix from {}", path.display());
        let i = info(&j, true);
        return Ok((j, i));
    }
    log::info!("building sensitivity matrix");
    let j = SensitivityMatrix::build(
        &setup.optodes,
        &setup.grid,
        &setup.props,
        &setup.time,
        setup.domain.radius_cm,
    )?;
    save_jacobian(&j, &path)?;
    log::info!("saved sensitivity matrix to {}", path.display());
    let i = info(&j, false);
    Ok((j, i))
}

/// Loads the configuration file, then runs everything and writes the outputs.
pub fn run_pipeline(config_path: &Path, opts: &RunOptions) -> Result<RunManifest> {
    let config = RunConfig::load(config_path)?;
    Ok(run_config(&config, opts)?.manifest)
}

pub fn run_config(config: &RunConfig, opts: &RunOptions) -> Result<RunOutput> {
    let config = opts.apply(config)?;
    let t = Instant::now();
    let setup = config.setup()?;
    let setup_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let (j, info) = obtain_jacobian(&config, &setup, opts.force_rebuild_jacobian)?;
    let jacobian_s = t.elapsed().as_secs_f64();
    let mut out = run_with_jacobian(&config, &setup, &j, info)?;
    let front = [("setup", setup_s), ("jacobian", jacobian_s)].map(|(stage, wall_s)| StageTime {
        stage: stage.into(),
        wall_s,
    });
    out.manifest.stages.splice(0..0, front);
    write_manifest(&out.out_dir, &out.manifest)?;
    Ok(out)
}

/// Runs with a matrix the caller already holds. `config` must already carry
/// any overrides; the matrix must match its geometry.
pub fn run_with_jacobian(
    config: &RunConfig,
    setup: &Setup,
    j: &SensitivityMatrix,
    jacobian: JacobianInfo,
) -> Result<RunOutput> {
    let config = config.resolved()?;
    if let Some((field, cached, expected)) = CacheHeader::of(j).first_mismatch(&setup.cache_header()) {
        return Err(CacheError::HeaderMismatch {
            path: PathBuf::from("<in-memory>"),
            field,
            cached,
            expected,
        }
        .into());
    }
    let out_dir = config.output.dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut stages = Vec::new();
    let mut stage = |name: &str, start: Instant| {
        stages.push(StageTime {
            stage: name.to_string(),
            wall_s: start.elapsed().as_secs_f64(),
        })
    };

    let t = Instant::now();
    let Setup {
        domain,
        grid,
        optodes,
        time,
        props,
        phantom,
        hyper,
    } = setup;
    let gt = make_phantom(phantom, grid, domain)?;
    let baseline = baseline_tpsf(optodes, props, time);
    let clean_data = born_forward(j, &gt, &baseline)?;
    let noisy_data = if config.noise.enabled {
        Some(apply_noise(
            &clean_data.clamped_non_negative(),
            config.noise.level,
            config.noise.seed,
        )?)
    } else {
        None
    };
    stage("forward", t);

    let t = Instant::now();
    let clean = reconstruct(&clean_data, &baseline, j, grid, domain, hyper)
        .map_err(|e| dump_divergence(&out_dir, "clean", e))?;
    stage("reconstruct_clean", t);
    let noisy = match &noisy_data {
        Some(data) => {
            let t = Instant::now();
            let r = reconstruct(data, &baseline, j, grid, domain, hyper)
                .map_err(|e| dump_divergence(&out_dir, "noisy", e))?;
            stage("reconstruct_noisy", t);
            Some(r)
        }
        None => None,
    };

    let t = Instant::now();
    let case = phantom.case.as_str();
    let mut metrics = vec![MetricsRow::new(case, "clean", &evaluate(&clean.dmu, &gt, grid)?)];
    if let Some(n) = &noisy {
        metrics.push(MetricsRow::new(case, "noisy", &evaluate(&n.dmu, &gt, grid)?));
    }
    let names = write_outputs(&out_dir, &config, grid, props.mu_a, phantom, &gt, &clean, noisy.as_ref(), &metrics)?;
    stage("export", t);

    let files = names
        .iter()
        .map(|name| file_record(&out_dir, name))
        .collect::<Result<Vec<_>>>()?;
    let mut best_iteration = vec![clean.best_iteration];
    best_iteration.extend(noisy.as_ref().map(|n| n.best_iteration));
    let manifest = RunManifest {
        config_hash: config.hash()?,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        case: case.to_string(),
        n_splats: hyper.n_splats,
        noise_seed: config.noise.enabled.then_some(config.noise.seed),
        jacobian,
        compression: Compression::new(hyper.n_splats, grid.n_active()),
        compression_reference: Compression::new(REFERENCE_SPLATS, REFERENCE_GRID_UNKNOWNS),
        best_iteration,
        metrics,
        stages,
        files,
    };
    write_manifest(&out_dir, &manifest)?;
    Ok(RunOutput {
        manifest,
        out_dir,
        gt,
        clean,
        noisy,
    })
}

fn dump_divergence(dir: &Path, condition: &str, e: Error) -> Error {
    if let Error::Divergence {
        iteration,
        reason,
        params,
    } = &e
    {
        let path = dir.join(format!("divergence_{condition}.json"));
        let state = serde_json::json!({
            "condition": condition,
            "iteration": iteration,
            "reason": reason,
            "params": params,
        });
        match serde_json::to_vec_pretty(&state) {
            Ok(bytes) => {
                if let Err(err) = std::fs::write(&path, bytes) {
                    log::error!("could not write {}: {err}", path.display());
                }
            }
            Err(err) => log::error!("could not encode divergence state: {err}"),
        }
    }
    e
}

#[allow(clippy::too_many_arguments)]
fn write_outputs(
    dir: &Path,
    config: &RunConfig,
    grid: &Grid,
    background: f64,
    phantom: &crate::phantoms::PhantomSpec,
    gt: &[f64],
    clean: &ReconstructionResult,
    noisy: Option<&ReconstructionResult>,
    metrics: &[MetricsRow],
) -> Result<Vec<String>> {
    let mut names: Vec<String> = Vec::new();
    let mut add = |n: &str| {
        names.push(n.to_string());
        dir.join(n)
    };

    let text = config.to_toml()?;
    let p = add(RESOLVED_CONFIG_FILE);
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;

    let mut maps: Vec<(&str, &str, &[f64])> = vec![("gt", GT_MAP_FILE, gt), ("recon_clean", CLEAN_MAP_FILE, &clean.dmu)];
    if let Some(n) = noisy {
        maps.push(("recon_noisy", NOISY_MAP_FILE, &n.dmu));
    }
    let rasters = maps
        .iter()
        .map(|(_, _, v)| grid.to_raster(v))
        .collect::<Result<Vec<_>>>()?;
    let hi = rasters
        .iter()
        .flatten()
        .copied()
        .fold(phantom.contrast, f64::max);
    for ((stem, file, values), raster) in maps.iter().zip(&rasters) {
        write_map_csv(&add(file), grid, values, background)?;
        write_raster_csv(&add(&format!("{stem}_raster.csv")), grid, raster)?;
        export_pgm(&add(&format!("{stem}.pgm")), grid, raster, (0.0, hi))?;
    }

    let anchor = phantom.profile_anchor();
    let xs: Vec<f64> = (0..grid.width)
        .map(|c| grid.origin.x + (c as f64 + 0.5) * grid.resolution_cm)
        .collect();
    let ys: Vec<f64> = (0..grid.height)
        .map(|r| grid.origin.y + (r as f64 + 0.5) * grid.resolution_cm)
        .collect();
    for (axis, file, coord, coords) in [
        (Axis::X, "profile_x.csv", "x_cm", &xs),
        (Axis::Y, "profile_y.csv", "y_cm", &ys),
    ] {
        let profiles = maps
            .iter()
            .zip(&rasters)
            .map(|((stem, _, _), r)| Ok((*stem, line_profile(r, grid, anchor, axis)?)))
            .collect::<Result<Vec<_>>>()?;
        let series: Vec<(&str, &[f64])> = profiles.iter().map(|(n, v)| (*n, v.as_slice())).collect();
        write_profile_csv(&add(file), coord, coords, &series)?;
    }

    write_splats_csv(&add("splats_final.csv"), &clean.params)?;
    write_loss_trace(&add("loss_trace.csv"), &clean.trace)?;
    if let Some(n) = noisy {
        write_splats_csv(&add("splats_final_noisy.csv"), &n.params)?;
        write_loss_trace(&add("loss_trace_noisy.csv"), &n.trace)?;
    }
    write_metrics_csv(&add(METRICS_FILE), metrics)?;
    Ok(names)
}

fn file_record(dir: &Path, name: &str) -> Result<FileRecord> {
    let path = dir.join(name);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(FileRecord {
        name: name.to_string(),
        sha256: hex(&Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Config(format!("cannot encode manifest: {e}")))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Human-readable plan for `--dry-run`: validates everything without computing.
pub fn describe_plan(config: &RunConfig, opts: &RunOptions) -> Result<String> {
    let config = opts.apply(config)?;
    let setup = config.setup()?;
    let cache = config.cache_path();
    let rows = setup.optodes.n_pairs() * setup.time.n_bins();
    let bytes = rows as u64 * setup.grid.n_active() as u64 * 4;
    let cache_state = if !cache.exists() {
        "absent, will build".to_string()
    } else if opts.force_rebuild_jacobian {
        "present, will rebuild".to_string()
    } else {
        match read_header(&cache).map(|h| h.first_mismatch(&setup.cache_header())) {
            Ok(None) => "present, matches".to_string(),
            Ok(Some((field, cached, want))) => {
                format!("present, STALE ({field} is {cached}, want {want})")
            }
            Err(e) => format!("present, unreadable ({e})"),
        }
    };
    let c = Compression::new(setup.hyper.n_splats, setup.grid.n_active());
    let mut s = String::new();
    let _ = writeln!(s, "case            {}", setup.phantom.case);
    let _ = writeln!(s, "grid            {}x{} ({} active pixels)", setup.grid.width, setup.grid.height, setup.grid.n_active());
    let _ = writeln!(s, "measurements    {} pairs x {} bins", setup.optodes.n_pairs(), setup.time.n_bins());
    let _ = writeln!(s, "jacobian        {rows} x {} ({:.1} MiB)", setup.grid.n_active(), bytes as f64 / (1 << 20) as f64);
    let _ = writeln!(s, "jacobian cache  {} [{cache_state}]", cache.display());
    let _ = writeln!(s, "splats          {} ({} unknowns, {:.2}x fewer than the grid)", setup.hyper.n_splats, c.splat_unknowns, c.ratio);
    let _ = writeln!(s, "iterations      {}", setup.hyper.n_iters);
    let _ = match config.noise.enabled {
        true => writeln!(s, "noise           level {} seed {}", config.noise.level, config.noise.seed),
        false => writeln!(s, "noise           disabled"),
    };
    let _ = writeln!(s, "output          {}", config.output.dir.display());
    let _ = writeln!(s, "config hash     {}", config.hash()?);
    Ok(s)
}

/// Recomputes metrics from the maps and resolved configuration saved in `dir`.
pub fn recompute_metrics(dir: &Path) -> Result<Vec<MetricsRow>> {
    let config = RunConfig::load(&dir.join(RESOLVED_CONFIG_FILE))?;
    let setup = config.setup()?;
    let grid = &setup.grid;
    let read = |name: &str| -> Result<Vec<f64>> {
        let path = dir.join(name);
        let rows = read_map_csv(&path)?;
        if rows.len() != grid.n_active() {
            return Err(Error::DimensionMismatch {
                context: "saved map",
                expected: grid.n_active(),
                actual: rows.len(),
            });
        }
        for (k, r) in rows.iter().enumerate() {
            let c = grid.active_center(k);
            if (r.x_cm - c.x).abs() > 1e-9 || (r.y_cm - c.y).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "{}: row {k} at ({}, {}) does not match pixel center ({}, {})",
                    path.display(),
                    r.x_cm,
                    r.y_cm,
                    c.x,
                    c.y
                )));
            }
        }
        Ok(rows.iter().map(|r| r.dmu_a).collect())
    };
    let gt = read(GT_MAP_FILE)?;
    let case = setup.phantom.case.as_str();
    let mut out = Vec::new();
    for (condition, file) in [("clean", CLEAN_MAP_FILE), ("noisy", NOISY_MAP_FILE)] {
        if dir.join(file).exists() {
            let recon = read(file)?;
            out.push(MetricsRow::new(case, condition, &evaluate(&recon, &gt, grid)?));
        }
    }
    Ok(out)
}
