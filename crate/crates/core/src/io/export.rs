//! CSV and PGM writers for reconstruction outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Grid;
use crate::inverse::LossRecord;
use crate::metrics::MetricsReport;
use crate::splats::SplatParams;

/// One active pixel of an absorption map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub x_cm: f64,
    pub y_cm: f64,
    /// Absorption change relative to the background, cm⁻¹.
    pub dmu_a: f64,
    /// Total absorption, cm⁻¹.
    pub mu_a: f64,
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

/// Active pixels in grid order as `x_cm, y_cm, dmu_a, mu_a`.
pub fn write_map_csv(path: &Path, grid: &Grid, dmu: &[f64], background_mu_a: f64) -> Result<()> {
    check_len("map export", grid.n_active(), dmu.len())?;
    let mut w = writer(path)?;
    for (k, &v) in dmu.iter().enumerate() {
        let c = grid.active_center(k);
        w.serialize(MapRow {
            x_cm: c.x,
            y_cm: c.y,
            dmu_a: v,
            mu_a: background_mu_a + v,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_map_csv(path: &Path) -> Result<Vec<MapRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Full raster as a headerless matrix, first line at the largest `y` so the
/// file reads like the image. Inactive pixels are 0.
pub fn write_raster_csv(path: &Path, grid: &Grid, raster: &[f64]) -> Result<()> {
    check_len("raster export", grid.n_pixels(), raster.len())?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in (0..grid.height).rev() {
        let line = &raster[row * grid.width..(row + 1) * grid.width];
        w.write_record(line.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// 8-bit gray level of `v` under a linear map of `[lo, hi]` onto `[0, 255]`.
pub fn gray_level(v: f64, lo: f64, hi: f64) -> u8 {
    let scaled = ((v - lo) / (hi - lo) * 255.0).floor();
    if scaled.is_nan() {
        0
    } else {
        scaled.clamp(0.0, 255.0) as u8
    }
}

/// Binary PGM (P5) of a full raster. Values map linearly from `value_range`
/// onto 0..=255, flooring and saturating; inactive pixels are black. The range
/// is recorded in a comment line. The top image row is the largest `y`.
pub fn export_pgm(path: &Path, grid: &Grid, raster: &[f64], value_range: (f64, f64)) -> Result<()> {
    check_len("pgm export", grid.n_pixels(), raster.len())?;
    let (lo, hi) = value_range;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::invalid(format!("empty PGM value range [{lo}, {hi}]")));
    }
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write!(
        w,
        "P5\n# value_range {lo:e} {hi:e}\n{} {}\n255\n",
        grid.width, grid.height
    )
    .map_err(io)?;
    let mut bytes = Vec::with_capacity(grid.n_pixels());
    for row in (0..grid.height).rev() {
        for col in 0..grid.width {
            let idx = row * grid.width + col;
            bytes.push(if grid.active_mask[idx] {
                gray_level(raster[idx], lo, hi)
            } else {
                0
            });
        }
    }
    w.write_all(&bytes).map_err(io)?;
    w.flush().map_err(io)
}

#[derive(Serialize)]
struct SplatRow {
    k: usize,
    alpha: f64,
    x_cm: f64,
    y_cm: f64,
    sx_cm: f64,
    sy_cm: f64,
    theta_deg: f64,
}

pub fn write_splats_csv(path: &Path, params: &SplatParams) -> Result<()> {
    let mut w = writer(path)?;
    for (k, s) in params.decode()?.iter().enumerate() {
        w.serialize(SplatRow {
            k,
            alpha: s.alpha,
            x_cm: s.center.x,
            y_cm: s.center.y,
            sx_cm: s.sx,
            sy_cm: s.sy,
            theta_deg: s.theta.to_degrees(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_loss_trace(path: &Path, trace: &[LossRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["iteration", "L_total", "L_data", "L_reg", "L_rep"])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            r.total.to_string(),
            r.data.to_string(),
            r.reg.to_string(),
            r.rep.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub case: String,
    pub condition: String,
    pub rmse: f64,
    pub ssim: f64,
    pub com_error: f64,
}

impl MetricsRow {
    pub fn new(case: &str, condition: &str, m: &MetricsReport) -> Self {
        Self {
            case: case.to_string(),
            condition: condition.to_string(),
            rmse: m.rmse,
            ssim: m.ssim,
            com_error: m.com_error,
        }
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Line profiles along one axis: the coordinate followed by one column per named series.
pub fn write_profile_csv(
    path: &Path,
    coord_name: &str,
    coords: &[f64],
    series: &[(&str, &[f64])],
) -> Result<()> {
    for (_, s) in series {
        check_len("profile export", coords.len(), s.len())?;
    }
    let mut w = writer(path)?;
    let mut header = vec![coord_name.to_string()];
    header.extend(series.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header)?;
    for (i, c) in coords.iter().enumerate() {
        let mut rec = vec![c.to_string()];
        rec.extend(series.iter().map(|(_, s)| s[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
