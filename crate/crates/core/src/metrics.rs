//! Image-quality metrics for reconstructed absorption maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub ssim: f64,
    pub com_error: f64,
}

/// Root-mean-square difference over the active pixels.
pub fn rmse(recon: &[f64], gt: &[f64]) -> Result<f64> {
    if recon.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            context: "rmse",
            expected: gt.len(),
            actual: recon.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::invalid("rmse of empty fields"));
    }
    let sum: f64 = recon.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sum / gt.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    /// Side of the square uniform window; odd.
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl SsimParams {
    pub fn with_range(data_range: f64) -> Self {
        Self {
            window: 7,
            k1: 0.01,
            k2: 0.03,
            data_range,
        }
    }
}

/// Mean structural similarity over all fully contained `window × window` patches.
///
/// Local statistics use uniform weights and population (1/N) moments.
pub fn ssim(x: &[f64], y: &[f64], width: usize, height: usize, params: SsimParams) -> Result<f64> {
    let n = width * height;
    if x.len() != n || y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "ssim",
            expected: n,
            actual: if x.len() != n { x.len() } else { y.len() },
        });
    }
    let w = params.window;
    if w == 0 || w % 2 == 0 {
        return Err(Error::invalid(format!("ssim window must be odd, got {w}")));
    }
    if w > width || w > height {
        return Err(Error::invalid(format!(
            "ssim window {w} exceeds the {width}x{height} image"
        )));
    }
    if !(params.data_range.is_finite() && params.data_range > 0.0) {
        return Err(Error::invalid(format!(
            "ssim data range must be positive, got {}",
            params.data_range
        )));
    }
    let c1 = (params.k1 * params.data_range).powi(2);
    let c2 = (params.k2 * params.data_range).powi(2);

    // Summed-area tables would be faster but drift for near-constant images.
    let inv = 1.0 / (w * w) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=(height - w) {
        for col0 in 0..=(width - w) {
            let (mut sx, mut sy) = (0.0, 0.0);
            for r in r0..r0 + w {
                for c in col0..col0 + w {
                    sx += x[r * width + c];
                    sy += y[r * width + c];
                }
            }
            let (mx, my) = (sx * inv, sy * inv);
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for r in r0..r0 + w {
                for c in col0..col0 + w {
                    let dx = x[r * width + c] - mx;
                    let dy = y[r * width + c] - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            }
            let (vx, vy, cxy) = (vx * inv, vy * inv, cxy * inv);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Intensity-weighted centroid of a field on the active pixels.
pub fn center_of_mass(field: &[f64], grid: &Grid) -> Result<Point2> {
    if field.len() != grid.n_active() {
        return Err(Error::DimensionMismatch {
            context: "center of mass",
            expected: grid.n_active(),
            actual: field.len(),
        });
    }
    let (mut m, mut mx, mut my) = (0.0, 0.0, 0.0);
    for (k, &v) in field.iter().enumerate() {
        let p = grid.active_center(k);
        m += v;
        mx += v * p.x;
        my += v * p.y;
    }
    if !(m > 0.0) {
        return Err(Error::UndefinedCom(m));
    }
    Ok(Point2::new(mx / m, my / m))
}

/// Distance between the reconstruction's and the ground truth's centers of mass.
pub fn com_error(recon: &[f64], gt: &[f64], grid: &Grid) -> Result<f64> {
    let a = center_of_mass(recon, grid)?;
    let b = center_of_mass(gt, grid)?;
    Ok(a.distance(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Row (`Axis::X`) or column (`Axis::Y`) of a full raster through `through`.
pub fn line_profile(raster: &[f64], grid: &Grid, through: Point2, axis: Axis) -> Result<Vec<f64>> {
    if raster.len() != grid.n_pixels() {
        return Err(Error::DimensionMismatch {
            context: "line profile",
            expected: grid.n_pixels(),
            actual: raster.len(),
        });
    }
    let idx = grid
        .nearest_pixel(through)
        .ok_or_else(|| Error::invalid(format!("profile point {through:?} is outside the grid")))?;
    let (row, col) = grid.row_col(idx);
    Ok(match axis {
        Axis::X => raster[row * grid.width..(row + 1) * grid.width].to_vec(),
        Axis::Y => (0..grid.height).map(|r| raster[r * grid.width + col]).collect(),
    })
}

/// Evaluates all three metrics; SSIM runs on full rasters with the ground truth's range.
pub fn evaluate(recon: &[f64], gt: &[f64], grid: &Grid) -> Result<MetricsReport> {
    let r = grid.to_raster(recon)?;
    let g = grid.to_raster(gt)?;
    let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MetricsReport {
        rmse: rmse(recon, gt)?,
        ssim: ssim(&r, &g, grid.width, grid.height, SsimParams::with_range(hi - lo))?,
        com_error: com_error(recon, gt, grid)?,
    })
}
