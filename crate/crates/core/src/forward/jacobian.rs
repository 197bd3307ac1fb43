use std::sync::OnceLock;

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;

use super::quadrature::cell_integrated_green;
use super::{convolve_into, green_series, OpticalProperties, TpsfSet};
use crate::error::{CacheError, Error, Result};
use crate::geometry::{Grid, OptodeArray, TimeAxis};

/// Default ceiling for a dense Jacobian allocation (4 GiB).
pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

/// Rows per block when accumulating `JᵀJ`.
const GRAM_BLOCK_ROWS: usize = 1024;

/// Dense Born sensitivity matrix.
///
/// Rows are `(source, detector, bin)` in source-major order, columns are the
/// active pixels of the grid. The pixel area is folded into every entry so that
/// `ΔΦ = J·Δμa` is a plain matrix-vector product. Entries are stored in single
/// precision, column by column.
#[derive(Debug, Clone)]
pub struct SensitivityMatrix {
    pub n_sources: usize,
    pub n_detectors: usize,
    pub n_bins: usize,
    pub n_pixels: usize,
    pub dt_ns: f64,
    pub resolution_cm: f64,
    pub radius_cm: f64,
    pub props: OpticalProperties,
    data: Vec<f32>,
    gram: OnceLock<Vec<f64>>,
}

impl PartialEq for SensitivityMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n_sources == other.n_sources
            && self.n_detectors == other.n_detectors
            && self.n_bins == other.n_bins
            && self.n_pixels == other.n_pixels
            && self.dt_ns == other.dt_ns
            && self.resolution_cm == other.resolution_cm
            && self.radius_cm == other.radius_cm
            && self.props == other.props
            && self.data == other.data
    }
}

impl SensitivityMatrix {
    pub fn build(
        optodes: &OptodeArray,
        grid: &Grid,
        props: &OpticalProperties,
        time: &TimeAxis,
        radius_cm: f64,
    ) -> Result<Self> {
        Self::build_with_budget(optodes, grid, props, time, radius_cm, DEFAULT_MEMORY_BUDGET)
    }

    pub fn build_with_budget(
        optodes: &OptodeArray,
        grid: &Grid,
        props: &OpticalProperties,
        time: &TimeAxis,
        radius_cm: f64,
        budget_bytes: u64,
    ) -> Result<Self> {
        let n_rows = optodes.n_pairs() * time.n_bins();
        let n_pixels = grid.n_active();
        let bytes = (n_rows as u64) * (n_pixels as u64) * 4;
        if bytes > budget_bytes {
            return Err(CacheError::TooLarge {
                bytes,
                budget: budget_bytes,
            }
            .into());
        }
        let mut data = vec![0.0f32; n_rows * n_pixels];
        let scale = -props.speed() * grid.pixel_area();
        // Columns are independent, so any schedule yields the same bits.
        data.par_chunks_mut(n_rows.max(1))
            .enumerate()
            .for_each(|(col, column)| {
                let r = grid.active_center(col);
                fill_column(optodes, r, props, time, scale, column);
            });
        Ok(Self {
            n_sources: optodes.n_sources(),
            n_detectors: optodes.n_detectors(),
            n_bins: time.n_bins(),
            n_pixels,
            dt_ns: time.dt_ns,
            resolution_cm: grid.resolution_cm,
            radius_cm,
            props: *props,
            data,
            gram: OnceLock::new(),
        })
    }

    /// Wraps raw column-major entries (`n_rows` per pixel, pixel after pixel).
    #[allow(clippy::too_many_arguments)]
    pub fn from_columns(
        n_sources: usize,
        n_detectors: usize,
        n_bins: usize,
        n_pixels: usize,
        dt_ns: f64,
        resolution_cm: f64,
        radius_cm: f64,
        props: OpticalProperties,
        data: Vec<f32>,
    ) -> Result<Self> {
        let expected = n_sources * n_detectors * n_bins * n_pixels;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "jacobian entries",
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            n_sources,
            n_detectors,
            n_bins,
            n_pixels,
            dt_ns,
            resolution_cm,
            radius_cm,
            props,
            data,
            gram: OnceLock::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_sources * self.n_detectors * self.n_bins
    }

    pub fn row_index(&self, s: usize, d: usize, bin: usize) -> usize {
        (s * self.n_detectors + d) * self.n_bins + bin
    }

    pub fn column(&self, pixel: usize) -> &[f32] {
        let n = self.n_rows();
        &self.data[pixel * n..(pixel + 1) * n]
    }

    pub fn entry(&self, row: usize, pixel: usize) -> f32 {
        self.data[pixel * self.n_rows() + row]
    }

    /// Raw column-major storage.
    pub fn as_column_major(&self) -> &[f32] {
        &self.data
    }

    pub fn size_bytes(&self) -> u64 {
        self.data.len() as u64 * 4
    }

    /// `J·x` for a field on all active pixels.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_pixels {
            return Err(Error::DimensionMismatch {
                context: "jacobian apply",
                expected: self.n_pixels,
                actual: x.len(),
            });
        }
        let mut out = vec![0.0; self.n_rows()];
        for (pixel, &v) in x.iter().enumerate() {
            if v != 0.0 {
                axpy_f32(&mut out, v, self.column(pixel));
            }
        }
        Ok(out)
    }

    pub fn transpose_apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.n_rows() {
            return Err(Error::DimensionMismatch {
                context: "jacobian transpose apply",
                expected: self.n_rows(),
                actual: r.len(),
            });
        }
        Ok((0..self.n_pixels)
            .into_par_iter()
            .map(|p| dot_f32(self.column(p), r))
            .collect())
    }

    /// `JᵀJ` in double precision, row-major `n_pixels × n_pixels`. Built on
    /// first use and kept for the lifetime of the matrix.
    pub fn gram(&self) -> &[f64] {
        self.gram.get_or_init(|| {
            let (n, m) = (self.n_pixels, self.n_rows());
            // Column-major J is row-major Jᵀ.
            let jt = ArrayView2::from_shape((n, m), &self.data).expect("consistent shape");
            let mut g = Array2::<f64>::zeros((n, n));
            let mut k0 = 0;
            while k0 < m {
                let k1 = (k0 + GRAM_BLOCK_ROWS).min(m);
                let block = jt.slice(s![.., k0..k1]).mapv(|v| v as f64);
                ndarray::linalg::general_mat_mul(1.0, &block, &block.t(), 1.0, &mut g);
                k0 = k1;
            }
            g.into_raw_vec_and_offset().0
        })
    }

    /// `Σ_rows J²` per pixel.
    pub fn column_sq_norms(&self) -> Vec<f64> {
        (0..self.n_pixels)
            .into_par_iter()
            .map(|p| {
                self.column(p)
                    .iter()
                    .map(|&v| {
                        let v = v as f64;
                        v * v
                    })
                    .sum()
            })
            .collect()
    }
}

/// Sensitivity time series of one pixel for one source-detector pair, before
/// scaling by `−v·Δx²`. Symmetric in its two distances.
pub fn pair_sensitivity_kernel(
    rho_a: f64,
    rho_b: f64,
    props: &OpticalProperties,
    time: &TimeAxis,
) -> Vec<f64> {
    let (near, far) = if rho_a <= rho_b { (rho_a, rho_b) } else { (rho_b, rho_a) };
    let near_w = cell_integrated_green(near, time.n_bins(), time.dt_ns, props);
    let far_g = green_series(far, time, props);
    let mut out = vec![0.0; time.n_bins()];
    convolve_into(&near_w, &far_g, time.dt_ns, &mut out);
    out
}

fn fill_column(
    optodes: &OptodeArray,
    r: crate::geometry::Point2,
    props: &OpticalProperties,
    time: &TimeAxis,
    scale: f64,
    column: &mut [f32],
) {
    let n_bins = time.n_bins();
    let dist = |p: &crate::geometry::Point2| p.distance(r);
    let src_rho: Vec<f64> = optodes.sources.iter().map(dist).collect();
    let det_rho: Vec<f64> = optodes.detectors.iter().map(dist).collect();

    // Each optode contributes either its cell-integrated or its sampled kernel
    // depending on which side of the pair is nearer, so precompute both.
    let cell = |rho: f64| cell_integrated_green(rho, n_bins, time.dt_ns, props);
    let sampled = |rho: f64| green_series(rho, time, props);
    let src_cell: Vec<Vec<f64>> = src_rho.iter().map(|&p| cell(p)).collect();
    let src_samp: Vec<Vec<f64>> = src_rho.iter().map(|&p| sampled(p)).collect();
    let det_cell: Vec<Vec<f64>> = det_rho.iter().map(|&p| cell(p)).collect();
    let det_samp: Vec<Vec<f64>> = det_rho.iter().map(|&p| sampled(p)).collect();

    let mut buf = vec![0.0; n_bins];
    let n_det = optodes.n_detectors();
    for s in 0..optodes.n_sources() {
        for d in 0..n_det {
            let (near, far) = if src_rho[s] <= det_rho[d] {
                (&src_cell[s], &det_samp[d])
            } else {
                (&det_cell[d], &src_samp[s])
            };
            convolve_into(near, far, time.dt_ns, &mut buf);
            let start = (s * n_det + d) * n_bins;
            for (o, &v) in column[start..start + n_bins].iter_mut().zip(&buf) {
                *o = (scale * v) as f32;
            }
        }
    }
}

#[inline]
fn axpy_f32(out: &mut [f64], a: f64, col: &[f32]) {
    for (o, &c) in out.iter_mut().zip(col) {
        *o += a * c as f64;
    }
}

/// Dot product with four fixed-order partial sums.
#[inline]
fn dot_f32(col: &[f32], r: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut cc = col.chunks_exact(4);
    let mut rc = r.chunks_exact(4);
    for (c, x) in (&mut cc).zip(&mut rc) {
        for k in 0..4 {
            acc[k] += c[k] as f64 * x[k];
        }
    }
    let mut tail = 0.0;
    for (&c, &x) in cc.remainder().iter().zip(rc.remainder()) {
        tail += c as f64 * x;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Born prediction `baseline + J·Δμa`.
pub fn born_forward(j: &SensitivityMatrix, dmu: &[f64], baseline: &TpsfSet) -> Result<TpsfSet> {
    if baseline.len() != j.n_rows() {
        return Err(Error::DimensionMismatch {
            context: "born_forward baseline",
            expected: j.n_rows(),
            actual: baseline.len(),
        });
    }
    let delta = j.apply(dmu)?;
    let values = baseline
        .values
        .iter()
        .zip(&delta)
        .map(|(b, d)| b + d)
        .collect();
    Ok(TpsfSet {
        values,
        ..*baseline
    })
}
