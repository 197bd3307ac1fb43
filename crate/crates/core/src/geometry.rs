//! Imaging domain, pixel raster, optode ring and time axis.
//!
//! All lengths are in centimetres and all times in nanoseconds.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sub(self, other: Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }
}

/// Circular tissue cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub radius_cm: f64,
    pub center: Point2,
}

impl Domain {
    pub fn new(radius_cm: f64) -> Result<Self> {
        Self::with_center(radius_cm, Point2::ORIGIN)
    }

    pub fn with_center(radius_cm: f64, center: Point2) -> Result<Self> {
        if !(radius_cm.is_finite() && radius_cm > 0.0) {
            return Err(Error::invalid(format!(
                "domain radius must be positive, got {radius_cm}"
            )));
        }
        Ok(Self { radius_cm, center })
    }

    pub fn contains(&self, p: Point2, margin_cm: f64) -> bool {
        p.distance(self.center) <= self.radius_cm - margin_cm
    }
}

impl Default for Domain {
    fn default() -> Self {
        Self {
            radius_cm: 3.0,
            center: Point2::ORIGIN,
        }
    }
}

/// Square raster over the bounding box of the domain with an active-pixel mask.
///
/// Pixels are stored row-major with row 0 at the smallest `y`.
#[derive(Debug, Clone)]
pub struct Grid {
    pub resolution_cm: f64,
    pub width: usize,
    pub height: usize,
    /// Lower-left corner of the raster.
    pub origin: Point2,
    pub pixel_centers: Vec<Point2>,
    pub active_mask: Vec<bool>,
    pub active_indices: Vec<usize>,
    /// Raster index -> position in `active_indices`.
    active_lookup: Vec<Option<usize>>,
}

// Absorbs round-off in `(i + 0.5) * res` so pixels exactly on the rim stay active.
const RIM_TOLERANCE: f64 = 1e-12;

impl Grid {
    /// Builds the raster covering the domain's bounding square. A pixel is active
    /// when its center lies within `radius - margin_cm` of the domain center.
    pub fn build(domain: &Domain, resolution_cm: f64, margin_cm: f64) -> Result<Self> {
        if !(resolution_cm.is_finite() && resolution_cm > 0.0) {
            return Err(Error::invalid(format!(
                "grid resolution must be positive, got {resolution_cm}"
            )));
        }
        if !(margin_cm.is_finite() && margin_cm >= 0.0) {
            return Err(Error::invalid(format!(
                "grid margin must be non-negative, got {margin_cm}"
            )));
        }
        let diameter = 2.0 * domain.radius_cm;
        let n = (diameter / resolution_cm).round() as usize;
        if n < 2 {
            return Err(Error::invalid(format!(
                "resolution {resolution_cm} cm gives fewer than 2 pixels across a {diameter} cm domain"
            )));
        }
        // Keep the raster centered on the domain even if res does not divide the diameter.
        let half = 0.5 * n as f64 * resolution_cm;
        let origin = Point2::new(domain.center.x - half, domain.center.y - half);
        let limit = domain.radius_cm - margin_cm;

        let mut pixel_centers = Vec::with_capacity(n * n);
        let mut active_mask = Vec::with_capacity(n * n);
        let mut active_indices = Vec::new();
        let mut active_lookup = vec![None; n * n];
        for row in 0..n {
            let y = origin.y + (row as f64 + 0.5) * resolution_cm;
            for col in 0..n {
                let x = origin.x + (col as f64 + 0.5) * resolution_cm;
                let p = Point2::new(x, y);
                let idx = row * n + col;
                let active = p.distance(domain.center) <= limit + RIM_TOLERANCE * domain.radius_cm;
                if active {
                    active_lookup[idx] = Some(active_indices.len());
                    active_indices.push(idx);
                }
                pixel_centers.push(p);
                active_mask.push(active);
            }
        }
        Ok(Self {
            resolution_cm,
            width: n,
            height: n,
            origin,
            pixel_centers,
            active_mask,
            active_indices,
            active_lookup,
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn n_active(&self) -> usize {
        self.active_indices.len()
    }

    pub fn pixel_area(&self) -> f64 {
        self.resolution_cm * self.resolution_cm
    }

    pub fn center(&self, idx: usize) -> Point2 {
        self.pixel_centers[idx]
    }

    /// Center of the `k`-th active pixel.
    pub fn active_center(&self, k: usize) -> Point2 {
        self.pixel_centers[self.active_indices[k]]
    }

    pub fn active_position(&self, idx: usize) -> Option<usize> {
        self.active_lookup.get(idx).copied().flatten()
    }

    pub fn row_col(&self, idx: usize) -> (usize, usize) {
        (idx / self.width, idx % self.width)
    }

    /// Raster index of the pixel containing `p`, or `None` outside the raster.
    pub fn nearest_pixel(&self, p: Point2) -> Option<usize> {
        let fx = (p.x - self.origin.x) / self.resolution_cm;
        let fy = (p.y - self.origin.y) / self.resolution_cm;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (col, row) = (fx.floor() as usize, fy.floor() as usize);
        (col < self.width && row < self.height).then(|| row * self.width + col)
    }

    /// Column range `[lo, hi]` of pixels whose centers fall in `[xmin, xmax]`, if any.
    pub(crate) fn col_span(&self, xmin: f64, xmax: f64) -> Option<(usize, usize)> {
        span(xmin, xmax, self.origin.x, self.resolution_cm, self.width)
    }

    pub(crate) fn row_span(&self, ymin: f64, ymax: f64) -> Option<(usize, usize)> {
        span(ymin, ymax, self.origin.y, self.resolution_cm, self.height)
    }

    /// Scatters a field defined on active pixels into a full raster, zero elsewhere.
    pub fn to_raster(&self, active_values: &[f64]) -> Result<Vec<f64>> {
        if active_values.len() != self.n_active() {
            return Err(Error::DimensionMismatch {
                context: "active field",
                expected: self.n_active(),
                actual: active_values.len(),
            });
        }
        let mut out = vec![0.0; self.n_pixels()];
        for (&idx, &v) in self.active_indices.iter().zip(active_values) {
            out[idx] = v;
        }
        Ok(out)
    }
}

fn span(lo: f64, hi: f64, origin: f64, res: f64, n: usize) -> Option<(usize, usize)> {
    // Pixel k has its center at origin + (k + 0.5) res.
    let first = ((lo - origin) / res - 0.5).ceil().max(0.0);
    let last = ((hi - origin) / res - 0.5).floor().min(n as f64 - 1.0);
    if !(first.is_finite() && last.is_finite()) || first > last {
        return None;
    }
    Some((first as usize, last as usize))
}

/// Sources and detectors on the domain boundary.
#[derive(Debug, Clone)]
pub struct OptodeArray {
    pub sources: Vec<Point2>,
    pub detectors: Vec<Point2>,
}

impl OptodeArray {
    /// Places sources at angles `2πk/n_src` and detectors at `2πk/n_det + π/n_det`,
    /// so the two rings interleave.
    pub fn place(n_src: usize, n_det: usize, domain: &Domain) -> Result<Self> {
        if n_src == 0 || n_det == 0 {
            return Err(Error::invalid(format!(
                "need at least one source and one detector, got {n_src} and {n_det}"
            )));
        }
        let ring = |n: usize, offset: f64| -> Vec<Point2> {
            (0..n)
                .map(|k| {
                    let phi = 2.0 * PI * k as f64 / n as f64 + offset;
                    Point2::new(
                        domain.center.x + domain.radius_cm * phi.cos(),
                        domain.center.y + domain.radius_cm * phi.sin(),
                    )
                })
                .collect()
        };
        Ok(Self {
            sources: ring(n_src, 0.0),
            detectors: ring(n_det, PI / n_det as f64),
        })
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n_detectors(&self) -> usize {
        self.detectors.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.sources.len() * self.detectors.len()
    }
}

/// Uniform time bins sampled at their right edges `(j + 1)·dt`.
#[derive(Debug, Clone)]
pub struct TimeAxis {
    pub t_total_ns: f64,
    pub dt_ns: f64,
    pub bin_times: Vec<f64>,
}

impl TimeAxis {
    pub fn new(t_total_ns: f64, dt_ns: f64) -> Result<Self> {
        if !(dt_ns.is_finite() && t_total_ns.is_finite() && dt_ns > 0.0) {
            return Err(Error::invalid(format!(
                "time axis needs finite positive dt, got dt={dt_ns}, T={t_total_ns}"
            )));
        }
        if dt_ns > t_total_ns {
            return Err(Error::invalid(format!(
                "bin width {dt_ns} ns exceeds the window {t_total_ns} ns"
            )));
        }
        let n_bins = (t_total_ns / dt_ns).round() as usize;
        let bin_times = (0..n_bins).map(|j| (j + 1) as f64 * dt_ns).collect();
        Ok(Self {
            t_total_ns,
            dt_ns,
            bin_times,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.bin_times.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_grid_keeps_all_four_centers() {
        // Centers sit at 1.5·√2 ≈ 2.12 cm, inside the 3 cm disc.
        let g = Grid::build(&Domain::new(3.0).unwrap(), 3.0, 0.0).unwrap();
        assert_eq!((g.width, g.height), (2, 2));
        assert_eq!(g.n_active(), 4);
        let tight = Grid::build(&Domain::new(3.0).unwrap(), 3.0, 0.9).unwrap();
        assert_eq!(tight.n_active(), 0);
        for p in &g.pixel_centers {
            assert!((p.norm() - 1.5 * 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn fine_grid_matches_brute_force_count() {
        let g = Grid::build(&Domain::new(3.0).unwrap(), 0.1, 0.0).unwrap();
        assert_eq!(g.width, 60);
        // Independent count over integer lattice: centers at (i + 0.5) / 10 - 3.
        let mut count = 0;
        for i in 0..60i64 {
            for j in 0..60i64 {
                let (x, y) = (2 * i - 59, 2 * j - 59); // 20x the center coordinates
                if x * x + y * y <= 3600 {
                    count += 1;
                }
            }
        }
        assert_eq!(g.n_active(), count);
        assert!((g.n_active() as f64 - 2827.0).abs() <= 2.0, "{}", g.n_active());
    }

    #[test]
    fn mask_is_mirror_symmetric() {
        for res in [0.1, 0.25, 0.3, 0.7] {
            let g = Grid::build(&Domain::new(3.0).unwrap(), res, 0.0).unwrap();
            for row in 0..g.height {
                for col in 0..g.width {
                    let m = g.active_mask[row * g.width + col];
                    assert_eq!(m, g.active_mask[row * g.width + (g.width - 1 - col)]);
                    assert_eq!(m, g.active_mask[(g.height - 1 - row) * g.width + col]);
                }
            }
        }
    }

    #[test]
    fn margin_shrinks_active_set() {
        let d = Domain::new(3.0).unwrap();
        let a = Grid::build(&d, 0.1, 0.0).unwrap();
        let b = Grid::build(&d, 0.1, 0.35).unwrap();
        assert!(b.n_active() < a.n_active());
        for &i in &b.active_indices {
            assert!(b.center(i).norm() <= 2.65 + 1e-9);
        }
    }

    #[test]
    fn bad_resolution_rejected() {
        let d = Domain::new(3.0).unwrap();
        assert!(matches!(Grid::build(&d, 0.0, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(Grid::build(&d, -0.1, 0.0), Err(Error::InvalidArgument(_))));
        assert!(Grid::build(&d, 5.0, 0.0).is_err());
    }

    #[test]
    fn pixel_round_trip() {
        let g = Grid::build(&Domain::new(3.0).unwrap(), 0.1, 0.0).unwrap();
        for idx in 0..g.n_pixels() {
            assert_eq!(g.nearest_pixel(g.center(idx)), Some(idx));
        }
        assert_eq!(g.nearest_pixel(Point2::new(3.5, 0.0)), None);
    }

    #[test]
    fn optodes_on_rim_and_interleaved() {
        let d = Domain::new(3.0).unwrap();
        let o = OptodeArray::place(10, 10, &d).unwrap();
        for p in o.sources.iter().chain(&o.detectors) {
            assert!((p.norm() - 3.0).abs() < 1e-12);
        }
        let mut min = f64::INFINITY;
        for s in &o.sources {
            for q in &o.detectors {
                min = min.min(s.distance(*q));
            }
        }
        assert!(min > 0.9, "{min}");

        let single = OptodeArray::place(1, 1, &d).unwrap();
        assert_eq!(single.sources[0], Point2::new(3.0, 0.0));
        assert!((single.detectors[0].x + 3.0).abs() < 1e-12);
        assert!(single.detectors[0].y.abs() < 1e-12);
        assert!(OptodeArray::place(0, 10, &d).is_err());
    }

    #[test]
    fn time_axis_bins() {
        let t = TimeAxis::new(6.0, 0.02).unwrap();
        assert_eq!(t.n_bins(), 300);
        assert!((t.bin_times[0] - 0.02).abs() < 1e-15);
        assert!((t.bin_times[299] - 6.0).abs() < 1e-12);
        assert!((t.n_bins() as f64 * t.dt_ns - 6.0).abs() < 1e-12);

        let one = TimeAxis::new(1.0, 1.0).unwrap();
        assert_eq!(one.bin_times, vec![1.0]);
        assert!(TimeAxis::new(1.0, 2.0).is_err());
        assert!(TimeAxis::new(1.0, 0.0).is_err());
    }
}
