//! Anisotropic Gaussian splats as an absorption-perturbation field.
//!
//! Each splat carries six unconstrained parameters, stored flat in the order
//! `(ln α, x, y, ln s_x, ln s_y, θ)`. The field value at `r` is
//! `α·exp(−½[u²/s_x² + v²/s_y²])` with `(u, v) = R(θ)(r − c)`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::geometry::{Grid, Point2};

pub const PARAMS_PER_SPLAT: usize = 6;

pub const LOG_AMPLITUDE: usize = 0;
pub const CENTER_X: usize = 1;
pub const CENTER_Y: usize = 2;
pub const LOG_SCALE_X: usize = 3;
pub const LOG_SCALE_Y: usize = 4;
pub const ANGLE: usize = 5;

/// Default support truncation in standard deviations.
pub const DEFAULT_N_SIGMA: f64 = 3.5;

/// A splat in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat {
    /// Peak absorption perturbation, cm⁻¹.
    pub alpha: f64,
    pub center: Point2,
    pub sx: f64,
    pub sy: f64,
    /// Orientation in `(−π/2, π/2]`.
    pub theta: f64,
}

impl Splat {
    pub fn isotropic(alpha: f64, center: Point2, scale: f64) -> Self {
        Self {
            alpha,
            center,
            sx: scale,
            sy: scale,
            theta: 0.0,
        }
    }

    #[inline]
    fn local(&self, p: Point2) -> (f64, f64) {
        let (sin, cos) = self.theta.sin_cos();
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        (cos * dx + sin * dy, -sin * dx + cos * dy)
    }

    /// Untruncated field value at `p`.
    pub fn value_at(&self, p: Point2) -> f64 {
        let (u, v) = self.local(p);
        self.alpha * (-0.5 * (u * u / (self.sx * self.sx) + v * v / (self.sy * self.sy))).exp()
    }

    /// Half-extents of the axis-aligned box around the `n_sigma` ellipse.
    pub fn bounding_half_extents(&self, n_sigma: f64) -> (f64, f64) {
        let (sin, cos) = self.theta.sin_cos();
        let (sx2, sy2) = (self.sx * self.sx, self.sy * self.sy);
        (
            n_sigma * (sx2 * cos * cos + sy2 * sin * sin).sqrt(),
            n_sigma * (sx2 * sin * sin + sy2 * cos * cos).sqrt(),
        )
    }
}

/// Wraps an angle into `(−π/2, π/2]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    if w <= -FRAC_PI_2 {
        w + PI
    } else {
        w
    }
}

/// The flat unconstrained parameter vector Θ of length `6K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatParams {
    pub values: Vec<f64>,
}

impl SplatParams {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() % PARAMS_PER_SPLAT != 0 {
            return Err(Error::invalid(format!(
                "parameter vector length {} is not a multiple of {PARAMS_PER_SPLAT}",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn encode(splats: &[Splat]) -> Result<Self> {
        let mut values = Vec::with_capacity(splats.len() * PARAMS_PER_SPLAT);
        for (k, s) in splats.iter().enumerate() {
            if !(s.alpha > 0.0 && s.sx > 0.0 && s.sy > 0.0) {
                return Err(Error::invalid(format!(
                    "splat {k} needs positive amplitude and scales"
                )));
            }
            values.extend_from_slice(&[
                s.alpha.ln(),
                s.center.x,
                s.center.y,
                s.sx.ln(),
                s.sy.ln(),
                s.theta,
            ]);
        }
        Ok(Self { values })
    }

    pub fn n_splats(&self) -> usize {
        self.values.len() / PARAMS_PER_SPLAT
    }

    pub fn splat_slice(&self, k: usize) -> &[f64] {
        &self.values[k * PARAMS_PER_SPLAT..(k + 1) * PARAMS_PER_SPLAT]
    }

    pub fn center(&self, k: usize) -> Point2 {
        let s = self.splat_slice(k);
        Point2::new(s[CENTER_X], s[CENTER_Y])
    }

    pub fn set_center(&mut self, k: usize, c: Point2) {
        self.values[k * PARAMS_PER_SPLAT + CENTER_X] = c.x;
        self.values[k * PARAMS_PER_SPLAT + CENTER_Y] = c.y;
    }

    /// Physical parameters: exponentials of the log entries, θ wrapped modulo π.
    pub fn decode(&self) -> Result<Vec<Splat>> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "parameter {i} (splat {}, slot {}) is not finite",
                i / PARAMS_PER_SPLAT,
                i % PARAMS_PER_SPLAT
            )));
        }
        Ok(self
            .values
            .chunks_exact(PARAMS_PER_SPLAT)
            .map(|p| Splat {
                alpha: p[LOG_AMPLITUDE].exp(),
                center: Point2::new(p[CENTER_X], p[CENTER_Y]),
                sx: p[LOG_SCALE_X].exp(),
                sy: p[LOG_SCALE_Y].exp(),
                theta: wrap_angle(p[ANGLE]),
            })
            .collect())
    }
}

/// Active-pixel positions inside the bounding box of the splat's `n_sigma` ellipse,
/// in increasing order.
pub fn splat_support(splat: &Splat, grid: &Grid, n_sigma: f64) -> Vec<usize> {
    let (hx, hy) = splat.bounding_half_extents(n_sigma);
    let c = splat.center;
    let (Some((c0, c1)), Some((r0, r1))) = (
        grid.col_span(c.x - hx, c.x + hx),
        grid.row_span(c.y - hy, c.y + hy),
    ) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity((c1 - c0 + 1) * (r1 - r0 + 1));
    for row in r0..=r1 {
        for col in c0..=c1 {
            if let Some(pos) = grid.active_position(row * grid.width + col) {
                out.push(pos);
            }
        }
    }
    out
}

/// Rasterized field on the active pixels plus each splat's support.
#[derive(Debug, Clone)]
pub struct SplatField {
    pub field: Vec<f64>,
    pub supports: Vec<Vec<usize>>,
}

impl SplatField {
    /// Sorted union of all supports.
    pub fn support_union(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.supports.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

pub fn rasterize(params: &SplatParams, grid: &Grid, n_sigma: f64) -> Result<SplatField> {
    let splats = params.decode()?;
    let mut field = vec![0.0; grid.n_active()];
    let mut supports = Vec::with_capacity(splats.len());
    for s in &splats {
        let support = splat_support(s, grid, n_sigma);
        for &pos in &support {
            field[pos] += s.value_at(grid.active_center(pos));
        }
        supports.push(support);
    }
    Ok(SplatField { field, supports })
}

/// Partials of the field with respect to one splat's six parameters, on its support.
#[derive(Debug, Clone)]
pub struct SplatGradient {
    pub support: Vec<usize>,
    /// `partials[i][p]` = ∂field(support[i]) / ∂Θ_p.
    pub partials: Vec<[f64; PARAMS_PER_SPLAT]>,
}

/// Value and unconstrained-parameter partials of one splat at `p`.
#[inline]
pub fn splat_value_and_partials(s: &Splat, p: Point2) -> (f64, [f64; PARAMS_PER_SPLAT]) {
    let (sin, cos) = s.theta.sin_cos();
    let (u, v) = s.local(p);
    let (isx2, isy2) = (1.0 / (s.sx * s.sx), 1.0 / (s.sy * s.sy));
    let g = s.alpha * (-0.5 * (u * u * isx2 + v * v * isy2)).exp();
    let mut d = [0.0; PARAMS_PER_SPLAT];
    d[LOG_AMPLITUDE] = g;
    d[CENTER_X] = g * (u * cos * isx2 - v * sin * isy2);
    d[CENTER_Y] = g * (u * sin * isx2 + v * cos * isy2);
    d[LOG_SCALE_X] = g * u * u * isx2;
    d[LOG_SCALE_Y] = g * v * v * isy2;
    d[ANGLE] = -g * u * v * (isx2 - isy2);
    (g, d)
}

/// Field and its analytic parameter gradients in one pass.
pub fn rasterize_with_gradients(
    params: &SplatParams,
    grid: &Grid,
    n_sigma: f64,
) -> Result<(SplatField, Vec<SplatGradient>)> {
    let splats = params.decode()?;
    let mut field = vec![0.0; grid.n_active()];
    let mut supports = Vec::with_capacity(splats.len());
    let mut grads = Vec::with_capacity(splats.len());
    for s in &splats {
        let support = splat_support(s, grid, n_sigma);
        let mut partials = Vec::with_capacity(support.len());
        for &pos in &support {
            let (g, d) = splat_value_and_partials(s, grid.active_center(pos));
            field[pos] += g;
            partials.push(d);
        }
        grads.push(SplatGradient {
            support: support.clone(),
            partials,
        });
        supports.push(support);
    }
    Ok((SplatField { field, supports }, grads))
}

pub fn field_param_gradients(
    params: &SplatParams,
    grid: &Grid,
    n_sigma: f64,
) -> Result<Vec<SplatGradient>> {
    rasterize_with_gradients(params, grid, n_sigma).map(|(_, g)| g)
}
