//! Analytic time-domain diffusion forward model.
//!
//! Fluence follows the infinite-medium 2D Green's function; absorption
//! perturbations enter through a Born-linearized sensitivity matrix.

mod jacobian;
mod noise;
pub(crate) mod quadrature;

use std::f64::consts::PI;

pub use jacobian::{born_forward, pair_sensitivity_kernel, SensitivityMatrix, DEFAULT_MEMORY_BUDGET};
pub use noise::apply_noise;
pub use quadrature::{cell_integrated_green, exp_integral_e1};

use crate::error::{Error, Result};
use crate::geometry::{OptodeArray, TimeAxis};

/// Vacuum speed of light in cm/ns.
pub const SPEED_OF_LIGHT_CM_PER_NS: f64 = 29.979_245_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalProperties {
    /// Absorption coefficient, cm⁻¹.
    pub mu_a: f64,
    /// Reduced scattering coefficient, cm⁻¹.
    pub mu_s_prime: f64,
    pub refractive_index: f64,
}

impl Default for OpticalProperties {
    fn default() -> Self {
        Self {
            mu_a: 0.01,
            mu_s_prime: 10.0,
            refractive_index: 1.4,
        }
    }
}

impl OpticalProperties {
    pub fn new(mu_a: f64, mu_s_prime: f64, refractive_index: f64) -> Result<Self> {
        for (name, v) in [
            ("mu_a", mu_a),
            ("mu_s_prime", mu_s_prime),
            ("refractive_index", refractive_index),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if mu_a / mu_s_prime > 0.1 {
            log::warn!(
                "mu_a/mu_s' = {:.3}: the diffusion approximation needs scattering to dominate",
                mu_a / mu_s_prime
            );
        }
        Ok(Self {
            mu_a,
            mu_s_prime,
            refractive_index,
        })
    }

    /// 2D diffusion coefficient `1 / (2 μs')` in cm.
    pub fn diffusion(&self) -> f64 {
        1.0 / (2.0 * self.mu_s_prime)
    }

    /// Speed of light in the medium, cm/ns.
    pub fn speed(&self) -> f64 {
        SPEED_OF_LIGHT_CM_PER_NS / self.refractive_index
    }
}

/// Infinite-medium 2D time-domain Green's function for an impulse point source.
///
/// Returns 0 for `t <= 0`.
pub fn green2d(rho_cm: f64, t_ns: f64, props: &OpticalProperties) -> Result<f64> {
    if !(rho_cm.is_finite() && t_ns.is_finite()) {
        return Err(Error::invalid(format!(
            "green2d needs finite inputs, got rho={rho_cm}, t={t_ns}"
        )));
    }
    if rho_cm < 0.0 {
        return Err(Error::invalid(format!("negative distance {rho_cm}")));
    }
    Ok(green_unchecked(rho_cm, t_ns, props))
}

#[inline]
pub(crate) fn green_unchecked(rho_cm: f64, t_ns: f64, props: &OpticalProperties) -> f64 {
    if t_ns <= 0.0 {
        return 0.0;
    }
    let dv = props.diffusion() * props.speed();
    let norm = 1.0 / (4.0 * PI * dv * t_ns);
    norm * (-rho_cm * rho_cm / (4.0 * dv * t_ns) - props.mu_a * props.speed() * t_ns).exp()
}

/// `G(ρ, t_j)` at every bin time of the axis.
pub fn green_series(rho_cm: f64, time: &TimeAxis, props: &OpticalProperties) -> Vec<f64> {
    time.bin_times
        .iter()
        .map(|&t| green_unchecked(rho_cm, t, props))
        .collect()
}

/// Fluence time series for every source-detector pair, laid out `[source][detector][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TpsfSet {
    pub n_sources: usize,
    pub n_detectors: usize,
    pub n_bins: usize,
    pub dt_ns: f64,
    pub values: Vec<f64>,
}

impl TpsfSet {
    pub fn zeros(n_sources: usize, n_detectors: usize, n_bins: usize, dt_ns: f64) -> Self {
        Self {
            n_sources,
            n_detectors,
            n_bins,
            dt_ns,
            values: vec![0.0; n_sources * n_detectors * n_bins],
        }
    }

    pub fn from_values(
        n_sources: usize,
        n_detectors: usize,
        n_bins: usize,
        dt_ns: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = n_sources * n_detectors * n_bins;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "tpsf values",
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            n_sources,
            n_detectors,
            n_bins,
            dt_ns,
            values,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.n_sources * self.n_detectors
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pair(&self, s: usize, d: usize) -> &[f64] {
        let start = (s * self.n_detectors + d) * self.n_bins;
        &self.values[start..start + self.n_bins]
    }

    pub fn pair_mut(&mut self, s: usize, d: usize) -> &mut [f64] {
        let start = (s * self.n_detectors + d) * self.n_bins;
        &mut self.values[start..start + self.n_bins]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_shape(&self, other: &TpsfSet) -> bool {
        self.n_sources == other.n_sources
            && self.n_detectors == other.n_detectors
            && self.n_bins == other.n_bins
    }

    /// Copy with negative entries set to zero. The Born prediction can undershoot
    /// zero in the earliest bins, where the baseline itself is vanishingly small.
    pub fn clamped_non_negative(&self) -> TpsfSet {
        TpsfSet {
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
            ..*self
        }
    }

    /// Elementwise `self - other`.
    pub fn difference(&self, other: &TpsfSet) -> Result<TpsfSet> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch {
                context: "tpsf difference",
                expected: self.len(),
                actual: other.len(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(TpsfSet { values, ..*self })
    }
}

/// Noise-free boundary TPSFs of the homogeneous background.
pub fn baseline_tpsf(
    optodes: &OptodeArray,
    props: &OpticalProperties,
    time: &TimeAxis,
) -> TpsfSet {
    let mut set = TpsfSet::zeros(
        optodes.n_sources(),
        optodes.n_detectors(),
        time.n_bins(),
        time.dt_ns,
    );
    for (s, src) in optodes.sources.iter().enumerate() {
        for (d, det) in optodes.detectors.iter().enumerate() {
            let rho = src.distance(*det);
            for (out, &t) in set.pair_mut(s, d).iter_mut().zip(&time.bin_times) {
                *out = green_unchecked(rho, t, props);
            }
        }
    }
    set
}

/// Causal discrete convolution `out[j] = dt · Σ_{m=0..=j} a[m]·b[j−m]`.
pub fn temporal_convolve(a: &[f64], b: &[f64], dt_ns: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "temporal_convolve",
            expected: a.len(),
            actual: b.len(),
        });
    }
    if !(dt_ns.is_finite() && dt_ns > 0.0) {
        return Err(Error::invalid(format!("bin width must be positive, got {dt_ns}")));
    }
    let mut out = vec![0.0; a.len()];
    convolve_into(a, b, dt_ns, &mut out);
    Ok(out)
}

/// Unchecked kernel of [`temporal_convolve`]; every `out[j]` accumulates in order of `m`.
pub(crate) fn convolve_into(a: &[f64], b: &[f64], dt_ns: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (m, &am) in a.iter().enumerate() {
        if am == 0.0 {
            continue;
        }
        for (o, &bv) in out[m..].iter_mut().zip(b) {
            *o += am * bv;
        }
    }
    out.iter_mut().for_each(|o| *o *= dt_ns);
}
