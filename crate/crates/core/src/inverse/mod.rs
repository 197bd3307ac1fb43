//! Splat-parameter inversion of Born-linearized TPSF data.

mod adam;
mod backproject;
mod loss;
mod peaks;
mod reconstruct;

pub use adam::AdamState;
pub use backproject::{backproject, backprojection_epsilon};
pub use loss::{loss_and_grad, repulsion, LossComponents, LossProblem};
pub use peaks::{find_peaks, PeakSeeds};
pub use reconstruct::{
    init_splats, project_centers, reconstruct, LossRecord, ReconstructionResult,
};

use crate::error::{Error, Result};
use crate::splats::{
    ANGLE, CENTER_X, CENTER_Y, DEFAULT_N_SIGMA, LOG_AMPLITUDE, LOG_SCALE_X, LOG_SCALE_Y,
    PARAMS_PER_SPLAT,
};

/// Loss weights, initialization and optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Weight of the log-amplitude / anisotropy regularizer.
    pub lambda_r: f64,
    /// Relative weight of the anisotropy penalty inside the regularizer.
    pub beta: f64,
    pub lambda_p: f64,
    /// Repulsion falloff, cm.
    pub rho_p: f64,
    /// Repulsion cutoff distance, cm.
    pub r_p: f64,
    /// Backprojection stabilizer relative to the largest column norm `max Σ J²`.
    pub eps_bp_rel: f64,
    pub n_splats: usize,
    pub lr_amplitude: f64,
    pub lr_center: f64,
    pub lr_scale: f64,
    pub lr_angle: f64,
    pub n_iters: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub alpha_init: f64,
    pub s_init: f64,
    pub n_sigma: f64,
    /// Disc cleared around each accepted backprojection peak, cm.
    pub peak_radius: f64,
    /// Splat centers are kept within `R − center_margin`.
    pub center_margin: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda_r: 0.0,
            beta: 1.0,
            lambda_p: 1e-3,
            rho_p: 0.3,
            r_p: 0.6,
            eps_bp_rel: 1e-12,
            n_splats: 1,
            lr_amplitude: 0.05,
            lr_center: 0.02,
            lr_scale: 0.02,
            lr_angle: 0.02,
            n_iters: 3000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            alpha_init: 0.005,
            s_init: 0.4,
            n_sigma: DEFAULT_N_SIGMA,
            peak_radius: 0.6,
            center_margin: 0.1,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("lambda_r", self.lambda_r),
            ("beta", self.beta),
            ("lambda_p", self.lambda_p),
            ("r_p", self.r_p),
            ("eps_bp_rel", self.eps_bp_rel),
            ("center_margin", self.center_margin),
            ("peak_radius", self.peak_radius),
            ("lr_amplitude", self.lr_amplitude),
            ("lr_center", self.lr_center),
            ("lr_scale", self.lr_scale),
            ("lr_angle", self.lr_angle),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        let positive = [
            ("rho_p", self.rho_p),
            ("alpha_init", self.alpha_init),
            ("s_init", self.s_init),
            ("n_sigma", self.n_sigma),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.n_splats == 0 {
            return Err(Error::invalid("need at least one splat"));
        }
        if self.n_iters == 0 {
            return Err(Error::invalid("need at least one iteration"));
        }
        Ok(())
    }

    /// Learning rate for parameter slot `i` of the flat vector.
    pub fn learning_rate(&self, i: usize) -> f64 {
        match i % PARAMS_PER_SPLAT {
            LOG_AMPLITUDE => self.lr_amplitude,
            CENTER_X | CENTER_Y => self.lr_center,
            LOG_SCALE_X | LOG_SCALE_Y => self.lr_scale,
            ANGLE => self.lr_angle,
            _ => unreachable!(),
        }
    }
}

/// Unknown counts of the splat and voxel parametrizations.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Compression {
    pub splat_unknowns: usize,
    pub grid_unknowns: usize,
    pub ratio: f64,
}

impl Compression {
    pub fn new(n_splats: usize, grid_unknowns: usize) -> Self {
        let splat_unknowns = PARAMS_PER_SPLAT * n_splats;
        Self {
            splat_unknowns,
            grid_unknowns,
            ratio: grid_unknowns as f64 / splat_unknowns as f64,
        }
    }
}
