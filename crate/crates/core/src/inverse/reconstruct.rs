use std::time::Instant;

use super::{backproject, backprojection_epsilon, find_peaks, AdamState, HyperParams, LossProblem};
use crate::error::{Error, Result};
use crate::forward::{SensitivityMatrix, TpsfSet};
use crate::geometry::{Domain, Grid, Point2};
use crate::splats::{Splat, SplatParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    pub data: f64,
    pub reg: f64,
    pub rep: f64,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// Best-loss iterate.
    pub params: SplatParams,
    /// `Δμa` of the best iterate on the active pixels.
    pub dmu: Vec<f64>,
    /// Background plus `dmu`.
    pub mu_a: Vec<f64>,
    pub trace: Vec<LossRecord>,
    pub best_iteration: usize,
    pub best_loss: f64,
    pub backprojection: Vec<f64>,
    pub initial_params: SplatParams,
    pub seeds_exhausted: bool,
    pub wall_time_s: f64,
}

/// Isotropic splats at the seed centers with amplitude `alpha_init` and scale `s_init`.
/// Seeds outside the allowed disc are pulled in first.
pub fn init_splats(
    centers: &[Point2],
    alpha_init: f64,
    s_init: f64,
    domain: &Domain,
    margin_cm: f64,
) -> Result<SplatParams> {
    let splats: Vec<Splat> = centers
        .iter()
        .map(|&c| Splat::isotropic(alpha_init, c, s_init))
        .collect();
    let mut params = SplatParams::encode(&splats)?;
    project_centers(&mut params, domain, margin_cm);
    Ok(params)
}

/// Radially pulls every center with `‖c − center‖ > R − margin` onto that circle.
pub fn project_centers(params: &mut SplatParams, domain: &Domain, margin_cm: f64) {
    let limit = (domain.radius_cm - margin_cm).max(0.0);
    for k in 0..params.n_splats() {
        let c = params.center(k);
        let rel = c.sub(domain.center);
        let r = rel.norm();
        if r > limit {
            let mut s = limit / r;
            let mut p = Point2::new(domain.center.x + rel.x * s, domain.center.y + rel.y * s);
            // Rounding can leave the rescaled point just outside; pull it in so a
            // second projection is a no-op.
            while p.sub(domain.center).norm() > limit {
                s *= 1.0 - f64::EPSILON;
                p = Point2::new(domain.center.x + rel.x * s, domain.center.y + rel.y * s);
            }
            params.set_center(k, p);
        }
    }
}

/// Backprojection, peak seeding and Adam iterations on the composite loss.
pub fn reconstruct(
    measured: &TpsfSet,
    baseline: &TpsfSet,
    jacobian: &SensitivityMatrix,
    grid: &Grid,
    domain: &Domain,
    hyper: &HyperParams,
) -> Result<ReconstructionResult> {
    hyper.validate()?;
    let start = Instant::now();

    let residual = measured.difference(baseline)?;
    let eps = backprojection_epsilon(&jacobian.column_sq_norms(), hyper.eps_bp_rel);
    let eps = if eps > 0.0 { eps } else { f64::MIN_POSITIVE };
    let bp = backproject(jacobian, &residual, eps)?;
    let seeds = find_peaks(&bp, grid, hyper.n_splats, hyper.peak_radius)?;
    if seeds.exhausted {
        log::warn!(
            "backprojection has fewer than {} positive peaks; extra splats seeded at residual maxima",
            hyper.n_splats
        );
    }
    let initial = init_splats(
        &seeds.centers,
        hyper.alpha_init,
        hyper.s_init,
        domain,
        hyper.center_margin,
    )?;

    let problem = LossProblem::new(jacobian, grid, measured, baseline, hyper)?;
    let mut params = initial.clone();
    let mut adam = AdamState::new(params.values.len());
    let mut trace = Vec::with_capacity(hyper.n_iters + 1);
    let mut best: Option<(f64, usize, SplatParams, Vec<f64>)> = None;

    for iteration in 0..=hyper.n_iters {
        let (loss, grad, field) = problem.evaluate(&params).map_err(|e| Error::Divergence {
            iteration,
            reason: e.to_string(),
            params: params.values.clone(),
        })?;
        let total = loss.total();
        trace.push(LossRecord {
            iteration,
            total,
            data: loss.data,
            reg: loss.reg,
            rep: loss.rep,
        });
        if best.as_ref().is_none_or(|b| total < b.0) {
            best = Some((total, iteration, params.clone(), field.field));
        }
        if iteration == hyper.n_iters {
            break;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                iteration,
                reason: "non-finite gradient".into(),
                params: params.values.clone(),
            });
        }
        adam.step(&mut params, &grad, hyper)?;
        project_centers(&mut params, domain, hyper.center_margin);
    }

    let (best_loss, best_iteration, params, dmu) = best.expect("at least one iteration");
    let background = jacobian.props.mu_a;
    let mu_a = dmu.iter().map(|v| background + v).collect();
    Ok(ReconstructionResult {
        params,
        dmu,
        mu_a,
        trace,
        best_iteration,
        best_loss,
        backprojection: bp,
        initial_params: initial,
        seeds_exhausted: seeds.exhausted,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
