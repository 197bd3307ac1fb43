use rayon::prelude::*;

use super::HyperParams;
use crate::error::{Error, Result};
use crate::forward::{SensitivityMatrix, TpsfSet};
use crate::geometry::Grid;
use crate::splats::{
    rasterize_with_gradients, SplatField, SplatParams, CENTER_X, CENTER_Y, LOG_AMPLITUDE,
    LOG_SCALE_X, LOG_SCALE_Y, PARAMS_PER_SPLAT,
};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub data: f64,
    pub reg: f64,
    pub rep: f64,
}

impl LossComponents {
    pub fn total(&self) -> f64 {
        self.data + self.reg + self.rep
    }
}

/// Fixed inputs of the composite loss.
///
/// The data term is expanded as `(‖o‖² + 2 bᵀf + fᵀ(JᵀJ) f) / 2η` with
/// `o = baseline − measured` and `b = Jᵀo`, so one iteration only touches the
/// Gram block of the pixels the splats cover.
pub struct LossProblem<'a> {
    pub jacobian: &'a SensitivityMatrix,
    pub grid: &'a Grid,
    pub hyper: &'a HyperParams,
    /// `Jᵀ(baseline − measured)` per active pixel.
    jt_offset: Vec<f64>,
    /// `‖baseline − measured‖²`.
    offset_sq: f64,
    /// `max(Φ_meas)² · N_s · N_d`.
    pub eta: f64,
}

impl<'a> LossProblem<'a> {
    pub fn new(
        jacobian: &'a SensitivityMatrix,
        grid: &'a Grid,
        measured: &TpsfSet,
        baseline: &TpsfSet,
        hyper: &'a HyperParams,
    ) -> Result<Self> {
        for (context, set) in [("loss measured data", measured), ("loss baseline", baseline)] {
            if set.len() != jacobian.n_rows() {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: jacobian.n_rows(),
                    actual: set.len(),
                });
            }
        }
        if grid.n_active() != jacobian.n_pixels {
            return Err(Error::DimensionMismatch {
                context: "loss grid",
                expected: jacobian.n_pixels,
                actual: grid.n_active(),
            });
        }
        let peak = measured.max_value();
        let eta = peak * peak * measured.n_pairs() as f64;
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::invalid(format!(
                "measured data must have a positive finite maximum, got {peak}"
            )));
        }
        let offset: Vec<f64> = baseline
            .values
            .iter()
            .zip(&measured.values)
            .map(|(b, m)| b - m)
            .collect();
        let offset_sq = offset.iter().map(|o| o * o).sum();
        let jt_offset = jacobian.transpose_apply(&offset)?;
        // Build the Gram matrix up front so the first iteration is not an outlier.
        jacobian.gram();
        Ok(Self {
            jacobian,
            grid,
            hyper,
            jt_offset,
            offset_sq,
            eta,
        })
    }

    /// Loss components and the gradient with respect to the flat parameter vector.
    pub fn evaluate(&self, params: &SplatParams) -> Result<(LossComponents, Vec<f64>, SplatField)> {
        let h = self.hyper;
        let (field, grads) = rasterize_with_gradients(params, self.grid, h.n_sigma)?;
        let mut grad = vec![0.0; params.values.len()];

        // Data term through the pixels any splat touches.
        let pixels = field.support_union();
        let values: Vec<f64> = pixels.iter().map(|&p| field.field[p]).collect();
        let gram = self.jacobian.gram();
        let n = self.jacobian.n_pixels;
        let gf: Vec<f64> = pixels
            .par_iter()
            .map(|&p| {
                let row = &gram[p * n..(p + 1) * n];
                pixels.iter().zip(&values).map(|(&q, &v)| row[q] * v).sum()
            })
            .collect();
        let mut quad = 0.0;
        let mut field_grad = vec![0.0; self.grid.n_active()];
        for ((&p, &v), &g) in pixels.iter().zip(&values).zip(&gf) {
            let b = self.jt_offset[p];
            quad += v * (2.0 * b + g);
            field_grad[p] = (b + g) / self.eta;
        }
        let data = (self.offset_sq + quad) / (2.0 * self.eta);
        check("data", data)?;

        for (k, sg) in grads.iter().enumerate() {
            let slot = &mut grad[k * PARAMS_PER_SPLAT..(k + 1) * PARAMS_PER_SPLAT];
            for (&p, partial) in sg.support.iter().zip(&sg.partials) {
                let fg = field_grad[p];
                for (g, d) in slot.iter_mut().zip(partial) {
                    *g += fg * d;
                }
            }
        }

        let reg = regularizer(params, h, &mut grad);
        check("reg", reg)?;
        let rep = repulsion(params, h, Some(&mut grad));
        check("rep", rep)?;

        Ok((LossComponents { data, reg, rep }, grad, field))
    }
}

fn check(term: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { term, value })
    }
}

/// `λ_r [Σ ln(α)² + β Σ (ln s_x − ln s_y)²]`, accumulating its gradient.
fn regularizer(params: &SplatParams, h: &HyperParams, grad: &mut [f64]) -> f64 {
    let mut loss = 0.0;
    for k in 0..params.n_splats() {
        let p = params.splat_slice(k);
        let base = k * PARAMS_PER_SPLAT;
        let a = p[LOG_AMPLITUDE];
        let aniso = p[LOG_SCALE_X] - p[LOG_SCALE_Y];
        loss += a * a + h.beta * aniso * aniso;
        grad[base + LOG_AMPLITUDE] += 2.0 * h.lambda_r * a;
        grad[base + LOG_SCALE_X] += 2.0 * h.lambda_r * h.beta * aniso;
        grad[base + LOG_SCALE_Y] -= 2.0 * h.lambda_r * h.beta * aniso;
    }
    h.lambda_r * loss
}

/// Pairwise Gaussian repulsion between centers closer than `r_p`. The hard
/// cutoff contributes no gradient.
pub fn repulsion(params: &SplatParams, h: &HyperParams, mut grad: Option<&mut [f64]>) -> f64 {
    let n = params.n_splats();
    let inv = 1.0 / (2.0 * h.rho_p * h.rho_p);
    let mut loss = 0.0;
    for a in 0..n {
        let ca = params.center(a);
        for b in a + 1..n {
            let cb = params.center(b);
            let d = ca.distance(cb);
            if d >= h.r_p {
                continue;
            }
            let e = h.lambda_p * (-(d * d) * inv).exp();
            loss += e;
            if let Some(g) = grad.as_deref_mut() {
                // ∂/∂c_a of exp(−|c_a − c_b|²/(2ρ²)) = −e (c_a − c_b)/ρ².
                let f = -2.0 * inv * e;
                let (dx, dy) = (ca.x - cb.x, ca.y - cb.y);
                g[a * PARAMS_PER_SPLAT + CENTER_X] += f * dx;
                g[a * PARAMS_PER_SPLAT + CENTER_Y] += f * dy;
                g[b * PARAMS_PER_SPLAT + CENTER_X] -= f * dx;
                g[b * PARAMS_PER_SPLAT + CENTER_Y] -= f * dy;
            }
        }
    }
    loss
}

/// Convenience wrapper returning `(components, gradient)`.
pub fn loss_and_grad(
    params: &SplatParams,
    jacobian: &SensitivityMatrix,
    grid: &Grid,
    measured: &TpsfSet,
    baseline: &TpsfSet,
    hyper: &HyperParams,
) -> Result<(LossComponents, Vec<f64>)> {
    let problem = LossProblem::new(jacobian, grid, measured, baseline, hyper)?;
    let (c, g, _) = problem.evaluate(params)?;
    Ok((c, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::splats::Splat;

    fn two(c0: Point2, c1: Point2) -> SplatParams {
        SplatParams::encode(&[
            Splat::isotropic(0.01, c0, 0.3),
            Splat::isotropic(0.02, c1, 0.4),
        ])
        .unwrap()
    }

    #[test]
    fn repulsion_cutoff_is_exact() {
        let h = HyperParams::default();
        let p = two(Point2::new(0.0, 0.0), Point2::new(0.61, 0.0));
        assert_eq!(repulsion(&p, &h, None), 0.0);
        let q = two(Point2::new(0.0, 0.0), Point2::new(0.59, 0.0));
        assert!(repulsion(&q, &h, None) > 0.0);
    }

    #[test]
    fn repulsion_gradient_is_antisymmetric() {
        let h = HyperParams::default();
        let p = two(Point2::new(0.1, -0.2), Point2::new(0.3, 0.05));
        let mut g = vec![0.0; 12];
        repulsion(&p, &h, Some(&mut g));
        assert_eq!(g[CENTER_X], -g[PARAMS_PER_SPLAT + CENTER_X]);
        assert_eq!(g[CENTER_Y], -g[PARAMS_PER_SPLAT + CENTER_Y]);
        assert!(g[CENTER_X] != 0.0);
        // Relabeling leaves the value unchanged.
        let swapped = two(Point2::new(0.3, 0.05), Point2::new(0.1, -0.2));
        assert_eq!(repulsion(&p, &h, None), repulsion(&swapped, &h, None));
    }

    #[test]
    fn regularizer_closed_form_gradient() {
        let h = HyperParams {
            lambda_r: 0.3,
            beta: 2.0,
            ..HyperParams::default()
        };
        let p = SplatParams::new(vec![-3.0, 0.0, 0.0, -1.0, -1.5, 0.2]).unwrap();
        let mut g = vec![0.0; 6];
        let l = regularizer(&p, &h, &mut g);
        assert!((l - 0.3 * (9.0 + 2.0 * 0.25)).abs() < 1e-15);
        assert_eq!(g[LOG_AMPLITUDE], 2.0 * 0.3 * -3.0);
        assert_eq!(g[LOG_SCALE_X], 2.0 * 0.3 * 2.0 * 0.5);
        assert_eq!(g[LOG_SCALE_Y], -2.0 * 0.3 * 2.0 * 0.5);
        assert_eq!(g[CENTER_X], 0.0);
    }
}
