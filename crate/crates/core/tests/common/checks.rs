//! Whole checks reused by the focused tests and the acceptance run.

use gsdot_core::forward::{born_forward, pair_sensitivity_kernel, OpticalProperties, TpsfSet};
use gsdot_core::geometry::{Domain, Grid, OptodeArray, Point2, TimeAxis};
use gsdot_core::inverse::{loss_and_grad, HyperParams};
use gsdot_core::phantoms::{make_phantom, PhantomCase, PhantomSpec};
use gsdot_core::splats::{Splat, SplatParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Small;

pub fn measured(s: &Small) -> TpsfSet {
    let gt = make_phantom(&PhantomSpec::default_for(PhantomCase::ThreeCircles), &s.grid, &s.domain).unwrap();
    born_forward(&s.j, &gt, &s.baseline).unwrap()
}

pub fn random_params(rng: &mut ChaCha8Rng) -> SplatParams {
    let k = rng.random_range(1..=4);
    let splats: Vec<Splat> = (0..k)
        .map(|_| {
            let r = rng.random_range(0.0..2.0);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            Splat {
                alpha: rng.random_range(0.003..0.03),
                center: Point2::new(r * phi.cos(), r * phi.sin()),
                sx: rng.random_range(0.25..0.8),
                sy: rng.random_range(0.25..0.8),
                theta: rng.random_range(-1.5..1.5),
            }
        })
        .collect();
    SplatParams::encode(&splats).unwrap()
}

pub fn hyper(k: usize) -> HyperParams {
    HyperParams {
        lambda_r: 1e-4,
        beta: 1.0,
        lambda_p: 1e-3,
        n_splats: k,
        ..HyperParams::default()
    }
}

/// Loss written out directly: full residual, closed-form regularizer and repulsion.
pub fn direct_loss(s: &Small, meas: &TpsfSet, hp: &HyperParams, p: &SplatParams) -> f64 {
    let splats = p.decode().unwrap();
    let mut field = vec![0.0; s.grid.n_active()];
    for sp in &splats {
        let (hx, hy) = sp.bounding_half_extents(hp.n_sigma);
        for (k, f) in field.iter_mut().enumerate() {
            let c = s.grid.active_center(k);
            if (c.x - sp.center.x).abs() <= hx && (c.y - sp.center.y).abs() <= hy {
                *f += sp.value_at(c);
            }
        }
    }
    let pred = born_forward(&s.j, &field, &s.baseline).unwrap();
    let peak = meas.max_value();
    let eta = peak * peak * meas.n_pairs() as f64;
    let data: f64 = pred
        .values
        .iter()
        .zip(&meas.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / (2.0 * eta);
    let mut reg = 0.0;
    let mut rep = 0.0;
    for k in 0..p.n_splats() {
        let v = p.splat_slice(k);
        reg += v[0] * v[0] + hp.beta * (v[3] - v[4]) * (v[3] - v[4]);
        for m in k + 1..p.n_splats() {
            let d = p.center(k).distance(p.center(m));
            if d < hp.r_p {
                rep += hp.lambda_p * (-d * d / (2.0 * hp.rho_p * hp.rho_p)).exp();
            }
        }
    }
    data + hp.lambda_r * reg + rep
}

/// Worst relative error `‖g − fd‖ / ‖fd‖` of the analytic gradient against
/// central differences of [`direct_loss`] over `n_configs` random splat sets.
pub fn worst_gradient_error(s: &Small, n_configs: usize, seed: u64) -> f64 {
    let meas = measured(s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h_step = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..n_configs {
        let params = random_params(&mut rng);
        let hp = hyper(params.n_splats());
        let (_, grad) = loss_and_grad(&params, &s.j, &s.grid, &meas, &s.baseline, &hp).unwrap();
        let fd: Vec<f64> = (0..params.values.len())
            .map(|i| {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus.values[i] += h_step;
                minus.values[i] -= h_step;
                (direct_loss(s, &meas, &hp, &plus) - direct_loss(s, &meas, &hp, &minus)) / (2.0 * h_step)
            })
            .collect();
        let diff = grad.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    worst
}

/// Worst relative error of discrete sensitivity entries at their peak bin
/// against the `Δt/16` oracle, over `n` random (source, detector, pixel) tuples
/// of the default geometry. Also returns the oracle's own `Δt/16` vs `Δt/32` drift.
pub fn worst_oracle_error(n: usize, seed: u64) -> (f64, f64) {
    let domain = Domain::new(3.0).unwrap();
    let grid = Grid::build(&domain, 0.1, 0.0).unwrap();
    let optodes = OptodeArray::place(10, 10, &domain).unwrap();
    let time = TimeAxis::new(6.0, 0.02).unwrap();
    let props = OpticalProperties::default();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut drift): (f64, f64) = (0.0, 0.0);
    for _ in 0..n {
        let s = rng.random_range(0..optodes.n_sources());
        let d = rng.random_range(0..optodes.n_detectors());
        let r = grid.active_center(rng.random_range(0..grid.n_active()));
        let (ra, rb) = (optodes.sources[s].distance(r), optodes.detectors[d].distance(r));
        let discrete = pair_sensitivity_kernel(ra, rb, &props, &time);
        let peak = (0..discrete.len())
            .max_by(|&a, &b| discrete[a].total_cmp(&discrete[b]))
            .unwrap();
        let t = time.bin_times[peak];
        let fine = super::oracle_convolution(ra, rb, t, time.dt_ns / 16.0);
        let finer = super::oracle_convolution(ra, rb, t, time.dt_ns / 32.0);
        drift = drift.max((fine - finer).abs() / finer);
        worst = worst.max((discrete[peak] - fine).abs() / fine);
    }
    (worst, drift)
}
