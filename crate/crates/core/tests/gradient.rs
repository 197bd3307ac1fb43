mod common;

use gsdot_core::forward::{born_forward, SensitivityMatrix, TpsfSet};
use gsdot_core::geometry::Point2;
use gsdot_core::inverse::{loss_and_grad, repulsion};
use gsdot_core::splats::{rasterize_with_gradients, Splat, SplatParams, PARAMS_PER_SPLAT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::checks::{hyper, measured, random_params};

#[test]
fn analytic_gradient_matches_central_differences() {
    let s = common::small();
    let worst = common::checks::worst_gradient_error(&s, 20, 3);
    println!("worst relative gradient error {worst:.2e}");
    assert!(worst < 1e-5, "relative error {worst:.2e}");
}

#[test]
fn gram_form_matches_direct_residual() {
    let s = common::small();
    let meas = measured(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let params = random_params(&mut rng);
        let hp = hyper(params.n_splats());
        let (loss, grad) = loss_and_grad(&params, &s.j, &s.grid, &meas, &s.baseline, &hp).unwrap();

        // Direct evaluation: residual through the full matrix product.
        let (field, partials) = rasterize_with_gradients(&params, &s.grid, hp.n_sigma).unwrap();
        let pred = born_forward(&s.j, &field.field, &s.baseline).unwrap();
        let resid: Vec<f64> = pred.values.iter().zip(&meas.values).map(|(p, m)| p - m).collect();
        let peak = meas.max_value();
        let eta = peak * peak * meas.n_pairs() as f64;
        let data = resid.iter().map(|r| r * r).sum::<f64>() / (2.0 * eta);
        assert!((loss.data - data).abs() <= 1e-9 * data, "{} vs {data}", loss.data);

        let jt_r = s.j.transpose_apply(&resid).unwrap();
        let mut want = vec![0.0; params.values.len()];
        for (k, sg) in partials.iter().enumerate() {
            for (&p, d) in sg.support.iter().zip(&sg.partials) {
                for q in 0..PARAMS_PER_SPLAT {
                    want[k * PARAMS_PER_SPLAT + q] += jt_r[p] / eta * d[q];
                }
            }
        }
        // Regularizer and repulsion gradients in closed form.
        for k in 0..params.n_splats() {
            let v = params.splat_slice(k);
            let aniso = v[3] - v[4];
            want[k * PARAMS_PER_SPLAT] += 2.0 * hp.lambda_r * v[0];
            want[k * PARAMS_PER_SPLAT + 3] += 2.0 * hp.lambda_r * hp.beta * aniso;
            want[k * PARAMS_PER_SPLAT + 4] -= 2.0 * hp.lambda_r * hp.beta * aniso;
        }
        repulsion(&params, &hp, Some(&mut want));
        let scale = want.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for (a, b) in grad.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
        }
    }
}

fn scaled(j: &SensitivityMatrix, c: f32) -> SensitivityMatrix {
    SensitivityMatrix::from_columns(
        j.n_sources,
        j.n_detectors,
        j.n_bins,
        j.n_pixels,
        j.dt_ns,
        j.resolution_cm,
        j.radius_cm,
        j.props,
        j.as_column_major().iter().map(|v| v * c).collect(),
    )
    .unwrap()
}

#[test]
fn loss_is_invariant_to_common_rescaling() {
    let s = common::small();
    let meas = measured(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = random_params(&mut rng);
    let hp = hyper(params.n_splats());
    let (a, ga) = loss_and_grad(&params, &s.j, &s.grid, &meas, &s.baseline, &hp).unwrap();

    // A power of two keeps the single-precision entries exact.
    let c = 8.0;
    let j8 = scaled(&s.j, c as f32);
    let mul = |t: &TpsfSet| TpsfSet {
        values: t.values.iter().map(|v| v * c).collect(),
        ..*t
    };
    let (b, gb) = loss_and_grad(&params, &j8, &s.grid, &mul(&meas), &mul(&s.baseline), &hp).unwrap();
    assert!((a.data - b.data).abs() <= 1e-12 * a.data);
    assert_eq!((a.reg, a.rep), (b.reg, b.rep));
    for (x, y) in ga.iter().zip(&gb) {
        assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-12));
    }
}

#[test]
fn splat_partials_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h_step = 1e-6;
    for _ in 0..50 {
        let params = SplatParams::encode(&[Splat {
            alpha: rng.random_range(0.003..0.03),
            center: Point2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)),
            sx: rng.random_range(0.2..0.8),
            sy: rng.random_range(0.2..0.8),
            theta: rng.random_range(-1.5..1.5),
        }])
        .unwrap();
        let sp = params.decode().unwrap()[0];
        // A point within two scales of the center keeps the partials well away from zero.
        let p = Point2::new(
            sp.center.x + rng.random_range(-1.0..1.0) * sp.sx,
            sp.center.y + rng.random_range(-1.0..1.0) * sp.sy,
        );
        let (_, analytic) = gsdot_core::splats::splat_value_and_partials(&sp, p);
        let value = |v: &SplatParams| v.decode().unwrap()[0].value_at(p);
        let mut diff = 0.0;
        let mut norm = 0.0;
        for i in 0..PARAMS_PER_SPLAT {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus.values[i] += h_step;
            minus.values[i] -= h_step;
            let fd = (value(&plus) - value(&minus)) / (2.0 * h_step);
            diff += (analytic[i] - fd) * (analytic[i] - fd);
            norm += fd * fd;
        }
        let rel = (diff / norm).sqrt();
        assert!(rel < 1e-5, "{sp:?} at {p:?}: {rel:.2e}");
    }
}
