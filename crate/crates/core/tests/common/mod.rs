//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use gsdot_core::forward::{baseline_tpsf, OpticalProperties, SensitivityMatrix, TpsfSet};
use gsdot_core::geometry::{Domain, Grid, OptodeArray, TimeAxis};

/// Green's function written out from the closed form, independent of the crate.
pub fn green(rho: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let v = 29.979_245_8 / 1.4;
    let d = 1.0 / (2.0 * 10.0);
    let dv = d * v;
    (-rho * rho / (4.0 * dv * t) - 0.01 * v * t).exp() / (4.0 * PI * dv * t)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
    let left = simpson(a, m, fa, lm, fm);
    let right = simpson(m, b, fm, rm, fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive(f, a, m, fa, lm, fm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, b, fm, rm, fb, right, 0.5 * tol, depth - 1)
}

/// Convolution at time `t` on sub-cells of width `h`, each refined adaptively.
pub fn oracle_convolution(rho_a: f64, rho_b: f64, t: f64, h: f64) -> f64 {
    let f = |tau: f64| green(rho_a, tau) * green(rho_b, t - tau);
    let n = (t / h).round() as usize;
    let mut total = 0.0;
    for i in 0..n {
        let (a, b) = (i as f64 * h, ((i + 1) as f64 * h).min(t));
        let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
        let whole = simpson(a, b, fa, fm, fb);
        total += adaptive(&f, a, b, fa, fm, fb, whole, 1e-16, 40);
    }
    total
}

/// Reduced geometry that assembles in well under a second.
pub struct Small {
    pub domain: Domain,
    pub grid: Grid,
    pub optodes: OptodeArray,
    pub time: TimeAxis,
    pub props: OpticalProperties,
    pub j: SensitivityMatrix,
    pub baseline: TpsfSet,
}

pub fn small() -> Small {
    let domain = Domain::new(3.0).unwrap();
    let grid = Grid::build(&domain, 0.25, 0.0).unwrap();
    let optodes = OptodeArray::place(6, 6, &domain).unwrap();
    let time = TimeAxis::new(4.0, 0.05).unwrap();
    let props = OpticalProperties::default();
    let j = SensitivityMatrix::build(&optodes, &grid, &props, &time, 3.0).unwrap();
    let baseline = baseline_tpsf(&optodes, &props, &time);
    Small {
        domain,
        grid,
        optodes,
        time,
        props,
        j,
        baseline,
    }
}

pub mod checks;
