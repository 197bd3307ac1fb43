//! Cell-integrated Green's function kernels.
//!
//! Close to an optode the Green's function rises and falls within a fraction of
//! a time bin (width `ρ²/(4Dv)`), so point samples badly under-resolve it. For the
//! convolution integral we instead integrate `(1/τ)·exp(−a/τ)` exactly against
//! piecewise-linear hat functions on the bin grid and keep `exp(−μa v τ)` in the
//! smooth factor. The exact cell moments follow from
//!
//!   ∫ e^{−a/τ}/τ dτ = E1(a/τ)
//!   ∫ e^{−a/τ}   dτ = τ e^{−a/τ} − a E1(a/τ)

use std::f64::consts::PI;

use super::OpticalProperties;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = ∫_x^∞ e^{−t}/t dt` for `x ≥ 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    if x.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    if x > 745.0 {
        return 0.0;
    }
    if x <= 1.0 {
        // −γ − ln x − Σ_{k≥1} (−x)^k / (k·k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return -EULER_GAMMA - x.ln() - sum;
    }
    // Modified Lentz evaluation of the continued fraction for e^x E1(x).
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..300 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}

/// Series `w` such that `Σ_k w[k]·f((j+1−k)·dt)·dt`-style discrete convolution
/// with a point-sampled smooth kernel reproduces `∫₀^{t_j} G(ρ, τ) f(t_j − τ) dτ`.
///
/// Element `k` is the hat-function weight of node `τ_k = k·dt` divided by `dt`,
/// including the `exp(−μa v τ_k)` factor, so for a smooth kernel it tends to
/// `G(ρ, k·dt)`. The returned series has `n_bins` entries (nodes `0..n_bins`).
pub fn cell_integrated_green(
    rho_cm: f64,
    n_bins: usize,
    dt_ns: f64,
    props: &OpticalProperties,
) -> Vec<f64> {
    let dv = props.diffusion() * props.speed();
    let norm = 1.0 / (4.0 * PI * dv);
    // Keep the log singularity of a coincident optode finite.
    let a = (rho_cm * rho_cm / (4.0 * dv)).max(1e-300);
    let decay = props.mu_a * props.speed();

    // Antiderivatives at node k, with τ_0 = 0 handled by the limits E1(∞) = 0.
    let e1_at = |k: usize| -> f64 {
        if k == 0 {
            0.0
        } else {
            exp_integral_e1(a / (k as f64 * dt_ns))
        }
    };
    let first_moment_at = |k: usize, e1: f64| -> f64 {
        if k == 0 {
            0.0
        } else {
            let tau = k as f64 * dt_ns;
            tau * (-a / tau).exp() - a * e1
        }
    };

    let mut weights = vec![0.0; n_bins];
    let mut prev_e1 = e1_at(0);
    let mut prev_m1 = first_moment_at(0, prev_e1);
    // carry = share of node k that comes from the interval [τ_{k−1}, τ_k].
    let mut carry = 0.0;
    for k in 0..n_bins {
        let e1_next = e1_at(k + 1);
        let m1_next = first_moment_at(k + 1, e1_next);
        let zeroth = norm * (e1_next - prev_e1);
        let first = norm * (m1_next - prev_m1);
        let tau_k = k as f64 * dt_ns;
        // Linear interpolation on [τ_k, τ_{k+1}]: node k gets ∫S·(τ_{k+1}−τ)/dt, node k+1 the rest.
        let upper = (first - tau_k * zeroth) / dt_ns;
        let lower = zeroth - upper;
        weights[k] = (carry + lower) * (-decay * tau_k).exp() / dt_ns;
        carry = upper;
        prev_e1 = e1_next;
        prev_m1 = m1_next;
    }
    weights
}
