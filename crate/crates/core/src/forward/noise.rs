use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::TpsfSet;
use crate::error::{Error, Result};

/// Photon-counting noise at a target relative level at each TPSF's peak.
///
/// Each pair's TPSF is scaled to mean photon counts with a total budget
/// `N_ph = 1 / (level² · f_peak)`, where `f_peak` is the peak bin's share of
/// the total, so the peak bin has relative standard deviation `level`. Counts
/// are drawn independently per bin and rescaled so the pair keeps its clean
/// integral. Pairs are processed in order from a single seeded stream.
pub fn apply_noise(clean: &TpsfSet, target_level: f64, seed: u64) -> Result<TpsfSet> {
    if !(target_level.is_finite() && target_level > 0.0) {
        return Err(Error::invalid(format!(
            "noise level must be positive, got {target_level}"
        )));
    }
    if let Some(bad) = clean.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::invalid(format!(
            "noise needs non-negative finite fluence, found {bad}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = clean.clone();
    let mut counts = vec![0.0; clean.n_bins];
    for chunk in out.values.chunks_mut(clean.n_bins.max(1)) {
        let total: f64 = chunk.iter().sum();
        let peak = chunk.iter().copied().fold(0.0, f64::max);
        if total <= 0.0 || peak <= 0.0 {
            continue;
        }
        let photons = total / (target_level * target_level * peak);
        let mut drawn = 0.0;
        for (c, &v) in counts.iter_mut().zip(chunk.iter()) {
            let mean = photons * v / total;
            *c = if mean > 0.0 {
                Poisson::new(mean)
                    .map_err(|e| Error::invalid(format!("poisson mean {mean}: {e}")))?
                    .sample(&mut rng)
            } else {
                0.0
            };
            drawn += *c;
        }
        if drawn > 0.0 {
            let scale = total / drawn;
            for (v, &c) in chunk.iter_mut().zip(&counts) {
                *v = c * scale;
            }
        } else {
            chunk.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(out)
}
