use crate::error::{Error, Result};
use crate::geometry::{Grid, Point2};

#[derive(Debug, Clone, PartialEq)]
pub struct PeakSeeds {
    pub centers: Vec<Point2>,
    /// Set when the image ran out of positive pixels before `K` peaks were found;
    /// the remaining centers then sit at maxima of the non-positive residual.
    pub exhausted: bool,
}

/// Greedy peak picking: take the global maximum, clear a disc of
/// `suppression_radius_cm` around it, repeat. Ties go to the lowest pixel index.
pub fn find_peaks(
    image: &[f64],
    grid: &Grid,
    k: usize,
    suppression_radius_cm: f64,
) -> Result<PeakSeeds> {
    if k == 0 {
        return Err(Error::invalid("need at least one peak"));
    }
    if image.len() != grid.n_active() {
        return Err(Error::DimensionMismatch {
            context: "peak image",
            expected: grid.n_active(),
            actual: image.len(),
        });
    }
    if image.is_empty() {
        return Err(Error::invalid("peak search on an empty grid"));
    }
    let mut work = image.to_vec();
    let mut cleared = vec![false; image.len()];
    let mut centers = Vec::with_capacity(k);
    let mut exhausted = false;
    for _ in 0..k {
        // Prefer pixels not yet cleared; fall back to the whole residual.
        let pick = argmax(&work, |i| !cleared[i]).or_else(|| argmax(&work, |_| true));
        let best = pick.expect("non-empty image");
        if work[best] <= 0.0 || cleared[best] {
            exhausted = true;
        }
        let c = grid.active_center(best);
        centers.push(c);
        for (i, w) in work.iter_mut().enumerate() {
            if grid.active_center(i).distance(c) <= suppression_radius_cm {
                *w = 0.0;
                cleared[i] = true;
            }
        }
    }
    Ok(PeakSeeds { centers, exhausted })
}

fn argmax(values: &[f64], allowed: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if !allowed(i) {
            continue;
        }
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}
