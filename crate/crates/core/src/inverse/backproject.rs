use crate::error::{Error, Result};
use crate::forward::{SensitivityMatrix, TpsfSet};

/// Absolute stabilizer `rel · max_pixel Σ J²`.
pub fn backprojection_epsilon(column_sq_norms: &[f64], rel: f64) -> f64 {
    rel * column_sq_norms.iter().copied().fold(0.0, f64::max)
}

/// Normalized adjoint image `(Σ ΔΦ·J) / (Σ J² + ε)` per active pixel.
pub fn backproject(j: &SensitivityMatrix, residual: &TpsfSet, eps: f64) -> Result<Vec<f64>> {
    if residual.len() != j.n_rows() {
        return Err(Error::DimensionMismatch {
            context: "backprojection residual",
            expected: j.n_rows(),
            actual: residual.len(),
        });
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(format!(
            "backprojection stabilizer must be positive, got {eps}"
        )));
    }
    let numer = j.transpose_apply(&residual.values)?;
    let denom = j.column_sq_norms();
    Ok(numer
        .iter()
        .zip(&denom)
        .map(|(n, d)| n / (d + eps))
        .collect())
}
