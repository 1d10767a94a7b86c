//! Forecast evaluation metrics.

use crate::error::{Error, Result};

/// Root mean squared error between two equal-length series:
/// `sqrt(mean((obs − pred)²))`.
pub fn rmse(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(Error::ShapeMismatch {
            context: "rmse".into(),
            expected: format!("{} values", observed.len()),
            actual: format!("{} values", predicted.len()),
        });
    }
    if observed.is_empty() {
        return Err(Error::invalid("rmse needs at least one sample"));
    }
    let sum_sq: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - p) * (o - p))
        .sum();
    Ok((sum_sq / observed.len() as f64).sqrt())
}

/// Field-level score: the arithmetic sum of per-producer RMSEs.
pub fn total_rmse(per_producer: &[f64]) -> f64 {
    per_producer.iter().sum()
}
