//! Continuous injector→producer connectivity (allocation fractions).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interwell connectivity matrix `F` with entry `F_ij` giving the fraction of
/// injector `i`'s rate allocated to producer `j`.
///
/// All entries lie in `[0, 1]`. Instances produced by the CRM fitter
/// additionally satisfy per-injector row sums ≤ 1 (enforced by
/// [`CrmParams`](crate::crm::CrmParams)); network-trained instances only
/// guarantee the entrywise bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityMatrix {
    injector_ids: Vec<String>,
    producer_ids: Vec<String>,
    values: Array2<f64>,
}

impl ConnectivityMatrix {
    /// Build a connectivity matrix, validating `[0,1]` bounds and id/shape
    /// agreement.
    pub fn new(
        injector_ids: Vec<String>,
        producer_ids: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        if values.nrows() != injector_ids.len() || values.ncols() != producer_ids.len() {
            return Err(Error::ShapeMismatch {
                context: "connectivity matrix".into(),
                expected: format!("{} × {}", injector_ids.len(), producer_ids.len()),
                actual: format!("{} × {}", values.nrows(), values.ncols()),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!(
                "connectivity entries must lie in [0,1], got {bad}"
            )));
        }
        Ok(ConnectivityMatrix {
            injector_ids,
            producer_ids,
            values,
        })
    }

    pub fn injector_ids(&self) -> &[String] {
        &self.injector_ids
    }

    pub fn producer_ids(&self) -> &[String] {
        &self.producer_ids
    }

    /// `[N_I × N_P]` allocation fractions.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_injectors(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_producers(&self) -> usize {
        self.values.ncols()
    }

    /// Row sum for injector `i` (total allocated fraction).
    pub fn row_sum(&self, i: usize) -> f64 {
        self.values.row(i).sum()
    }
}
