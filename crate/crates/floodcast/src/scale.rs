//! Per-column min-max scaling fitted on a designated row partition.

use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-wise min-max scaler.
///
/// `transform` maps each column linearly so the fitted partition spans
/// `[0, 1]`; rows outside that partition may land outside the unit interval.
/// Degenerate columns (max = min on the fit rows) map to 0 and invert back to
/// the stored constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    mins: Array1<f64>,
    maxs: Array1<f64>,
}

impl MinMaxScaler {
    /// Fit column ranges on `fit_rows` of `values`.
    pub fn fit(values: ArrayView2<f64>, fit_rows: Range<usize>) -> Result<Self> {
        if fit_rows.is_empty() {
            return Err(Error::invalid("scaler fit range must be non-empty"));
        }
        if fit_rows.end > values.nrows() {
            return Err(Error::invalid(format!(
                "scaler fit range {fit_rows:?} exceeds {} rows",
                values.nrows()
            )));
        }
        for (c, col) in values.columns().into_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "non-finite value in column {c} handed to scaler"
                )));
            }
        }
        let n_cols = values.ncols();
        let mut mins = Array1::zeros(n_cols);
        let mut maxs = Array1::zeros(n_cols);
        for c in 0..n_cols {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for r in fit_rows.clone() {
                let v = values[[r, c]];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            mins[c] = lo;
            maxs[c] = hi;
        }
        Ok(MinMaxScaler { mins, maxs })
    }

    pub fn n_columns(&self) -> usize {
        self.mins.len()
    }

    /// Column range (max − min); 0 for degenerate columns.
    pub fn range(&self, col: usize) -> f64 {
        self.maxs[col] - self.mins[col]
    }

    pub fn min(&self, col: usize) -> f64 {
        self.mins[col]
    }

    /// Map values into scaled space.
    pub fn transform(&self, values: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_cols(values.ncols())?;
        let mut out = values.to_owned();
        for (c, mut col) in out.columns_mut().into_iter().enumerate() {
            let range = self.maxs[c] - self.mins[c];
            if range == 0.0 {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|v| (v - self.mins[c]) / range);
            }
        }
        Ok(out)
    }

    /// Map scaled values back to physical space.
    pub fn inverse(&self, scaled: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_cols(scaled.ncols())?;
        let mut out = scaled.to_owned();
        for (c, mut col) in out.columns_mut().into_iter().enumerate() {
            let range = self.maxs[c] - self.mins[c];
            if range == 0.0 {
                col.fill(self.mins[c]);
            } else {
                col.mapv_inplace(|v| v * range + self.mins[c]);
            }
        }
        Ok(out)
    }

    fn check_cols(&self, got: usize) -> Result<()> {
        if got != self.n_columns() {
            return Err(Error::ShapeMismatch {
                context: "scaler application".into(),
                expected: format!("{} columns", self.n_columns()),
                actual: format!("{got} columns"),
            });
        }
        Ok(())
    }
}

/// Fit a scaler on `fit_rows` and transform the whole matrix with it.
pub fn fit_apply_scaler(
    values: ArrayView2<f64>,
    fit_rows: Range<usize>,
) -> Result<(Array2<f64>, MinMaxScaler)> {
    let scaler = MinMaxScaler::fit(values, fit_rows)?;
    let scaled = scaler.transform(values)?;
    Ok((scaled, scaler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_map_endpoints() {
        let values = array![[0.0], [5.0], [10.0]];
        let (scaled, _) = fit_apply_scaler(values.view(), 0..3).unwrap();
        assert_eq!(scaled, array![[0.0], [0.5], [1.0]]);
    }

    #[test]
    fn constant_column_maps_to_zero_and_inverts_to_constant() {
        let values = array![[7.0], [7.0], [7.0]];
        let (scaled, scaler) = fit_apply_scaler(values.view(), 0..3).unwrap();
        assert_eq!(scaled, array![[0.0], [0.0], [0.0]]);
        let back = scaler.inverse(scaled.view()).unwrap();
        assert_eq!(back, values);
    }

    #[test]
    fn round_trip_identity_within_tolerance() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let values = Array2::from_shape_fn((40, 5), |_| rng.random_range(-1e3..1e3));
        let (scaled, scaler) = fit_apply_scaler(values.view(), 0..25).unwrap();
        let back = scaler.inverse(scaled.view()).unwrap();
        for (a, b) in values.iter().zip(back.iter()) {
            let denom = a.abs().max(1.0);
            assert!((a - b).abs() / denom < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn fit_partition_only_controls_the_range() {
        // Rows outside the fit range may scale outside [0,1].
        let values = array![[0.0], [10.0], [20.0]];
        let (scaled, _) = fit_apply_scaler(values.view(), 0..2).unwrap();
        assert_eq!(scaled[[2, 0]], 2.0);
    }

    #[test]
    fn rejects_non_finite_with_column_index() {
        let values = array![[0.0, 1.0], [1.0, f64::NAN]];
        let err = MinMaxScaler::fit(values.view(), 0..2).unwrap_err();
        assert!(err.to_string().contains("column 1"), "{err}");
    }

    #[test]
    fn rejects_empty_fit_range() {
        let values = array![[0.0], [1.0]];
        assert!(MinMaxScaler::fit(values.view(), 1..1).is_err());
    }
}
