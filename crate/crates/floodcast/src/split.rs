//! Chronological train/validation/test partitioning.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

/// Contiguous, chronological, disjoint row ranges covering a panel:
/// train precedes validation precedes test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl DataSplit {
    pub fn n_rows(&self) -> usize {
        self.test.end
    }
}

/// Split a panel chronologically by fractions `(f_train, f_val, f_test)`.
///
/// Train and validation lengths are floored; the test range takes the
/// remainder. Fractions must be positive and sum to 1 within 1e-9; every
/// resulting range must be non-empty.
pub fn split_panel(panel: &TimeSeriesPanel, fractions: (f64, f64, f64)) -> Result<DataSplit> {
    split_rows(panel.n_steps(), fractions)
}

/// Fraction-based split over a bare row count (see [`split_panel`]).
pub fn split_rows(n_rows: usize, fractions: (f64, f64, f64)) -> Result<DataSplit> {
    let (f_train, f_val, f_test) = fractions;
    for f in [f_train, f_val, f_test] {
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::invalid(format!(
                "split fractions must be positive, got {fractions:?}"
            )));
        }
    }
    if ((f_train + f_val + f_test) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions must sum to 1, got {fractions:?}"
        )));
    }
    let n_train = (f_train * n_rows as f64).floor() as usize;
    let n_val = (f_val * n_rows as f64).floor() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n_rows {
        return Err(Error::invalid(format!(
            "split of {n_rows} rows by {fractions:?} leaves an empty partition"
        )));
    }
    Ok(DataSplit {
        train: 0..n_train,
        validation: n_train..n_train + n_val,
        test: n_train + n_val..n_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_rows_split_70_5_25() {
        let s = split_rows(100, (0.70, 0.05, 0.25)).unwrap();
        assert_eq!(s.train, 0..70);
        assert_eq!(s.validation, 70..75);
        assert_eq!(s.test, 75..100);
    }

    #[test]
    fn forty_rows_floor_remainder_to_test() {
        let s = split_rows(40, (0.70, 0.05, 0.25)).unwrap();
        assert_eq!(s.train.len(), 28);
        assert_eq!(s.validation.len(), 2);
        assert_eq!(s.test.len(), 10);
    }

    #[test]
    fn ranges_disjoint_ordered_exhaustive() {
        for n in 3..300 {
            let Ok(s) = split_rows(n, (0.70, 0.05, 0.25)) else {
                continue;
            };
            assert_eq!(s.train.start, 0);
            assert_eq!(s.train.end, s.validation.start);
            assert_eq!(s.validation.end, s.test.start);
            assert_eq!(s.test.end, n);
            assert!(!s.train.is_empty() && !s.validation.is_empty() && !s.test.is_empty());
        }
    }

    #[test]
    fn rejects_bad_fractions() {
        assert!(split_rows(100, (0.7, 0.05, 0.30)).is_err());
        assert!(split_rows(100, (0.7, -0.05, 0.35)).is_err());
        assert!(split_rows(100, (1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn rejects_too_few_rows() {
        // 10 rows at 5% validation floors to zero.
        assert!(split_rows(10, (0.70, 0.05, 0.25)).is_err());
    }
}
