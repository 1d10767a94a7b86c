//! Time-series panel of well rates and pressures, plus fluid properties.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-phase fluid description shared by the flow solver, the travel-time
/// speed field and the physics residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProps {
    /// Viscosity in cP.
    pub mu_cp: f64,
    /// Total (rock + fluid) compressibility in 1/psi.
    pub ct_per_psi: f64,
}

impl FluidProps {
    pub fn new(mu_cp: f64, ct_per_psi: f64) -> Result<Self> {
        if !(mu_cp.is_finite() && mu_cp > 0.0) {
            return Err(Error::invalid(format!("viscosity must be > 0, got {mu_cp}")));
        }
        if !(ct_per_psi.is_finite() && ct_per_psi > 0.0) {
            return Err(Error::invalid(format!(
                "total compressibility must be > 0, got {ct_per_psi}"
            )));
        }
        Ok(FluidProps { mu_cp, ct_per_psi })
    }
}

/// Aligned observation table for one case: at every timestamp, per-injector
/// rates and bottomhole pressures plus per-producer rates and bottomhole
/// pressures.
///
/// Rows are timestamps (strictly increasing, in days); columns follow the
/// well ordering of the case's [`WellNetwork`](crate::wells::WellNetwork).
/// Rates are bbl/day, pressures psi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesPanel {
    times: Array1<f64>,
    injection: Array2<f64>,
    injector_bhp: Array2<f64>,
    production: Array2<f64>,
    producer_bhp: Array2<f64>,
}

impl TimeSeriesPanel {
    /// Build a panel, validating shapes, monotone time, finiteness and
    /// non-negative rates.
    pub fn new(
        times: Array1<f64>,
        injection: Array2<f64>,
        injector_bhp: Array2<f64>,
        production: Array2<f64>,
        producer_bhp: Array2<f64>,
    ) -> Result<Self> {
        let n = times.len();
        if n < 2 {
            return Err(Error::invalid("a panel needs at least two timestamps"));
        }
        for (name, arr) in [
            ("injection", &injection),
            ("injector_bhp", &injector_bhp),
            ("production", &production),
            ("producer_bhp", &producer_bhp),
        ] {
            if arr.nrows() != n {
                return Err(Error::ShapeMismatch {
                    context: format!("panel column block {name}"),
                    expected: format!("{n} rows"),
                    actual: format!("{} rows", arr.nrows()),
                });
            }
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("panel column block {name}"),
                });
            }
        }
        if injection.ncols() != injector_bhp.ncols() {
            return Err(Error::ShapeMismatch {
                context: "injector column blocks".into(),
                expected: format!("{} columns", injection.ncols()),
                actual: format!("{} columns", injector_bhp.ncols()),
            });
        }
        if production.ncols() != producer_bhp.ncols() {
            return Err(Error::ShapeMismatch {
                context: "producer column blocks".into(),
                expected: format!("{} columns", production.ncols()),
                actual: format!("{} columns", producer_bhp.ncols()),
            });
        }
        if injection.ncols() == 0 || production.ncols() == 0 {
            return Err(Error::invalid("panel needs at least one well per side"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                context: "panel timestamps".into(),
            });
        }
        if times.windows(2).into_iter().any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("panel timestamps must be strictly increasing"));
        }
        if injection.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("injection rates must be non-negative"));
        }
        if production.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("production rates must be non-negative"));
        }
        Ok(TimeSeriesPanel {
            times,
            injection,
            injector_bhp,
            production,
            producer_bhp,
        })
    }

    pub fn times(&self) -> &Array1<f64> {
        &self.times
    }

    /// Injection rates, `[n_steps × n_injectors]`, bbl/day.
    pub fn injection(&self) -> &Array2<f64> {
        &self.injection
    }

    /// Injector bottomhole pressures, `[n_steps × n_injectors]`, psi.
    pub fn injector_bhp(&self) -> &Array2<f64> {
        &self.injector_bhp
    }

    /// Production rates, `[n_steps × n_producers]`, bbl/day.
    pub fn production(&self) -> &Array2<f64> {
        &self.production
    }

    /// Producer bottomhole pressures, `[n_steps × n_producers]`, psi.
    pub fn producer_bhp(&self) -> &Array2<f64> {
        &self.producer_bhp
    }

    pub fn n_steps(&self) -> usize {
        self.times.len()
    }

    pub fn n_injectors(&self) -> usize {
        self.injection.ncols()
    }

    pub fn n_producers(&self) -> usize {
        self.production.ncols()
    }

    /// Copy out the row range `[start, end)` as a standalone panel.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<TimeSeriesPanel> {
        if start >= end || end > self.n_steps() {
            return Err(Error::invalid(format!(
                "row range {start}..{end} out of bounds for {} steps",
                self.n_steps()
            )));
        }
        if end - start < 2 {
            return Err(Error::invalid("a sliced panel needs at least two rows"));
        }
        TimeSeriesPanel::new(
            self.times.slice(s![start..end]).to_owned(),
            self.injection.slice(s![start..end, ..]).to_owned(),
            self.injector_bhp.slice(s![start..end, ..]).to_owned(),
            self.production.slice(s![start..end, ..]).to_owned(),
            self.producer_bhp.slice(s![start..end, ..]).to_owned(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn valid_panel() -> TimeSeriesPanel {
        TimeSeriesPanel::new(
            array![0.0, 10.0, 20.0],
            array![[100.0], [110.0], [120.0]],
            array![[3000.0], [3010.0], [3020.0]],
            array![[50.0, 60.0], [55.0, 65.0], [60.0, 70.0]],
            array![[2000.0, 2000.0], [2000.0, 2000.0], [2000.0, 2000.0]],
        )
        .unwrap()
    }

    #[test]
    fn accepts_valid_panel() {
        let p = valid_panel();
        assert_eq!(p.n_steps(), 3);
        assert_eq!(p.n_injectors(), 1);
        assert_eq!(p.n_producers(), 2);
    }

    #[test]
    fn rejects_non_monotone_time() {
        let err = TimeSeriesPanel::new(
            array![0.0, 10.0, 10.0],
            array![[1.0], [1.0], [1.0]],
            array![[1.0], [1.0], [1.0]],
            array![[1.0], [1.0], [1.0]],
            array![[1.0], [1.0], [1.0]],
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_negative_rates() {
        let err = TimeSeriesPanel::new(
            array![0.0, 10.0],
            array![[1.0], [-1.0]],
            array![[1.0], [1.0]],
            array![[1.0], [1.0]],
            array![[1.0], [1.0]],
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_nan_pressure() {
        let err = TimeSeriesPanel::new(
            array![0.0, 10.0],
            array![[1.0], [1.0]],
            array![[1.0], [f64::NAN]],
            array![[1.0], [1.0]],
            array![[1.0], [1.0]],
        );
        assert!(matches!(err, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn slice_rows_copies_window() {
        let p = valid_panel();
        let w = p.slice_rows(1, 3).unwrap();
        assert_eq!(w.times().to_vec(), vec![10.0, 20.0]);
        assert_eq!(w.production()[[0, 1]], 65.0);
    }

    #[test]
    fn fluid_props_reject_nonpositive() {
        assert!(FluidProps::new(0.0, 1e-5).is_err());
        assert!(FluidProps::new(1.0, -1e-5).is_err());
        assert!(FluidProps::new(1.0, 1e-5).is_ok());
    }
}
