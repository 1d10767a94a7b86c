//! Injection schedules and producer controls for truth generation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One plateau of an injector's piecewise-constant rate program.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateStep {
    /// Day the plateau begins (first step must begin at 0).
    pub start_day: f64,
    /// Rate held from `start_day` until the next step, bbl/day.
    pub rate_bbl_day: f64,
}

/// Experiment controls: per-injector rate programs, per-producer constant
/// BHP targets, the shared time axis, and the initial reservoir pressure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schedule {
    injector_rates: Vec<Vec<RateStep>>,
    producer_bhp_psi: Vec<f64>,
    horizon_days: f64,
    step_days: f64,
    initial_pressure_psi: f64,
}

impl Schedule {
    pub fn new(
        injector_rates: Vec<Vec<RateStep>>,
        producer_bhp_psi: Vec<f64>,
        horizon_days: f64,
        step_days: f64,
        initial_pressure_psi: f64,
    ) -> Result<Self> {
        if injector_rates.is_empty() || producer_bhp_psi.is_empty() {
            return Err(Error::invalid("schedule needs injectors and producers"));
        }
        if !(horizon_days > 0.0) || !(step_days > 0.0) {
            return Err(Error::invalid("horizon and step must be positive"));
        }
        let ratio = horizon_days / step_days;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::invalid(format!(
                "horizon {horizon_days} d must be an integer multiple of step {step_days} d"
            )));
        }
        for (i, steps) in injector_rates.iter().enumerate() {
            if steps.is_empty() {
                return Err(Error::invalid(format!("injector {i} has no rate steps")));
            }
            if steps[0].start_day != 0.0 {
                return Err(Error::invalid(format!(
                    "injector {i}: first rate step must start at day 0"
                )));
            }
            for w in steps.windows(2) {
                if w[1].start_day <= w[0].start_day {
                    return Err(Error::invalid(format!(
                        "injector {i}: rate steps must have strictly increasing starts"
                    )));
                }
            }
            if steps
                .iter()
                .any(|s| !s.rate_bbl_day.is_finite() || s.rate_bbl_day < 0.0)
            {
                return Err(Error::invalid(format!(
                    "injector {i}: rates must be finite and nonnegative"
                )));
            }
        }
        if producer_bhp_psi.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("producer BHP targets must be finite"));
        }
        if !initial_pressure_psi.is_finite() {
            return Err(Error::invalid("initial pressure must be finite"));
        }
        Ok(Self {
            injector_rates,
            producer_bhp_psi,
            horizon_days,
            step_days,
            initial_pressure_psi,
        })
    }

    pub fn n_injectors(&self) -> usize {
        self.injector_rates.len()
    }
    pub fn n_producers(&self) -> usize {
        self.producer_bhp_psi.len()
    }
    /// Number of time intervals; the emitted panel has one more row.
    pub fn n_intervals(&self) -> usize {
        (self.horizon_days / self.step_days).round() as usize
    }
    pub fn step_days(&self) -> f64 {
        self.step_days
    }
    pub fn horizon_days(&self) -> f64 {
        self.horizon_days
    }
    pub fn producer_bhp_psi(&self) -> &[f64] {
        &self.producer_bhp_psi
    }
    pub fn initial_pressure_psi(&self) -> f64 {
        self.initial_pressure_psi
    }

    /// Panel time axis: `0, step, 2·step, …, horizon`.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_intervals())
            .map(|k| k as f64 * self.step_days)
            .collect()
    }

    /// Rate applied over interval `k` (spanning `(k−1)·step .. k·step`),
    /// sampled at the interval midpoint so plateau switches landing exactly
    /// on a row boundary are unambiguous. `k = 0` reports the first
    /// interval's rate (the rate in force as the experiment starts).
    pub fn applied_rate(&self, injector: usize, k: usize) -> f64 {
        let t = (k.max(1) as f64 - 0.5) * self.step_days;
        let steps = &self.injector_rates[injector];
        steps
            .iter()
            .rev()
            .find(|s| s.start_day <= t)
            .map(|s| s.rate_bbl_day)
            .unwrap_or(steps[0].rate_bbl_day)
    }

    /// Injection matrix `[n_intervals+1 × n_injectors]` aligned with
    /// [`Schedule::times`].
    pub fn injection_matrix(&self) -> ndarray::Array2<f64> {
        let n_t = self.n_intervals() + 1;
        ndarray::Array2::from_shape_fn((n_t, self.n_injectors()), |(k, i)| {
            self.applied_rate(i, k)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_step() -> Vec<RateStep> {
        vec![
            RateStep {
                start_day: 0.0,
                rate_bbl_day: 100.0,
            },
            RateStep {
                start_day: 50.0,
                rate_bbl_day: 250.0,
            },
        ]
    }

    #[test]
    fn validates_inputs() {
        assert!(Schedule::new(vec![], vec![1500.0], 100.0, 10.0, 3000.0).is_err());
        assert!(Schedule::new(vec![two_step()], vec![], 100.0, 10.0, 3000.0).is_err());
        assert!(Schedule::new(vec![two_step()], vec![1500.0], 105.0, 10.0, 3000.0).is_err());
        let late_start = vec![RateStep {
            start_day: 5.0,
            rate_bbl_day: 10.0,
        }];
        assert!(Schedule::new(vec![late_start], vec![1500.0], 100.0, 10.0, 3000.0).is_err());
        let negative = vec![RateStep {
            start_day: 0.0,
            rate_bbl_day: -1.0,
        }];
        assert!(Schedule::new(vec![negative], vec![1500.0], 100.0, 10.0, 3000.0).is_err());
    }

    #[test]
    fn applied_rate_switches_at_plateau_boundaries() {
        let s = Schedule::new(vec![two_step()], vec![1500.0], 100.0, 10.0, 3000.0).unwrap();
        assert_eq!(s.n_intervals(), 10);
        // Interval 5 spans days 40–50, still on the first plateau; interval
        // 6 spans 50–60, the new plateau.
        assert_eq!(s.applied_rate(0, 5), 100.0);
        assert_eq!(s.applied_rate(0, 6), 250.0);
        assert_eq!(s.applied_rate(0, 0), 100.0);
        let m = s.injection_matrix();
        assert_eq!(m.dim(), (11, 1));
        assert_eq!(m[[10, 0]], 250.0);
    }
}
