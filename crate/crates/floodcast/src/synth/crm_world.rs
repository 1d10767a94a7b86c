//! Panels generated directly from the material-balance ODE.
//!
//! Unlike the grid simulator, these panels come from a world in which the
//! lumped-parameter model is *exactly* true — so fitting and connectivity
//! recovery against them are exactly identifiable, and a physics residual
//! evaluated with the generating parameters vanishes identically. That
//! makes them the sharpest oracle available for the fitting and training
//! code paths.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use super::schedule::Schedule;
use crate::crm::{integrate_crm_ode, CrmParams};
use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

/// Generate a panel whose production is the ODE solution under `schedule`,
/// optionally perturbed by Gaussian noise of standard deviation
/// `noise_fraction · mean(q)` (rows after the first; rates clamped at 0).
/// Producer BHP follows the schedule's constant targets; the injector
/// pressure channel is reported as the (constant) initial pressure.
pub fn generate_crm_world(
    params: &CrmParams,
    schedule: &Schedule,
    q0: &Array1<f64>,
    noise_fraction: f64,
    seed: u64,
) -> Result<TimeSeriesPanel> {
    if schedule.n_injectors() != params.n_injectors()
        || schedule.n_producers() != params.n_producers()
    {
        return Err(Error::ShapeMismatch {
            context: "schedule vs CRM parameters".into(),
            expected: format!("{}/{} wells", params.n_injectors(), params.n_producers()),
            actual: format!(
                "{}/{} controls",
                schedule.n_injectors(),
                schedule.n_producers()
            ),
        });
    }
    if q0.len() != params.n_producers() {
        return Err(Error::invalid("q0 length must match the producer count"));
    }
    if !(0.0..1.0).contains(&noise_fraction) {
        return Err(Error::invalid("noise fraction must be in [0, 1)"));
    }
    let times = Array1::from_vec(schedule.times());
    let injection = schedule.injection_matrix();
    let n_t = times.len();
    let (n_i, n_p) = (params.n_injectors(), params.n_producers());
    let producer_bhp = Array2::from_shape_fn((n_t, n_p), |(_, j)| {
        schedule.producer_bhp_psi()[j]
    });
    let substep = (schedule.step_days() / 200.0).max(1e-3);
    let mut production = integrate_crm_ode(
        params,
        times.view(),
        injection.view(),
        producer_bhp.view(),
        q0.view(),
        substep,
    )?;
    if noise_fraction > 0.0 {
        let mean_q = production.mean().unwrap_or(0.0).max(1e-12);
        let normal = Normal::new(0.0, noise_fraction * mean_q)
            .map_err(|e| Error::invalid(format!("noise model: {e}")))?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for k in 1..n_t {
            for j in 0..n_p {
                production[[k, j]] =
                    (production[[k, j]] + normal.sample(&mut rng)).max(0.0);
            }
        }
    }
    let injector_bhp =
        Array2::from_elem((n_t, n_i), schedule.initial_pressure_psi());
    TimeSeriesPanel::new(times, injection, injector_bhp, production, producer_bhp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conn::ConnectivityMatrix;
    use crate::split::split_rows;
    use crate::synth::schedule::RateStep;
    use ndarray::array;

    fn params_2x2() -> CrmParams {
        CrmParams::new(
            array![20.0, 35.0],
            array![1.0, 1.0],
            ConnectivityMatrix::new(
                vec!["I1".into(), "I2".into()],
                vec!["P1".into(), "P2".into()],
                array![[0.6, 0.3], [0.25, 0.65]],
            )
            .unwrap(),
        )
        .unwrap()
    }

    fn staggered_schedule() -> Schedule {
        let i1 = vec![
            RateStep { start_day: 0.0, rate_bbl_day: 300.0 },
            RateStep { start_day: 400.0, rate_bbl_day: 480.0 },
            RateStep { start_day: 900.0, rate_bbl_day: 220.0 },
        ];
        let i2 = vec![
            RateStep { start_day: 0.0, rate_bbl_day: 250.0 },
            RateStep { start_day: 250.0, rate_bbl_day: 150.0 },
            RateStep { start_day: 700.0, rate_bbl_day: 380.0 },
            RateStep { start_day: 1100.0, rate_bbl_day: 260.0 },
        ];
        Schedule::new(vec![i1, i2], vec![1500.0, 1500.0], 1400.0, 10.0, 3000.0).unwrap()
    }

    fn allocated_q0(params: &CrmParams, schedule: &Schedule) -> Array1<f64> {
        Array1::from_iter((0..params.n_producers()).map(|j| {
            (0..params.n_injectors())
                .map(|i| params.gains().values()[[i, j]] * schedule.applied_rate(i, 0))
                .sum()
        }))
    }

    #[test]
    fn zero_schedule_zero_q0_gives_zero_panel() {
        let params = params_2x2();
        let schedule = Schedule::new(
            vec![
                vec![RateStep { start_day: 0.0, rate_bbl_day: 0.0 }],
                vec![RateStep { start_day: 0.0, rate_bbl_day: 0.0 }],
            ],
            vec![1500.0, 1500.0],
            200.0,
            10.0,
            3000.0,
        )
        .unwrap();
        let panel =
            generate_crm_world(&params, &schedule, &array![0.0, 0.0], 0.0, 0).unwrap();
        assert!(panel.production().iter().all(|&q| q.abs() < 1e-12));
    }

    #[test]
    fn noiseless_panel_is_deterministic_and_fit_recovers_truth() {
        let params = params_2x2();
        let schedule = staggered_schedule();
        let q0 = allocated_q0(&params, &schedule);
        let a = generate_crm_world(&params, &schedule, &q0, 0.0, 1).unwrap();
        let b = generate_crm_world(&params, &schedule, &q0, 0.0, 2).unwrap();
        assert_eq!(a.production(), b.production()); // seed only matters with noise

        let split = split_rows(a.n_steps(), (0.7, 0.05, 0.25)).unwrap();
        let fit = crate::crm::crm_fit(&a, &split, 1e-5, 8, 5).unwrap();
        for j in 0..2 {
            let rel = (fit.params.tau_days()[j] - params.tau_days()[j]).abs()
                / params.tau_days()[j];
            assert!(rel < 0.05, "tau[{j}] {} vs {}", fit.params.tau_days()[j], params.tau_days()[j]);
        }
        for i in 0..2 {
            for j in 0..2 {
                let d = (fit.params.gains().values()[[i, j]]
                    - params.gains().values()[[i, j]])
                .abs();
                assert!(d < 0.05, "gain[{i},{j}] off by {d}");
            }
        }
    }

    #[test]
    fn noise_std_matches_requested_fraction() {
        let params = params_2x2();
        let schedule = staggered_schedule();
        let q0 = allocated_q0(&params, &schedule);
        let clean = generate_crm_world(&params, &schedule, &q0, 0.0, 9).unwrap();
        let noisy = generate_crm_world(&params, &schedule, &q0, 0.05, 9).unwrap();
        let diffs: Vec<f64> = clean
            .production()
            .iter()
            .zip(noisy.production().iter())
            .skip(2) // first row is the exact anchor
            .map(|(c, n)| n - c)
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64;
        let std = var.sqrt();
        let target = 0.05 * clean.production().mean().unwrap();
        assert!(
            (std - target).abs() / target < 0.10,
            "sample std {std} vs target {target}"
        );
        // Same seed, same noise; different seed, different noise.
        let again = generate_crm_world(&params, &schedule, &q0, 0.05, 9).unwrap();
        assert_eq!(noisy.production(), again.production());
        let other = generate_crm_world(&params, &schedule, &q0, 0.05, 10).unwrap();
        assert_ne!(noisy.production(), other.production());
    }
}
