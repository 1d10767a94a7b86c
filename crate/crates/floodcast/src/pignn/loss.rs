//! Three-term training loss: supervised mismatch on rate and flowing
//! pressure (scaled space) plus a material-balance residual evaluated in
//! physical units, all reduced by one configurable L^m norm.

use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Tape, VarId};
use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

use super::model::{build_forward, ForwardNodes, PiGnnModel, ScaledInputs};

/// Productivity entries below this bound reject the residual evaluation
/// (the positivity map keeps the trained model far above it).
pub const MIN_PRODUCTIVITY: f64 = 1e-12;

/// Norm order and term weights of the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// L^m norm order applied to every term; 2 gives mean-squared error.
    pub norm_order: f64,
    /// Weight of the production-mismatch term.
    pub lambda_q: f64,
    /// Weight of the flowing-pressure-mismatch term.
    pub lambda_p: f64,
    /// Weight of the material-balance residual term; 0 disables the physics
    /// term entirely (the physics-free baseline).
    pub lambda_f: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            norm_order: 2.0,
            lambda_q: 1.0,
            lambda_p: 1.0,
            lambda_f: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.norm_order.is_finite() && self.norm_order >= 1.0) {
            return Err(Error::invalid(format!(
                "loss norm order must be ≥ 1, got {}",
                self.norm_order
            )));
        }
        for (name, v) in [
            ("lambda_q", self.lambda_q),
            ("lambda_p", self.lambda_p),
            ("lambda_f", self.lambda_f),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "loss weight {name} must be ≥ 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// The physics-free twin: identical except `lambda_f = 0`.
    pub fn without_physics(mut self) -> Self {
        self.lambda_f = 0.0;
        self
    }
}

/// Material-balance residual, one entry per timestep and producer:
///
/// `R = (C_t·V̂_p/Ĵ)⊙dq̂/dt + q̂ + C_t·V̂_p⊙dp̂_wf/dt − I·F`
///
/// with everything in physical units (rates bbl/day, pressures psi, times
/// days). `p_wf_hat` itself enters only through its time derivative; it is
/// accepted here so the full head output set can be shape-checked together.
#[allow(clippy::too_many_arguments)]
pub fn physics_residual(
    q_hat: ArrayView2<f64>,
    p_wf_hat: ArrayView2<f64>,
    j_hat: ArrayView2<f64>,
    vp_hat: ArrayView2<f64>,
    dq_dt: ArrayView2<f64>,
    dp_wf_dt: ArrayView2<f64>,
    injection: ArrayView2<f64>,
    gains: ArrayView2<f64>,
    ct_per_psi: f64,
) -> Result<Array2<f64>> {
    let (n, n_prod) = q_hat.dim();
    let check = |name: &str, dim: (usize, usize)| -> Result<()> {
        if dim != (n, n_prod) {
            return Err(Error::ShapeMismatch {
                context: format!("residual {name}"),
                expected: format!("{n} × {n_prod}"),
                actual: format!("{} × {}", dim.0, dim.1),
            });
        }
        Ok(())
    };
    check("flowing pressure", p_wf_hat.dim())?;
    check("productivity", j_hat.dim())?;
    check("pore volume", vp_hat.dim())?;
    check("rate derivative", dq_dt.dim())?;
    check("pressure derivative", dp_wf_dt.dim())?;
    if injection.nrows() != n || gains.dim() != (injection.ncols(), n_prod) {
        return Err(Error::ShapeMismatch {
            context: "residual forcing".into(),
            expected: format!("injection {n} × N_I, gains N_I × {n_prod}"),
            actual: format!(
                "injection {} × {}, gains {} × {}",
                injection.nrows(),
                injection.ncols(),
                gains.nrows(),
                gains.ncols()
            ),
        });
    }
    if let Some(bad) = j_hat.iter().find(|v| **v < MIN_PRODUCTIVITY) {
        return Err(Error::invalid(format!(
            "productivity {bad} below {MIN_PRODUCTIVITY} in residual"
        )));
    }
    let forcing = injection.dot(&gains);
    let mut r = Array2::zeros((n, n_prod));
    for ((k, j), out) in r.indexed_iter_mut() {
        let tau = ct_per_psi * vp_hat[[k, j]] / j_hat[[k, j]];
        *out = tau * dq_dt[[k, j]] + q_hat[[k, j]]
            + ct_per_psi * vp_hat[[k, j]] * dp_wf_dt[[k, j]]
            - forcing[[k, j]];
    }
    Ok(r)
}

/// Pre-sliced, pre-scaled data for one loss evaluation window.
#[derive(Debug, Clone)]
pub(crate) struct LossBatch {
    pub inputs: ScaledInputs,
    pub q_obs_s: Array2<f64>,
    pub pwf_obs_s: Array2<f64>,
    /// Physical injection rates (residual forcing).
    pub inj_phys: Array2<f64>,
    /// `[1 × N_P]` production column ranges (scaled → physical).
    pub q_range_row: Array2<f64>,
    /// `[1 × N_P]` production column minima.
    pub q_min_row: Array2<f64>,
    /// `[1 × N_P]` chain-rule factors dq_phys/dt_phys per unit scaled slope.
    pub dqdt_factor_row: Array2<f64>,
    /// `[1 × N_P]` same for flowing pressure.
    pub dpwfdt_factor_row: Array2<f64>,
    /// Mean observed production over the window (residual normalizer).
    pub resid_scale: f64,
}

impl LossBatch {
    /// Slice `rows` out of the panel and scale with the model's scalers.
    /// The residual normalizer is the mean observed rate over these rows.
    pub fn new(model: &PiGnnModel, panel: &TimeSeriesPanel, rows: Range<usize>) -> Result<Self> {
        if rows.end > panel.n_steps() || rows.is_empty() {
            return Err(Error::invalid(format!(
                "loss window {rows:?} invalid for a {}-row panel",
                panel.n_steps()
            )));
        }
        if panel.n_injectors() != model.n_injectors()
            || panel.n_producers() != model.n_producers()
        {
            return Err(Error::ShapeMismatch {
                context: "loss panel vs model".into(),
                expected: format!("{} × {}", model.n_injectors(), model.n_producers()),
                actual: format!("{} × {}", panel.n_injectors(), panel.n_producers()),
            });
        }
        let r = rows.clone();
        let times = panel.times().slice(ndarray::s![r.clone()]);
        let injection = panel.injection().slice(ndarray::s![r.clone(), ..]);
        let injector_bhp = panel.injector_bhp().slice(ndarray::s![r.clone(), ..]);
        let production = panel.production().slice(ndarray::s![r.clone(), ..]);
        let producer_bhp = panel.producer_bhp().slice(ndarray::s![r, ..]);

        let inputs = model.scale_inputs(times, injection, injector_bhp)?;
        let scalers = &model.scalers;
        let n_prod = model.n_producers();
        let t_range = scalers.time.range(0);
        let q_range_row =
            Array2::from_shape_fn((1, n_prod), |(_, j)| scalers.production.range(j));
        let q_min_row = Array2::from_shape_fn((1, n_prod), |(_, j)| scalers.production.min(j));
        let dqdt_factor_row = q_range_row.mapv(|v| v / t_range);
        let dpwfdt_factor_row =
            Array2::from_shape_fn((1, n_prod), |(_, j)| scalers.producer_bhp.range(j) / t_range);
        let mean_q = production.mean().unwrap_or(0.0);
        Ok(LossBatch {
            inputs,
            q_obs_s: scalers.production.transform(production)?,
            pwf_obs_s: scalers.producer_bhp.transform(producer_bhp)?,
            inj_phys: injection.to_owned(),
            q_range_row,
            q_min_row,
            dqdt_factor_row,
            dpwfdt_factor_row,
            resid_scale: if mean_q.abs() > 0.0 { mean_q.abs() } else { 1.0 },
        })
    }
}

/// Tape nodes of one assembled loss.
pub(crate) struct LossNodes {
    /// λ_q·ℒ_q + λ_p·ℒ_p + λ_f·ℒ_f.
    pub total: VarId,
    /// λ_q·ℒ_q + λ_p·ℒ_p (the model-selection metric).
    pub supervised: VarId,
    /// Physics residual `[n × N_P]`, present only when λ_f > 0. A diagnostic
    /// tap, read by the numeric-agreement tests.
    #[cfg_attr(not(test), allow(dead_code))]
    pub residual: Option<VarId>,
    /// The underlying forward pass, likewise kept for inspection.
    #[cfg_attr(not(test), allow(dead_code))]
    pub forward: ForwardNodes,
}

/// Record the full loss computation on `tape` with parameters bound as
/// `theta`. With `lambda_f = 0` no residual node is ever built, so the
/// program is structurally identical to a physics-free network.
pub(crate) fn build_loss(
    model: &PiGnnModel,
    tape: &Tape,
    theta: VarId,
    batch: &LossBatch,
    config: &LossConfig,
) -> LossNodes {
    let m = config.norm_order;
    let forward = build_forward(model, tape, theta, &batch.inputs);

    let q_obs = tape.leaf(batch.q_obs_s.clone());
    let pwf_obs = tape.leaf(batch.pwf_obs_s.clone());
    let loss_q = tape.mean_all(tape.pow_abs(tape.sub(forward.q_s.primal, q_obs), m));
    let loss_p = tape.mean_all(tape.pow_abs(tape.sub(forward.pwf_s.primal, pwf_obs), m));
    let supervised = tape.add(
        tape.scale(loss_q, config.lambda_q),
        tape.scale(loss_p, config.lambda_p),
    );

    let (total, residual) = if config.lambda_f > 0.0 {
        let q_range = tape.leaf(batch.q_range_row.clone());
        let q_min = tape.leaf(batch.q_min_row.clone());
        let q_phys = tape.add_row(tape.mul_row(forward.q_s.primal, q_range), q_min);
        let dqdt_phys = tape.mul_row(
            forward.q_s.tangent_or_zeros(tape),
            tape.leaf(batch.dqdt_factor_row.clone()),
        );
        let dpwfdt_phys = tape.mul_row(
            forward.pwf_s.tangent_or_zeros(tape),
            tape.leaf(batch.dpwfdt_factor_row.clone()),
        );
        let forcing = tape.matmul(tape.leaf(batch.inj_phys.clone()), forward.f);
        let tau = tape.scale(tape.div(forward.vp, forward.j), model.ct_per_psi);
        let storage = tape.mul(tape.scale(forward.vp, model.ct_per_psi), dpwfdt_phys);
        let residual = tape.sub(
            tape.add(tape.add(tape.mul(tau, dqdt_phys), q_phys), storage),
            forcing,
        );
        let loss_f = tape.mean_all(tape.pow_abs(
            tape.scale(residual, 1.0 / batch.resid_scale),
            m,
        ));
        (
            tape.add(supervised, tape.scale(loss_f, config.lambda_f)),
            Some(residual),
        )
    } else {
        (supervised, None)
    };

    LossNodes {
        total,
        supervised,
        residual,
        forward,
    }
}

/// Total loss at the model's current parameters over `rows`.
pub fn total_loss(
    model: &PiGnnModel,
    panel: &TimeSeriesPanel,
    rows: Range<usize>,
    config: &LossConfig,
) -> Result<f64> {
    config.validate()?;
    let batch = LossBatch::new(model, panel, rows)?;
    autodiff::eval(
        &|tape, theta| Ok(build_loss(model, tape, theta, &batch, config).total),
        model.params(),
    )
}

/// Total loss over `rows` evaluated at an arbitrary parameter vector
/// (finite-difference probes).
pub fn loss_at(
    model: &PiGnnModel,
    params: &[f64],
    panel: &TimeSeriesPanel,
    rows: Range<usize>,
    config: &LossConfig,
) -> Result<f64> {
    config.validate()?;
    if params.len() != model.n_params() {
        return Err(Error::invalid(format!(
            "expected {} parameters, got {}",
            model.n_params(),
            params.len()
        )));
    }
    let batch = LossBatch::new(model, panel, rows)?;
    autodiff::eval(
        &|tape, theta| Ok(build_loss(model, tape, theta, &batch, config).total),
        params,
    )
}

/// Loss and its gradient with respect to every parameter (including the
/// connectivity block), at the model's current parameters.
pub fn loss_gradient(
    model: &PiGnnModel,
    panel: &TimeSeriesPanel,
    rows: Range<usize>,
    config: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    config.validate()?;
    let batch = LossBatch::new(model, panel, rows)?;
    autodiff::grad(
        &|tape, theta| Ok(build_loss(model, tape, theta, &batch, config).total),
        model.params(),
    )
}

/// Scaled-space time derivative of one predicted production entry together
/// with its gradient over all parameters (forward-over-reverse).
///
/// `row` indexes within the `rows` window; returns
/// `(dq̂_s/dt_s at (row, producer), ∂/∂θ of that derivative)`.
pub fn time_derivative_gradient(
    model: &PiGnnModel,
    panel: &TimeSeriesPanel,
    rows: Range<usize>,
    row: usize,
    producer: usize,
) -> Result<(f64, Vec<f64>)> {
    let batch = LossBatch::new(model, panel, rows)?;
    let n = batch.inputs.t_s.nrows();
    if row >= n || producer >= model.n_producers() {
        return Err(Error::invalid(format!(
            "entry ({row}, {producer}) outside {} × {}",
            n,
            model.n_producers()
        )));
    }
    let mut mask = Array2::zeros((n, model.n_producers()));
    mask[[row, producer]] = 1.0;
    autodiff::grad(
        &|tape, theta| {
            let forward = build_forward(model, tape, theta, &batch.inputs);
            let dqdt = forward.q_s.tangent_or_zeros(tape);
            Ok(tape.sum_all(tape.mul(dqdt, tape.leaf(mask.clone()))))
        },
        model.params(),
    )
}

/// The same time derivative evaluated at an arbitrary parameter vector
/// (finite-difference probes of [`time_derivative_gradient`]).
pub fn time_derivative_at(
    model: &PiGnnModel,
    params: &[f64],
    panel: &TimeSeriesPanel,
    rows: Range<usize>,
    row: usize,
    producer: usize,
) -> Result<f64> {
    if params.len() != model.n_params() {
        return Err(Error::invalid(format!(
            "expected {} parameters, got {}",
            model.n_params(),
            params.len()
        )));
    }
    let batch = LossBatch::new(model, panel, rows)?;
    let n = batch.inputs.t_s.nrows();
    if row >= n || producer >= model.n_producers() {
        return Err(Error::invalid(format!(
            "entry ({row}, {producer}) outside {} × {}",
            n,
            model.n_producers()
        )));
    }
    let mut mask = Array2::zeros((n, model.n_producers()));
    mask[[row, producer]] = 1.0;
    autodiff::eval(
        &|tape, theta| {
            let forward = build_forward(model, tape, theta, &batch.inputs);
            let dqdt = forward.q_s.tangent_or_zeros(tape);
            Ok(tape.sum_all(tape.mul(dqdt, tape.leaf(mask.clone()))))
        },
        params,
    )
}

/// Validation metric: supervised terms only, at the model's parameters.
pub(crate) fn supervised_loss(
    model: &PiGnnModel,
    batch: &LossBatch,
    config: &LossConfig,
) -> Result<f64> {
    let tape = Tape::new();
    let theta = tape.leaf(
        Array2::from_shape_vec((model.n_params(), 1), model.params().to_vec())
            .expect("flat parameters reshape to a column"),
    );
    // Physics term skipped outright: validation tracks predictive mismatch.
    let nodes = build_loss(model, &tape, theta, batch, &config.without_physics());
    let v = tape.scalar_value(nodes.supervised);
    if !v.is_finite() {
        return Err(Error::NonFinite {
            context: "validation loss".into(),
        });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::super::model::{forward_scaled, toy_panel, AdjacencySource, ModelConfig};
    use super::*;
    use crate::autodiff::gradcheck;
    use crate::conn::ConnectivityMatrix;
    use crate::crm::CrmParams;
    use crate::split::{split_rows, DataSplit};
    use crate::synth::{generate_crm_world, RateStep, Schedule};
    use ndarray::array;

    fn ids(tags: &[&str]) -> Vec<String> {
        tags.iter().map(|s| s.to_string()).collect()
    }

    fn small_model(
        panel: &TimeSeriesPanel,
        split: &DataSplit,
        seed: u64,
    ) -> PiGnnModel {
        let inj_ids: Vec<String> =
            (1..=panel.n_injectors()).map(|i| format!("I{i}")).collect();
        let prod_ids: Vec<String> =
            (1..=panel.n_producers()).map(|j| format!("P{j}")).collect();
        PiGnnModel::init(
            panel,
            split,
            &inj_ids,
            &prod_ids,
            AdjacencySource::SelfLearned,
            ModelConfig {
                gcn_width: 3,
                head_hidden: 4,
                use_injector_bhp: true,
                j_scale: 1.0,
            },
            1e-5,
            seed,
        )
        .unwrap()
    }

    fn fixture_panel(n_steps: usize, n_inj: usize, n_prod: usize) -> TimeSeriesPanel {
        toy_panel(n_steps, n_inj, n_prod)
    }

    #[test]
    fn steady_state_zeroes_the_residual() {
        // q = I·F with zero derivatives: the balance closes exactly for any
        // positive productivity and pore volume.
        let injection = array![[100.0, 50.0], [80.0, 60.0]];
        let gains = array![[0.6, 0.4], [0.3, 0.7]];
        let q = injection.dot(&gains);
        let zeros = Array2::zeros(q.dim());
        let ones = Array2::ones(q.dim());
        let r = physics_residual(
            q.view(),
            zeros.view(),
            ones.view(),
            (&ones * 5.0e6).view(),
            zeros.view(),
            zeros.view(),
            injection.view(),
            gains.view(),
            1e-5,
        )
        .unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-10), "{r:?}");
    }

    #[test]
    fn exponential_depletion_zeroes_the_residual() {
        // q = q0·e^{−t/τ}, no injection, constant flowing pressure, and
        // C_t·V_p/J = τ: the classic drawdown solution.
        let tau = 25.0;
        let q0 = 140.0;
        let n = 30;
        let times: Vec<f64> = (0..n).map(|k| 3.0 * k as f64).collect();
        let q = Array2::from_shape_fn((n, 1), |(k, _)| q0 * (-times[k] / tau).exp());
        let dqdt = q.mapv(|v| -v / tau);
        let j = Array2::from_elem((n, 1), 2.0);
        let ct = 1e-5;
        let vp = j.mapv(|jv| tau * jv / ct);
        let zeros = Array2::zeros((n, 1));
        let injection = Array2::zeros((n, 1));
        let gains = array![[0.8]];
        let r = physics_residual(
            q.view(),
            zeros.view(),
            j.view(),
            vp.view(),
            dqdt.view(),
            zeros.view(),
            injection.view(),
            gains.view(),
            ct,
        )
        .unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-9), "{r:?}");
    }

    #[test]
    fn residual_matches_independent_expression() {
        // Arbitrary numbers, independently coded accumulation.
        let q = array![[10.0, 20.0], [30.0, 40.0]];
        let pwf = array![[1500.0, 1400.0], [1450.0, 1380.0]];
        let j = array![[2.0, 3.0], [4.0, 5.0]];
        let vp = array![[1e6, 2e6], [3e6, 4e6]];
        let dqdt = array![[0.5, -0.2], [0.1, 0.3]];
        let dpdt = array![[-2.0, 1.0], [0.5, -0.5]];
        let injection = array![[200.0], [250.0]];
        let gains = array![[0.55, 0.35]];
        let ct = 2e-5;
        let r = physics_residual(
            q.view(),
            pwf.view(),
            j.view(),
            vp.view(),
            dqdt.view(),
            dpdt.view(),
            injection.view(),
            gains.view(),
            ct,
        )
        .unwrap();
        for k in 0..2 {
            for p in 0..2 {
                let expect = (ct * vp[[k, p]] / j[[k, p]]) * dqdt[[k, p]]
                    + q[[k, p]]
                    + ct * vp[[k, p]] * dpdt[[k, p]]
                    - injection[[k, 0]] * gains[[0, p]];
                assert!((r[[k, p]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tiny_productivity_is_rejected() {
        let one = Array2::ones((1, 1));
        let zero = Array2::zeros((1, 1));
        let err = physics_residual(
            one.view(),
            zero.view(),
            Array2::from_elem((1, 1), 1e-13).view(),
            one.view(),
            zero.view(),
            zero.view(),
            one.view(),
            array![[0.5]].view(),
            1e-5,
        );
        assert!(err.is_err());
    }

    #[test]
    fn generating_parameters_zero_the_residual_on_exact_panels() {
        // Panels produced by the closed-form material-balance world, fed
        // back with the generating τ, J, F and V_p = τJ/C_t: the residual
        // must vanish to machine precision (well under 1e-8 of the mean
        // rate). Derivatives come from the interval decay formula, which
        // uses the previous row, not the row being checked.
        let ct = 1e-5;
        let tau = array![22.0, 9.0, 41.0];
        let prod_j = array![1.4, 0.8, 2.2];
        let gains = ConnectivityMatrix::new(
            ids(&["I1", "I2"]),
            ids(&["P1", "P2", "P3"]),
            array![[0.5, 0.3, 0.2], [0.25, 0.35, 0.4]],
        )
        .unwrap();
        let params = CrmParams::new(tau.clone(), prod_j.clone(), gains).unwrap();
        let schedule = Schedule::new(
            vec![
                vec![
                    RateStep { start_day: 0.0, rate_bbl_day: 320.0 },
                    RateStep { start_day: 300.0, rate_bbl_day: 180.0 },
                ],
                vec![
                    RateStep { start_day: 0.0, rate_bbl_day: 260.0 },
                    RateStep { start_day: 450.0, rate_bbl_day: 400.0 },
                ],
            ],
            vec![1500.0, 1500.0, 1500.0],
            900.0,
            10.0,
            3000.0,
        )
        .unwrap();
        let q0 = array![150.0, 110.0, 190.0];
        let panel = generate_crm_world(&params, &schedule, &q0, 0.0, 0).unwrap();

        let n = panel.n_steps();
        let q = panel.production();
        let injection = panel.injection();
        let f = params.gains().values();
        let forcing = injection.dot(f);
        let mut dqdt = Array2::zeros((n, 3));
        for jp in 0..3 {
            // Row 0 sits at the initial condition; the ODE itself gives the
            // right-hand derivative under the first interval's forcing.
            dqdt[[0, jp]] = -(q[[0, jp]] - forcing[[0, jp]]) / tau[jp];
            for k in 1..n {
                let dt = panel.times()[k] - panel.times()[k - 1];
                dqdt[[k, jp]] = -(q[[k - 1, jp]] - forcing[[k, jp]]) / tau[jp]
                    * (-dt / tau[jp]).exp();
            }
        }
        let j_mat = Array2::from_shape_fn((n, 3), |(_, jp)| prod_j[jp]);
        let vp = Array2::from_shape_fn((n, 3), |(_, jp)| tau[jp] * prod_j[jp] / ct);
        let zeros = Array2::zeros((n, 3));
        let r = physics_residual(
            q.view(),
            panel.producer_bhp().view(),
            j_mat.view(),
            vp.view(),
            dqdt.view(),
            zeros.view(),
            injection.view(),
            f.view(),
            ct,
        )
        .unwrap();
        let bound = 1e-8 * q.mean().unwrap();
        let max = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < bound, "max residual {max} vs bound {bound}");
    }

    #[test]
    fn physics_free_loss_reduces_to_supervised_mse() {
        let panel = fixture_panel(40, 2, 3);
        let split = split_rows(40, (0.7, 0.05, 0.25)).unwrap();
        let model = small_model(&panel, &split, 4);
        let config = LossConfig::default().without_physics();
        let loss = total_loss(&model, &panel, split.train.clone(), &config).unwrap();

        // Independent evaluation from the forward outputs.
        let batch = LossBatch::new(&model, &panel, split.train.clone()).unwrap();
        let out = forward_scaled(&model, &batch.inputs).unwrap();
        let mse = |a: &Array2<f64>, b: &Array2<f64>| {
            let d = a - b;
            d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64
        };
        let expect = mse(&out.q_scaled, &batch.q_obs_s) + mse(&out.p_wf_scaled, &batch.pwf_obs_s);
        assert!((loss - expect).abs() < 1e-12, "{loss} vs {expect}");
    }

    #[test]
    fn loss_is_linear_in_the_physics_weight() {
        let panel = fixture_panel(40, 2, 3);
        let split = split_rows(40, (0.7, 0.05, 0.25)).unwrap();
        let model = small_model(&panel, &split, 9);
        let at = |lambda_f: f64| {
            let config = LossConfig {
                lambda_f,
                ..LossConfig::default()
            };
            total_loss(&model, &panel, split.train.clone(), &config).unwrap()
        };
        let (l0, l1, l2) = (at(0.0), at(1.0), at(2.0));
        assert!(l1 > l0, "physics term should be positive at init");
        assert!((l2 - l1 - (l1 - l0)).abs() < 1e-10 * l1.max(1.0));
    }

    #[test]
    fn tape_residual_agrees_with_numeric_evaluation() {
        let panel = fixture_panel(40, 2, 3);
        let split = split_rows(40, (0.7, 0.05, 0.25)).unwrap();
        let model = small_model(&panel, &split, 17);
        let config = LossConfig::default();
        let batch = LossBatch::new(&model, &panel, split.train.clone()).unwrap();

        let tape = Tape::new();
        let theta = tape.leaf(
            Array2::from_shape_vec((model.n_params(), 1), model.params().to_vec()).unwrap(),
        );
        let nodes = build_loss(&model, &tape, theta, &batch, &config);
        let tape_resid = tape.value(nodes.residual.unwrap());

        // Rebuild the residual numerically from the forward values and the
        // chain-rule factors.
        let q_s = tape.value(nodes.forward.q_s.primal);
        let dq_s = tape.value(nodes.forward.q_s.tangent.unwrap());
        let dp_s = tape.value(nodes.forward.pwf_s.tangent.unwrap());
        let j = tape.value(nodes.forward.j);
        let vp = tape.value(nodes.forward.vp);
        let f = tape.value(nodes.forward.f);
        let n = q_s.nrows();
        let q_phys = Array2::from_shape_fn((n, 3), |(k, p)| {
            q_s[[k, p]] * batch.q_range_row[[0, p]] + batch.q_min_row[[0, p]]
        });
        let dqdt = Array2::from_shape_fn((n, 3), |(k, p)| {
            dq_s[[k, p]] * batch.dqdt_factor_row[[0, p]]
        });
        let dpdt = Array2::from_shape_fn((n, 3), |(k, p)| {
            dp_s[[k, p]] * batch.dpwfdt_factor_row[[0, p]]
        });
        let numeric = physics_residual(
            q_phys.view(),
            Array2::zeros((n, 3)).view(),
            j.view(),
            vp.view(),
            dqdt.view(),
            dpdt.view(),
            batch.inj_phys.view(),
            f.view(),
            model.ct_per_psi,
        )
        .unwrap();
        for (a, b) in tape_resid.iter().zip(numeric.iter()) {
            assert!((a - b).abs() < 1e-9_f64.max(1e-12 * b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn full_loss_gradient_matches_finite_differences() {
        // Compact twin of the differentiation acceptance gate: every
        // parameter, physics term on, both adjacency modes.
        let panel = fixture_panel(50, 2, 4);
        let split = split_rows(50, (0.7, 0.05, 0.25)).unwrap();
        for seed in [1, 2] {
            let model = small_model(&panel, &split, seed);
            let config = LossConfig::default();
            let (_, analytic) =
                loss_gradient(&model, &panel, split.train.clone(), &config).unwrap();
            let f = |p: &[f64]| loss_at(&model, p, &panel, split.train.clone(), &config);
            let report = gradcheck(&f, model.params(), &analytic, 1e-6).unwrap();
            assert!(
                report.max_rel_error < 1e-4,
                "seed {seed}: max rel error {} at parameter {}",
                report.max_rel_error,
                report.worst_index
            );
        }
    }

    #[test]
    fn mixed_time_parameter_derivative_matches_nested_differences() {
        let panel = fixture_panel(40, 2, 3);
        let split = split_rows(40, (0.7, 0.05, 0.25)).unwrap();
        let model = small_model(&panel, &split, 23);
        let rows = split.train.clone();
        let (row, producer) = (11, 1);
        let (dqdt, grad_dqdt) =
            time_derivative_gradient(&model, &panel, rows.clone(), row, producer).unwrap();

        // Inner check: dq̂_s/dt_s against a central difference in the time
        // input alone.
        let batch = LossBatch::new(&model, &panel, rows.clone()).unwrap();
        let h = 1e-6;
        let fd_time = {
            let mut plus = batch.inputs.clone();
            plus.t_s[[row, 0]] += h;
            let mut minus = batch.inputs.clone();
            minus.t_s[[row, 0]] -= h;
            let qp = forward_scaled(&model, &plus).unwrap().q_scaled[[row, producer]];
            let qm = forward_scaled(&model, &minus).unwrap().q_scaled[[row, producer]];
            (qp - qm) / (2.0 * h)
        };
        assert!(
            (dqdt - fd_time).abs() < 1e-6 * dqdt.abs().max(1.0),
            "{dqdt} vs {fd_time}"
        );

        // Outer check: ∂/∂θ of the time derivative against nested central
        // differences (FD over parameters of an FD over time).
        let mut max_rel = 0.0f64;
        for idx in (0..model.n_params()).step_by(7) {
            let probe = |shift: f64| {
                let mut m = model.clone();
                let mut p = m.params().to_vec();
                p[idx] += shift;
                m.set_params(p);
                let mut plus = batch.inputs.clone();
                plus.t_s[[row, 0]] += h;
                let mut minus = batch.inputs.clone();
                minus.t_s[[row, 0]] -= h;
                let qp = forward_scaled(&m, &plus).unwrap().q_scaled[[row, producer]];
                let qm = forward_scaled(&m, &minus).unwrap().q_scaled[[row, producer]];
                (qp - qm) / (2.0 * h)
            };
            let hp = 1e-5;
            let fd = (probe(hp) - probe(-hp)) / (2.0 * hp);
            let denom = fd.abs().max(grad_dqdt[idx].abs()).max(1e-8);
            max_rel = max_rel.max((fd - grad_dqdt[idx]).abs() / denom);
        }
        assert!(max_rel < 1e-3, "worst mixed-derivative error {max_rel}");
    }

    #[test]
    fn loss_window_validation() {
        let panel = fixture_panel(40, 2, 3);
        let split = split_rows(40, (0.7, 0.05, 0.25)).unwrap();
        let model = small_model(&panel, &split, 3);
        let config = LossConfig::default();
        assert!(total_loss(&model, &panel, 0..0, &config).is_err());
        assert!(total_loss(&model, &panel, 0..41, &config).is_err());
        let bad = LossConfig {
            norm_order: 0.5,
            ..LossConfig::default()
        };
        assert!(total_loss(&model, &panel, 0..28, &bad).is_err());
    }
}
