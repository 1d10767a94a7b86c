//! Capacitance-resistance modeling: analytical forecasting, numerical
//! integration, and constrained fitting.
//!
//! The governing material balance per producer j is
//!
//! ```text
//! τ_j dq_j/dt + q_j = Σ_i F_ij I_i(t) − τ_j J_j dp_wf,j/dt,     τ_j = C_t V_p / J_j
//! ```
//!
//! With injection held constant over each interval and BHP varying linearly,
//! the ODE integrates in closed form to a superposition of step responses:
//!
//! ```text
//! q_j(t_n) = q_j(t_0) e^{−(t_n−t_0)/τ_j}
//!          + Σ_{k=1..n} e^{−(t_n−t_k)/τ_j} (1 − e^{−Δt_k/τ_j})
//!                       (Σ_i F_ij I_i^(k) − τ_j J_j Δp_wf,j^(k)/Δt_k)
//! ```
//!
//! where interval k spans (t_{k−1}, t_k], `I^(k)` is the injection rate held
//! over that interval (sampled at its end row), and `Δp^(k) = p_wf(t_k) −
//! p_wf(t_{k−1})`. [`crm_forecast`] evaluates this sum directly;
//! [`integrate_crm_ode`] integrates the ODE with classical Runge–Kutta as an
//! independent check and as a truth generator; [`crm_fit`] recovers (τ, J, F)
//! from observed panels by projected gradient descent.



use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conn::ConnectivityMatrix;
use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;
use crate::split::DataSplit;

/// Parameters of the per-producer material-balance model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrmParams {
    tau_days: Array1<f64>,
    productivity: Array1<f64>,
    gains: ConnectivityMatrix,
}

impl CrmParams {
    /// `tau_days` and `productivity` are per producer; `gains` rows are
    /// injectors, columns producers. Row sums of `gains` may not exceed 1
    /// (injected water is allocated, never multiplied).
    pub fn new(
        tau_days: Array1<f64>,
        productivity: Array1<f64>,
        gains: ConnectivityMatrix,
    ) -> Result<Self> {
        let n_p = gains.n_producers();
        if tau_days.len() != n_p || productivity.len() != n_p {
            return Err(Error::ShapeMismatch {
                context: "CRM parameter vectors".into(),
                expected: format!("tau and productivity of length {n_p}"),
                actual: format!("{} and {}", tau_days.len(), productivity.len()),
            });
        }
        if tau_days.iter().any(|&t| !t.is_finite() || t <= 0.0) {
            return Err(Error::invalid("CRM time constants must be positive and finite"));
        }
        if productivity.iter().any(|&j| !j.is_finite() || j <= 0.0) {
            return Err(Error::invalid(
                "CRM productivity indices must be positive and finite",
            ));
        }
        for i in 0..gains.n_injectors() {
            let s = gains.row_sum(i);
            if s > 1.0 + 1e-9 {
                return Err(Error::invalid(format!(
                    "gain row {i} sums to {s}; injected water cannot be over-allocated"
                )));
            }
        }
        Ok(Self {
            tau_days,
            productivity,
            gains,
        })
    }

    pub fn tau_days(&self) -> &Array1<f64> {
        &self.tau_days
    }
    pub fn productivity(&self) -> &Array1<f64> {
        &self.productivity
    }
    pub fn gains(&self) -> &ConnectivityMatrix {
        &self.gains
    }
    pub fn n_injectors(&self) -> usize {
        self.gains.n_injectors()
    }
    pub fn n_producers(&self) -> usize {
        self.gains.n_producers()
    }

    /// Implied drainage pore volume per producer, `V_p = τ·J/C_t`.
    pub fn drainage_volume(&self, ct_per_psi: f64) -> Array1<f64> {
        (&self.tau_days * &self.productivity) / ct_per_psi
    }
}

fn check_forecast_inputs(
    params: &CrmParams,
    times: ArrayView1<f64>,
    injection: ArrayView2<f64>,
    producer_bhp: ArrayView2<f64>,
    q0: ArrayView1<f64>,
) -> Result<()> {
    let (n_t, n_i, n_p) = (times.len(), params.n_injectors(), params.n_producers());
    if n_t < 2 {
        return Err(Error::invalid("forecast needs at least two time rows"));
    }
    if injection.dim() != (n_t, n_i) || producer_bhp.dim() != (n_t, n_p) || q0.len() != n_p {
        return Err(Error::ShapeMismatch {
            context: "forecast inputs".into(),
            expected: format!("injection {n_t}×{n_i}, BHP {n_t}×{n_p}, q0 len {n_p}"),
            actual: format!(
                "injection {:?}, BHP {:?}, q0 len {}",
                injection.dim(),
                producer_bhp.dim(),
                q0.len()
            ),
        });
    }
    for w in times.as_slice().unwrap().windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid("forecast times must be strictly increasing"));
        }
    }
    Ok(())
}

/// Per-interval constant forcing for producer j over interval k
/// (spanning `times[k−1]..times[k]`): `Σ_i F_ij I_i^(k) − τ_j J_j Δp^(k)/Δt_k`.
fn interval_forcing(
    params: &CrmParams,
    injection: ArrayView2<f64>,
    producer_bhp: ArrayView2<f64>,
    dt: f64,
    k: usize,
    j: usize,
) -> f64 {
    let alloc: f64 = (0..params.n_injectors())
        .map(|i| params.gains.values()[[i, j]] * injection[[k, i]])
        .sum();
    let dp = producer_bhp[[k, j]] - producer_bhp[[k - 1, j]];
    alloc - params.tau_days[j] * params.productivity[j] * dp / dt
}

/// Closed-form forecast: exponential decay of the initial rate plus the
/// summed step responses of per-interval forcing. Exact for stepwise
/// injection and piecewise-linear BHP.
pub fn crm_forecast(
    params: &CrmParams,
    times: ArrayView1<f64>,
    injection: ArrayView2<f64>,
    producer_bhp: ArrayView2<f64>,
    q0: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    check_forecast_inputs(params, times, injection, producer_bhp, q0)?;
    let (n_t, n_p) = (times.len(), params.n_producers());
    let mut q = Array2::zeros((n_t, n_p));
    for j in 0..n_p {
        let tau = params.tau_days[j];
        q[[0, j]] = q0[j];
        for n in 1..n_t {
            let mut acc = q0[j] * (-(times[n] - times[0]) / tau).exp();
            for k in 1..=n {
                let dt = times[k] - times[k - 1];
                let step = (-(times[n] - times[k]) / tau).exp() * (1.0 - (-dt / tau).exp());
                acc += step * interval_forcing(params, injection, producer_bhp, dt, k, j);
            }
            q[[n, j]] = acc;
        }
    }
    Ok(q)
}

/// O(N_T) recursion equivalent to [`crm_forecast`]: each interval's exact
/// update is `q_k = q_{k−1} e^{−Δt/τ} + (1 − e^{−Δt/τ})·forcing_k`. Used by
/// the fitting loop, where forecasts are evaluated thousands of times.
fn crm_forecast_recursive(
    params: &CrmParams,
    times: ArrayView1<f64>,
    injection: ArrayView2<f64>,
    producer_bhp: ArrayView2<f64>,
    q0: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    check_forecast_inputs(params, times, injection, producer_bhp, q0)?;
    let (n_t, n_p) = (times.len(), params.n_producers());
    let mut q = Array2::zeros((n_t, n_p));
    for j in 0..n_p {
        let tau = params.tau_days[j];
        q[[0, j]] = q0[j];
        for k in 1..n_t {
            let dt = times[k] - times[k - 1];
            let decay = (-dt / tau).exp();
            let forcing = interval_forcing(params, injection, producer_bhp, dt, k, j);
            q[[k, j]] = q[[k - 1, j]] * decay + (1.0 - decay) * forcing;
        }
    }
    Ok(q)
}

/// Classical 4th-order Runge–Kutta integration of the governing ODE with
/// piecewise-constant injection and piecewise-linear BHP per interval.
/// Each interval is cut into equal substeps no longer than `substep_days`.
pub fn integrate_crm_ode(
    params: &CrmParams,
    times: ArrayView1<f64>,
    injection: ArrayView2<f64>,
    producer_bhp: ArrayView2<f64>,
    q0: ArrayView1<f64>,
    substep_days: f64,
) -> Result<Array2<f64>> {
    check_forecast_inputs(params, times, injection, producer_bhp, q0)?;
    if !substep_days.is_finite() || substep_days <= 0.0 {
        return Err(Error::invalid("RK4 substep must be positive"));
    }
    let (n_t, n_p) = (times.len(), params.n_producers());
    let mut q = Array2::zeros((n_t, n_p));
    q.row_mut(0).assign(&q0);
    let mut state: Array1<f64> = q0.to_owned();
    for k in 1..n_t {
        let dt = times[k] - times[k - 1];
        let n_sub = (dt / substep_days).ceil().max(1.0) as usize;
        let h = dt / n_sub as f64;
        // Constant forcing within the interval ⇒ dq_j/dt = (c_j − q_j)/τ_j.
        let forcing: Vec<f64> = (0..n_p)
            .map(|j| interval_forcing(params, injection, producer_bhp, dt, k, j))
            .collect();
        for _ in 0..n_sub {
            for j in 0..n_p {
                let tau = params.tau_days[j];
                let f = |qv: f64| (forcing[j] - qv) / tau;
                let y = state[j];
                let k1 = f(y);
                let k2 = f(y + 0.5 * h * k1);
                let k3 = f(y + 0.5 * h * k2);
                let k4 = f(y + h * k3);
                state[j] = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        q.row_mut(k).assign(&state);
    }
    Ok(q)
}

/// Diagnostics from one fitting run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrmFitResult {
    pub params: CrmParams,
    /// Training sum of squared errors of the winning restart.
    pub sse: f64,
    /// Final SSE of every restart (NaN for restarts discarded as non-finite).
    pub restart_sse: Vec<f64>,
}

/// Project one gain row onto `{g ≥ 0, Σ g ≤ 1}`: clip at zero, and if the
/// clipped row still over-allocates, project onto the simplex `Σ g = 1`
/// (sort-based algorithm).
fn project_gain_row(row: &mut [f64]) {
    for g in row.iter_mut() {
        *g = g.max(0.0);
    }
    let sum: f64 = row.iter().sum();
    if sum <= 1.0 {
        return;
    }
    let mut sorted: Vec<f64> = row.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        acc += v;
        let cand = (acc - 1.0) / (i as f64 + 1.0);
        if v - cand > 0.0 {
            theta = cand;
        }
    }
    for g in row.iter_mut() {
        *g = (*g - theta).max(0.0);
    }
}

/// Parameter vector layout for the optimizer:
/// `[log τ (N_P) | log J (N_P) | gains row-major (N_I·N_P)]`.
fn theta_to_params(
    theta: &[f64],
    injector_ids: &[String],
    producer_ids: &[String],
) -> Result<CrmParams> {
    let (n_i, n_p) = (injector_ids.len(), producer_ids.len());
    let tau = Array1::from_iter(theta[..n_p].iter().map(|&v| v.exp()));
    let prod = Array1::from_iter(theta[n_p..2 * n_p].iter().map(|&v| v.exp()));
    let gains = Array2::from_shape_vec((n_i, n_p), theta[2 * n_p..].to_vec())
        .expect("theta layout fixed by construction");
    let gains =
        ConnectivityMatrix::new(injector_ids.to_vec(), producer_ids.to_vec(), gains)?;
    CrmParams::new(tau, prod, gains)
}

fn project_theta(theta: &mut [f64], n_i: usize, n_p: usize) {
    // Keep log τ and log J in generous physical brackets so line-search
    // excursions cannot push exp() to overflow.
    for v in theta[..2 * n_p].iter_mut() {
        *v = v.clamp(-12.0, 12.0);
    }
    for i in 0..n_i {
        let start = 2 * n_p + i * n_p;
        project_gain_row(&mut theta[start..start + n_p]);
    }
}

/// Fit (τ, J, F) to the training range of a panel by multistart projected
/// gradient descent with a backtracking line search. The forecast is
/// anchored at the first training row's observed rates and scored against
/// the remaining training rows.
pub fn crm_fit(
    panel: &TimeSeriesPanel,
    split: &DataSplit,
    _ct_per_psi: f64,
    multistarts: usize,
    seed: u64,
) -> Result<CrmFitResult> {
    let train = split.train.clone();
    if train.len() < 10 {
        return Err(Error::invalid(format!(
            "fitting needs at least 10 training rows, got {}",
            train.len()
        )));
    }
    if multistarts == 0 {
        return Err(Error::invalid("multistarts must be at least 1"));
    }
    let (n_i, n_p) = (panel.n_injectors(), panel.n_producers());
    let times = panel.times().slice(ndarray::s![train.clone()]);
    let injection = panel.injection().slice(ndarray::s![train.clone(), ..]);
    let bhp = panel.producer_bhp().slice(ndarray::s![train.clone(), ..]);
    let q_obs = panel.production().slice(ndarray::s![train.clone(), ..]);
    let q0 = q_obs.row(0);

    let injector_ids: Vec<String> = (0..n_i).map(|i| format!("I{i}")).collect();
    let producer_ids: Vec<String> = (0..n_p).map(|j| format!("P{j}")).collect();

    let sse_of = |theta: &[f64]| -> f64 {
        let params = match theta_to_params(theta, &injector_ids, &producer_ids) {
            Ok(p) => p,
            Err(_) => return f64::INFINITY,
        };
        let q_hat = match crm_forecast_recursive(&params, times, injection, bhp, q0) {
            Ok(q) => q,
            Err(_) => return f64::INFINITY,
        };
        let sse = (&q_hat - &q_obs).mapv(|e| e * e).sum();
        if sse.is_finite() {
            sse
        } else {
            f64::INFINITY
        }
    };

    let n_theta = 2 * n_p + n_i * n_p;
    let restarts: Vec<(f64, Vec<f64>)> = (0..multistarts)
        .into_par_iter()
        .map(|r| {
            let mut theta = vec![0.0; n_theta];
            if r == 0 {
                theta = variable_projection_init(times, injection, bhp, q_obs, n_i, n_p);
            } else {
                let mut rng =
                    ChaCha12Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9 * r as u64));
                let log_tau = Uniform::new(1.0f64.ln(), 200.0f64.ln()).unwrap();
                let log_j = Uniform::new(0.01f64.ln(), 10.0f64.ln()).unwrap();
                for v in theta[..n_p].iter_mut() {
                    *v = log_tau.sample(&mut rng);
                }
                for v in theta[n_p..2 * n_p].iter_mut() {
                    *v = log_j.sample(&mut rng);
                }
                for v in theta[2 * n_p..].iter_mut() {
                    *v = rng.random_range(0.0..1.0);
                }
            }
            project_theta(&mut theta, n_i, n_p);
            let sse = descend(&mut theta, n_i, n_p, &sse_of, 1500);
            (sse, theta)
        })
        .collect();

    let restart_sse: Vec<f64> = restarts.iter().map(|(s, _)| *s).collect();
    let best = restarts
        .iter()
        .filter(|(s, _)| s.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Solver {
            context: "CRM fitting".into(),
            message: "every restart produced a non-finite objective".into(),
        })?;

    Ok(CrmFitResult {
        params: theta_to_params(&best.1, &injector_ids, &producer_ids)?,
        sse: best.0,
        restart_sse,
    })
}

/// Solve a small dense symmetric system by Gaussian elimination with
/// partial pivoting. Systems here are (N_I+1)×(N_I+1).
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Deterministic warm start: for each producer, scan a log-spaced τ grid;
/// at fixed τ the forecast is linear in the gains and in the BHP-slope
/// coefficient τ·J (each drives its own exponentially-smoothed response),
/// so the inner subproblem is a tiny ridge least-squares solve. The best
/// grid point per producer seeds one optimizer restart.
fn variable_projection_init(
    times: ArrayView1<f64>,
    injection: ArrayView2<f64>,
    producer_bhp: ArrayView2<f64>,
    q_obs: ArrayView2<f64>,
    n_i: usize,
    n_p: usize,
) -> Vec<f64> {
    let n_t = times.len();
    let mut theta = vec![0.0; 2 * n_p + n_i * n_p];
    for j in 0..n_p {
        let mut best: Option<(f64, f64, Vec<f64>)> = None; // (sse, tau, x)
        for g in 0..80 {
            let tau = (1.0f64.ln() + (200.0f64.ln() - 1.0f64.ln()) * g as f64 / 79.0).exp();
            // Exponentially-smoothed responses: initial-rate decay chain,
            // one unit-gain response per injector, one BHP-slope response.
            let mut r0 = q_obs[[0, j]];
            let mut ri = vec![0.0; n_i];
            let mut rp = 0.0;
            let mut ata = vec![vec![0.0; n_i + 1]; n_i + 1];
            let mut aty = vec![0.0; n_i + 1];
            let mut yty = 0.0;
            for k in 1..n_t {
                let dt = times[k] - times[k - 1];
                let decay = (-dt / tau).exp();
                r0 *= decay;
                for (i, r) in ri.iter_mut().enumerate() {
                    *r = *r * decay + (1.0 - decay) * injection[[k, i]];
                }
                let slope = (producer_bhp[[k, j]] - producer_bhp[[k - 1, j]]) / dt;
                rp = rp * decay + (1.0 - decay) * (-slope);
                let row: Vec<f64> = ri.iter().copied().chain(std::iter::once(rp)).collect();
                let y = q_obs[[k, j]] - r0;
                for (a, &ra) in ata.iter_mut().zip(&row) {
                    for (v, &rb) in a.iter_mut().zip(&row) {
                        *v += ra * rb;
                    }
                }
                for (v, &ra) in aty.iter_mut().zip(&row) {
                    *v += ra * y;
                }
                yty += y * y;
            }
            let ridge = 1e-10
                * (0..=n_i)
                    .map(|d| ata[d][d])
                    .fold(0.0f64, f64::max)
                    .max(1e-300);
            for (d, a) in ata.iter_mut().enumerate() {
                a[d] += ridge;
            }
            let Some(x) = solve_dense(ata.clone(), aty.clone()) else {
                continue;
            };
            // ||Ax − y||² = yᵀy − 2xᵀAᵀy + xᵀAᵀAx.
            let mut sse = yty;
            for (r, &xr) in aty.iter().zip(&x) {
                sse -= 2.0 * r * xr;
            }
            for (r, a) in x.iter().zip(&ata) {
                let mut acc = 0.0;
                for (v, &xc) in a.iter().zip(&x) {
                    acc += v * xc;
                }
                sse += r * acc;
            }
            if best.as_ref().is_none_or(|(s, _, _)| sse < *s) {
                best = Some((sse, tau, x));
            }
        }
        let (_, tau, x) = best.expect("grid scan always yields a candidate");
        theta[j] = tau.ln();
        let j_est = (x[n_i] / tau).clamp(0.01, 10.0);
        theta[n_p + j] = j_est.ln();
        for i in 0..n_i {
            theta[2 * n_p + i * n_p + j] = x[i].clamp(0.0, 1.0);
        }
    }
    theta
}

/// Projected gradient descent with central-difference gradients, a
/// per-coordinate RMS preconditioner (log τ and gain coordinates live on
/// very different scales), and a backtracking step size: steps are accepted
/// only on strict decrease, so the objective is non-increasing by
/// construction.
fn descend(
    theta: &mut Vec<f64>,
    n_i: usize,
    n_p: usize,
    sse_of: &dyn Fn(&[f64]) -> f64,
    max_iters: usize,
) -> f64 {
    let mut current = sse_of(theta);
    if !current.is_finite() {
        return f64::INFINITY;
    }
    let mut alpha = 0.25;
    let mut ms = vec![0.0f64; theta.len()];
    for iter in 0..max_iters {
        let mut grad = vec![0.0; theta.len()];
        for idx in 0..theta.len() {
            let h = 1e-6 * theta[idx].abs().max(1.0);
            let saved = theta[idx];
            theta[idx] = saved + h;
            let fp = sse_of(theta);
            theta[idx] = saved - h;
            let fm = sse_of(theta);
            theta[idx] = saved;
            grad[idx] = (fp - fm) / (2.0 * h);
        }
        if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-12 {
            break;
        }
        for (m, &g) in ms.iter_mut().zip(&grad) {
            *m = if iter == 0 { g * g } else { 0.9 * *m + 0.1 * g * g };
        }
        let dir: Vec<f64> = grad
            .iter()
            .zip(&ms)
            .map(|(&g, &m)| g / (m.sqrt() + 1e-12))
            .collect();
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand: Vec<f64> = theta
                .iter()
                .zip(&dir)
                .map(|(&t, &d)| t - alpha * d)
                .collect();
            project_theta(&mut cand, n_i, n_p);
            let cand_sse = sse_of(&cand);
            if cand_sse < current {
                *theta = cand;
                current = cand_sse;
                alpha = (alpha * 1.5).min(2.0);
                accepted = true;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    current
}
