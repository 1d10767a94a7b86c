//! Finite-difference verification of gradients.
//!
//! Shipped as a first-class operation (not only a test helper) because the
//! physics-informed loss is only as trustworthy as its derivatives; the
//! `gradcheck` CLI subcommand and the acceptance suite both run through here.

use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x`.
///
/// Steps are scaled per coordinate: `h_i = h·max(1, |x_i|)`.
pub fn central_difference<F>(f: &F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("step size must be > 0, got {h}")));
    }
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let hi = h * x[i].abs().max(1.0);
        probe[i] = x[i] + hi;
        let up = f(&probe)?;
        probe[i] = x[i] - hi;
        let down = f(&probe)?;
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * hi));
    }
    Ok(grad)
}

/// Largest relative disagreement between two gradient vectors.
///
/// Per component: `|a_i − b_i| / max(|a_i|, |b_i|, floor)`; the floor keeps
/// near-zero components from manufacturing huge ratios out of roundoff.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> Result<(f64, usize)> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "gradient comparison".into(),
            expected: format!("{} components", a.len()),
            actual: format!("{} components", b.len()),
        });
    }
    let mut worst = (0.0_f64, 0);
    for (i, (ai, bi)) in a.iter().zip(b).enumerate() {
        let denom = ai.abs().max(bi.abs()).max(floor);
        let err = (ai - bi).abs() / denom;
        if err > worst.0 {
            worst = (err, i);
        }
    }
    Ok(worst)
}

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub n_params: usize,
}

/// Compare `analytic` (the engine's gradient at `x`) against central finite
/// differences of `f`.
pub fn gradcheck<F>(f: &F, x: &[f64], analytic: &[f64], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let numeric = central_difference(f, x, h)?;
    let (max_rel_error, worst_index) = max_relative_error(analytic, &numeric, 1e-8)?;
    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        n_params: x.len(),
    })
}
