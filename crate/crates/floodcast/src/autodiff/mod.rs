//! Self-contained differentiation engine.
//!
//! Reverse-mode gradients of scalar losses over a matrix-operation [`Tape`],
//! forward-mode time-tangents (`Dual`) that stay differentiable in reverse
//! mode, and finite-difference verification utilities.

mod check;
mod dual;
mod tape;

pub use check::{central_difference, gradcheck, max_relative_error, GradCheckReport};
pub use dual::{
    d_add, d_add_row, d_add_scalar, d_col, d_concat_cols, d_matmul, d_mul, d_scale, d_sigmoid,
    d_softplus, d_sub, d_tanh, Dual,
};
pub use tape::{Gradients, Tape, VarId};

use ndarray::Array2;

use crate::error::Result;

/// Differentiate a tape program with respect to a flat parameter vector.
///
/// `builder` receives a fresh tape plus the parameters bound as one
/// `[n_params × 1]` leaf, and must return the 1×1 loss node. Returns the loss
/// value and `∂loss/∂params` in parameter order.
pub fn grad<F>(builder: &F, params: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&Tape, VarId) -> Result<VarId>,
{
    let tape = Tape::new();
    let theta = tape.leaf(Array2::from_shape_vec((params.len(), 1), params.to_vec()).expect(
        "flat parameter vector always reshapes to a column",
    ));
    let loss = builder(&tape, theta)?;
    let grads = tape.backward(loss)?;
    let g = grads.get(theta);
    Ok((
        tape.scalar_value(loss),
        g.iter().copied().collect::<Vec<f64>>(),
    ))
}

/// Evaluate the same program without differentiation (for finite-difference
/// probes).
pub fn eval<F>(builder: &F, params: &[f64]) -> Result<f64>
where
    F: Fn(&Tape, VarId) -> Result<VarId>,
{
    let tape = Tape::new();
    let theta = tape.leaf(
        Array2::from_shape_vec((params.len(), 1), params.to_vec())
            .expect("flat parameter vector always reshapes to a column"),
    );
    let loss = builder(&tape, theta)?;
    Ok(tape.scalar_value(loss))
}
