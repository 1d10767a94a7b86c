//! Forward-mode tangents layered over the reverse-mode tape.
//!
//! A [`Dual`] pairs a primal tape node with an optional tangent node carrying
//! the directional derivative with respect to the time input. Tangent
//! arithmetic follows the chain rule and — crucially — is recorded as
//! ordinary tape nodes, so one reverse sweep over a tangent-dependent loss
//! yields mixed second derivatives ∂/∂params(d·/dt) (forward-over-reverse).
//!
//! `tangent: None` means the value is structurally constant in time, making
//! "tangent of a constant-in-t branch is exactly 0" hold by construction.
//! Only C¹ primitives are lifted; non-smooth tape ops (`pow_abs` at m=1,
//! clamps) have no dual form, so a non-differentiable time path fails to
//! build.

use ndarray::Array2;

use super::tape::{Tape, VarId};

/// A tape value together with its time-tangent.
#[derive(Debug, Clone, Copy)]
pub struct Dual {
    pub primal: VarId,
    pub tangent: Option<VarId>,
}

impl Dual {
    /// A value with no time dependence.
    pub fn constant(primal: VarId) -> Self {
        Dual {
            primal,
            tangent: None,
        }
    }

    /// A value with an explicit tangent node (seed `dt/dt = 1` by passing a
    /// ones tangent on the time input itself).
    pub fn seeded(primal: VarId, tangent: VarId) -> Self {
        Dual {
            primal,
            tangent: Some(tangent),
        }
    }

    /// The tangent node, materializing an explicit zero leaf when the value
    /// is constant in time.
    pub fn tangent_or_zeros(&self, tape: &Tape) -> VarId {
        match self.tangent {
            Some(t) => t,
            None => {
                let shape = tape.shape(self.primal);
                tape.leaf(Array2::zeros(shape))
            }
        }
    }
}

/// (a + b, ȧ + ḃ)
pub fn d_add(tape: &Tape, a: Dual, b: Dual) -> Dual {
    let primal = tape.add(a.primal, b.primal);
    let tangent = match (a.tangent, b.tangent) {
        (None, None) => None,
        (Some(ta), None) => Some(ta),
        (None, Some(tb)) => Some(tb),
        (Some(ta), Some(tb)) => Some(tape.add(ta, tb)),
    };
    Dual { primal, tangent }
}

/// (a − b, ȧ − ḃ)
pub fn d_sub(tape: &Tape, a: Dual, b: Dual) -> Dual {
    let primal = tape.sub(a.primal, b.primal);
    let tangent = match (a.tangent, b.tangent) {
        (None, None) => None,
        (Some(ta), None) => Some(ta),
        (None, Some(tb)) => Some(tape.neg(tb)),
        (Some(ta), Some(tb)) => Some(tape.sub(ta, tb)),
    };
    Dual { primal, tangent }
}

/// (a ⊙ b, ȧ ⊙ b + a ⊙ ḃ)
pub fn d_mul(tape: &Tape, a: Dual, b: Dual) -> Dual {
    let primal = tape.mul(a.primal, b.primal);
    let term_a = a.tangent.map(|ta| tape.mul(ta, b.primal));
    let term_b = b.tangent.map(|tb| tape.mul(a.primal, tb));
    let tangent = match (term_a, term_b) {
        (None, None) => None,
        (Some(x), None) | (None, Some(x)) => Some(x),
        (Some(x), Some(y)) => Some(tape.add(x, y)),
    };
    Dual { primal, tangent }
}

/// (a · b, ȧ · b + a · ḃ) — matrix product.
pub fn d_matmul(tape: &Tape, a: Dual, b: Dual) -> Dual {
    let primal = tape.matmul(a.primal, b.primal);
    let term_a = a.tangent.map(|ta| tape.matmul(ta, b.primal));
    let term_b = b.tangent.map(|tb| tape.matmul(a.primal, tb));
    let tangent = match (term_a, term_b) {
        (None, None) => None,
        (Some(x), None) | (None, Some(x)) => Some(x),
        (Some(x), Some(y)) => Some(tape.add(x, y)),
    };
    Dual { primal, tangent }
}

/// (c·a, c·ȧ)
pub fn d_scale(tape: &Tape, a: Dual, c: f64) -> Dual {
    Dual {
        primal: tape.scale(a.primal, c),
        tangent: a.tangent.map(|ta| tape.scale(ta, c)),
    }
}

/// (a + c, ȧ)
pub fn d_add_scalar(tape: &Tape, a: Dual, c: f64) -> Dual {
    Dual {
        primal: tape.add_scalar(a.primal, c),
        tangent: a.tangent,
    }
}

/// (tanh a, (1 − tanh²a) ⊙ ȧ)
pub fn d_tanh(tape: &Tape, a: Dual) -> Dual {
    let y = tape.tanh(a.primal);
    let tangent = a.tangent.map(|ta| {
        // 1 − y², built from tape primitives so it stays differentiable.
        let one_minus = tape.add_scalar(tape.neg(tape.square(y)), 1.0);
        tape.mul(one_minus, ta)
    });
    Dual { primal: y, tangent }
}

/// (σ(a), σ(a)(1−σ(a)) ⊙ ȧ)
pub fn d_sigmoid(tape: &Tape, a: Dual) -> Dual {
    let y = tape.sigmoid(a.primal);
    let tangent = a.tangent.map(|ta| {
        let one_minus = tape.add_scalar(tape.neg(y), 1.0);
        tape.mul(tape.mul(y, one_minus), ta)
    });
    Dual { primal: y, tangent }
}

/// (softplus a, σ(a) ⊙ ȧ)
pub fn d_softplus(tape: &Tape, a: Dual) -> Dual {
    let y = tape.softplus(a.primal);
    let tangent = a.tangent.map(|ta| tape.mul(tape.sigmoid(a.primal), ta));
    Dual { primal: y, tangent }
}

/// Horizontal concatenation; a missing tangent on one side becomes zeros.
pub fn d_concat_cols(tape: &Tape, a: Dual, b: Dual) -> Dual {
    let primal = tape.concat_cols(a.primal, b.primal);
    let tangent = match (a.tangent, b.tangent) {
        (None, None) => None,
        _ => {
            let ta = a.tangent_or_zeros(tape);
            let tb = b.tangent_or_zeros(tape);
            Some(tape.concat_cols(ta, tb))
        }
    };
    Dual { primal, tangent }
}

/// Column extraction.
pub fn d_col(tape: &Tape, a: Dual, j: usize) -> Dual {
    Dual {
        primal: tape.col(a.primal, j),
        tangent: a.tangent.map(|ta| tape.col(ta, j)),
    }
}

/// Row-broadcast addition (bias); the broadcast operand is constant in time.
pub fn d_add_row(tape: &Tape, a: Dual, b: VarId) -> Dual {
    Dual {
        primal: tape.add_row(a.primal, b),
        tangent: a.tangent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// q̂(t) = w·t: tangent is w for any w, and ∂/∂w of (dq̂/dt)² is 2w.
    #[test]
    fn linear_model_tangent_and_mixed_derivative() {
        for w_val in [0.3, -1.7, 4.0] {
            let tape = Tape::new();
            let t = Dual::seeded(tape.scalar(2.5), tape.scalar(1.0));
            let w = tape.scalar(w_val);
            let q = d_mul(&tape, t, Dual::constant(w));
            let dq_dt = q.tangent.expect("time-dependent");
            assert_eq!(tape.scalar_value(dq_dt), w_val);

            let loss = tape.square(dq_dt);
            let g = tape.backward(loss).unwrap();
            assert_eq!(g.get(w)[[0, 0]], 2.0 * w_val);
        }
    }

    #[test]
    fn tanh_tangent_at_zero_is_one() {
        let tape = Tape::new();
        let t = Dual::seeded(tape.scalar(0.0), tape.scalar(1.0));
        let q = d_tanh(&tape, t);
        assert_eq!(tape.scalar_value(q.tangent.unwrap()), 1.0);
    }

    #[test]
    fn constant_branch_has_no_tangent() {
        let tape = Tape::new();
        let t = Dual::seeded(tape.scalar(1.0), tape.scalar(1.0));
        let c = Dual::constant(tape.scalar(3.0));
        let prod = d_mul(&tape, c, d_scale(&tape, c, 2.0));
        assert!(prod.tangent.is_none());
        // Mixing a constant branch back in keeps the time part intact:
        // d/dt (t + 2c²) = 1.
        let s = d_add(&tape, t, prod);
        assert_eq!(tape.scalar_value(s.tangent.unwrap()), 1.0);
    }

    #[test]
    fn product_rule_through_matmul() {
        // y = (t·x)·W with x constant rowvec: tangent = x·W.
        let tape = Tape::new();
        let x = array![[1.0, 2.0]];
        let w = array![[3.0], [4.0]];
        let t = Dual::seeded(tape.scalar(5.0), tape.scalar(1.0));
        let xv = Dual::constant(tape.leaf(x));
        let wv = Dual::constant(tape.leaf(w));
        let tx = d_matmul(&tape, t, xv);
        let y = d_matmul(&tape, tx, wv);
        assert_eq!(tape.scalar_value(y.primal), 55.0);
        assert_eq!(tape.scalar_value(y.tangent.unwrap()), 11.0);
    }
}
