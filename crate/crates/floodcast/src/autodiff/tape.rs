//! Reverse-mode differentiation over an append-only tape of dense matrix
//! operations.
//!
//! Every value is a dense `[rows × cols]` matrix of f64 (scalars are 1×1).
//! Operations append nodes, so append order is already a topological order
//! and the backward sweep visits nodes exactly once in reverse. Replaying an
//! identical program yields bit-identical values and gradients: there is no
//! hashing, threading or reordering anywhere on this path.

use std::cell::RefCell;

use ndarray::{s, Array2};

use crate::error::{Error, Result};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) enum Op {
    /// Input leaf: a constant or a trainable parameter.
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    /// Elementwise product of equal shapes.
    Mul(VarId, VarId),
    /// Elementwise quotient of equal shapes.
    Div(VarId, VarId),
    Neg(VarId),
    /// Multiply by a compile-time constant.
    Scale(VarId, f64),
    /// Add a compile-time constant to every entry.
    AddScalar(VarId),
    MatMul(VarId, VarId),
    Tanh(VarId),
    Exp(VarId),
    Sigmoid(VarId),
    Softplus(VarId),
    Square(VarId),
    /// |x|^m with real exponent m ≥ 1.
    PowAbs(VarId, f64),
    /// x^(−1/2) elementwise.
    Rsqrt(VarId),
    /// Reduce everything to a 1×1 sum.
    SumAll(VarId),
    /// Reduce everything to a 1×1 mean.
    MeanAll(VarId),
    /// Row sums: [m×n] → [m×1].
    SumRows(VarId),
    /// Column sums: [m×n] → [1×n].
    SumCols(VarId),
    /// Horizontal concatenation.
    ConcatCols(VarId, VarId),
    /// Extract column j as [m×1].
    Col(VarId, usize),
    /// [m×n] + broadcast [1×n].
    AddRow(VarId, VarId),
    /// [m×n] ⊙ broadcast [1×n].
    MulRow(VarId, VarId),
    /// [m×n] ⊙ broadcast [m×1].
    MulCol(VarId, VarId),
    /// Row-major reshape of a contiguous run of a column vector, starting at
    /// the stored offset.
    Slice(VarId, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MatMul(..) => "matmul",
            Op::Tanh(..) => "tanh",
            Op::Exp(..) => "exp",
            Op::Sigmoid(..) => "sigmoid",
            Op::Softplus(..) => "softplus",
            Op::Square(..) => "square",
            Op::PowAbs(..) => "pow_abs",
            Op::Rsqrt(..) => "rsqrt",
            Op::SumAll(..) => "sum_all",
            Op::MeanAll(..) => "mean_all",
            Op::SumRows(..) => "sum_rows",
            Op::SumCols(..) => "sum_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::Col(..) => "col",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::MulCol(..) => "mul_col",
            Op::Slice(..) => "slice",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Array2<f64>,
}

/// Gradients of one scalar output with respect to every tape node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `id`, materializing zeros if the node did not influence
    /// the output.
    pub fn get(&self, id: VarId) -> Array2<f64> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Array2::zeros(self.shapes[id.0]),
        }
    }
}

/// Append-only operation tape. See the module docs for the execution model.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy of the node's current value.
    pub fn value(&self, id: VarId) -> Array2<f64> {
        self.nodes.borrow()[id.0].value.clone()
    }

    /// Shape of the node's value.
    pub fn shape(&self, id: VarId) -> (usize, usize) {
        let nodes = self.nodes.borrow();
        let v = &nodes[id.0].value;
        (v.nrows(), v.ncols())
    }

    /// Value of a 1×1 node.
    pub fn scalar_value(&self, id: VarId) -> f64 {
        let nodes = self.nodes.borrow();
        let v = &nodes[id.0].value;
        assert_eq!(v.dim(), (1, 1), "scalar_value on non-scalar node");
        v[[0, 0]]
    }

    fn push(&self, op: Op, value: Array2<f64>) -> VarId {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value });
        VarId(nodes.len() - 1)
    }

    /// New leaf holding `value` (parameter or constant).
    pub fn leaf(&self, value: Array2<f64>) -> VarId {
        self.push(Op::Leaf, value)
    }

    /// New 1×1 leaf.
    pub fn scalar(&self, v: f64) -> VarId {
        self.leaf(Array2::from_elem((1, 1), v))
    }

    fn unary<F>(&self, a: VarId, op: Op, f: F) -> VarId
    where
        F: FnOnce(&Array2<f64>) -> Array2<f64>,
    {
        let value = f(&self.nodes.borrow()[a.0].value);
        self.push(op, value)
    }

    fn binary_same_shape<F>(&self, a: VarId, b: VarId, op: Op, f: F) -> VarId
    where
        F: FnOnce(&Array2<f64>, &Array2<f64>) -> Array2<f64>,
    {
        let value = {
            let nodes = self.nodes.borrow();
            let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(va.dim(), vb.dim(), "shape mismatch in {}", op.name());
            f(va, vb)
        };
        self.push(op, value)
    }

    pub fn add(&self, a: VarId, b: VarId) -> VarId {
        self.binary_same_shape(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&self, a: VarId, b: VarId) -> VarId {
        self.binary_same_shape(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&self, a: VarId, b: VarId) -> VarId {
        self.binary_same_shape(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&self, a: VarId, b: VarId) -> VarId {
        self.binary_same_shape(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn neg(&self, a: VarId) -> VarId {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn scale(&self, a: VarId, c: f64) -> VarId {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&self, a: VarId, c: f64) -> VarId {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn matmul(&self, a: VarId, b: VarId) -> VarId {
        let value = {
            let nodes = self.nodes.borrow();
            let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(
                va.ncols(),
                vb.nrows(),
                "matmul inner dimensions {}×{} · {}×{}",
                va.nrows(),
                va.ncols(),
                vb.nrows(),
                vb.ncols()
            );
            va.dot(vb)
        };
        self.push(Op::MatMul(a, b), value)
    }

    pub fn tanh(&self, a: VarId) -> VarId {
        self.unary(a, Op::Tanh(a), |x| x.mapv(f64::tanh))
    }

    pub fn exp(&self, a: VarId) -> VarId {
        self.unary(a, Op::Exp(a), |x| x.mapv(f64::exp))
    }

    pub fn sigmoid(&self, a: VarId) -> VarId {
        self.unary(a, Op::Sigmoid(a), |x| x.mapv(sigmoid))
    }

    pub fn softplus(&self, a: VarId) -> VarId {
        self.unary(a, Op::Softplus(a), |x| x.mapv(softplus))
    }

    pub fn square(&self, a: VarId) -> VarId {
        self.unary(a, Op::Square(a), |x| x.mapv(|v| v * v))
    }

    /// Elementwise |x|^m for m ≥ 1.
    pub fn pow_abs(&self, a: VarId, m: f64) -> VarId {
        assert!(m >= 1.0, "pow_abs exponent must be ≥ 1, got {m}");
        self.unary(a, Op::PowAbs(a, m), |x| x.mapv(|v| v.abs().powf(m)))
    }

    /// Elementwise x^(−1/2); inputs must be strictly positive.
    pub fn rsqrt(&self, a: VarId) -> VarId {
        self.unary(a, Op::Rsqrt(a), |x| x.mapv(|v| 1.0 / v.sqrt()))
    }

    pub fn sum_all(&self, a: VarId) -> VarId {
        self.unary(a, Op::SumAll(a), |x| Array2::from_elem((1, 1), x.sum()))
    }

    pub fn mean_all(&self, a: VarId) -> VarId {
        self.unary(a, Op::MeanAll(a), |x| {
            Array2::from_elem((1, 1), x.sum() / x.len() as f64)
        })
    }

    pub fn sum_rows(&self, a: VarId) -> VarId {
        self.unary(a, Op::SumRows(a), |x| {
            let mut out = Array2::zeros((x.nrows(), 1));
            for (i, row) in x.rows().into_iter().enumerate() {
                out[[i, 0]] = row.sum();
            }
            out
        })
    }

    pub fn sum_cols(&self, a: VarId) -> VarId {
        self.unary(a, Op::SumCols(a), |x| {
            let mut out = Array2::zeros((1, x.ncols()));
            for (j, col) in x.columns().into_iter().enumerate() {
                out[[0, j]] = col.sum();
            }
            out
        })
    }

    pub fn concat_cols(&self, a: VarId, b: VarId) -> VarId {
        let value = {
            let nodes = self.nodes.borrow();
            let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(va.nrows(), vb.nrows(), "concat_cols row mismatch");
            let mut out = Array2::zeros((va.nrows(), va.ncols() + vb.ncols()));
            out.slice_mut(s![.., ..va.ncols()]).assign(va);
            out.slice_mut(s![.., va.ncols()..]).assign(vb);
            out
        };
        self.push(Op::ConcatCols(a, b), value)
    }

    pub fn col(&self, a: VarId, j: usize) -> VarId {
        let value = {
            let nodes = self.nodes.borrow();
            let va = &nodes[a.0].value;
            assert!(j < va.ncols(), "col index {j} out of {}", va.ncols());
            va.slice(s![.., j..j + 1]).to_owned()
        };
        self.push(Op::Col(a, j), value)
    }

    /// `a + b` with `b` a [1×n] row broadcast over `a`'s rows.
    pub fn add_row(&self, a: VarId, b: VarId) -> VarId {
        let value = {
            let nodes = self.nodes.borrow();
            let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(vb.nrows(), 1, "add_row broadcast operand must be 1×n");
            assert_eq!(va.ncols(), vb.ncols(), "add_row column mismatch");
            va + &vb.row(0)
        };
        self.push(Op::AddRow(a, b), value)
    }

    /// `a ⊙ b` with `b` a [1×n] row broadcast over `a`'s rows.
    pub fn mul_row(&self, a: VarId, b: VarId) -> VarId {
        let value = {
            let nodes = self.nodes.borrow();
            let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(vb.nrows(), 1, "mul_row broadcast operand must be 1×n");
            assert_eq!(va.ncols(), vb.ncols(), "mul_row column mismatch");
            va * &vb.row(0)
        };
        self.push(Op::MulRow(a, b), value)
    }

    /// `a ⊙ b` with `b` a [m×1] column broadcast over `a`'s columns.
    pub fn mul_col(&self, a: VarId, b: VarId) -> VarId {
        let value = {
            let nodes = self.nodes.borrow();
            let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(vb.ncols(), 1, "mul_col broadcast operand must be m×1");
            assert_eq!(va.nrows(), vb.nrows(), "mul_col row mismatch");
            va * &vb.column(0).insert_axis(ndarray::Axis(1))
        };
        self.push(Op::MulCol(a, b), value)
    }

    /// Carve `rows·cols` consecutive entries out of a column vector `src`,
    /// starting at `offset`, reshaped row-major into `[rows × cols]`.
    pub fn slice_reshape(&self, src: VarId, offset: usize, rows: usize, cols: usize) -> VarId {
        let value = {
            let nodes = self.nodes.borrow();
            let v = &nodes[src.0].value;
            assert_eq!(v.ncols(), 1, "slice_reshape source must be a column vector");
            assert!(
                offset + rows * cols <= v.nrows(),
                "slice_reshape [{offset}, {}) out of {} entries",
                offset + rows * cols,
                v.nrows()
            );
            Array2::from_shape_fn((rows, cols), |(r, c)| v[[offset + r * cols + c, 0]])
        };
        self.push(Op::Slice(src, offset), value)
    }

    /// First node holding a non-finite value, in program order.
    pub fn first_non_finite(&self) -> Option<(VarId, &'static str)> {
        let nodes = self.nodes.borrow();
        for (i, node) in nodes.iter().enumerate() {
            if node.value.iter().any(|v| !v.is_finite()) {
                return Some((VarId(i), node.op.name()));
            }
        }
        None
    }

    /// Reverse sweep from a 1×1 `output` node, returning gradients of the
    /// output with respect to every node.
    ///
    /// Errors if the output (or any upstream intermediate) is non-finite,
    /// naming the first offending primitive, or if the sweep itself produces
    /// a non-finite adjoint.
    pub fn backward(&self, output: VarId) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let out_val = &nodes[output.0].value;
        assert_eq!(out_val.dim(), (1, 1), "backward output must be scalar");
        if !out_val[[0, 0]].is_finite() {
            drop(nodes);
            let (id, op) = self
                .first_non_finite()
                .expect("non-finite output implies a non-finite node");
            return Err(Error::NonFinite {
                context: format!("tape primitive `{op}` (node {})", id.0),
            });
        }

        let shapes: Vec<(usize, usize)> = nodes
            .iter()
            .map(|n| (n.value.nrows(), n.value.ncols()))
            .collect();
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; nodes.len()];
        grads[output.0] = Some(Array2::from_elem((1, 1), 1.0));

        // Helper: accumulate `delta` into the adjoint of `id`.
        fn acc(
            grads: &mut [Option<Array2<f64>>],
            shapes: &[(usize, usize)],
            id: VarId,
            delta: Array2<f64>,
        ) {
            match &mut grads[id.0] {
                Some(g) => *g += &delta,
                slot @ None => {
                    debug_assert_eq!(shapes[id.0], (delta.nrows(), delta.ncols()));
                    *slot = Some(delta);
                }
            }
        }

        for i in (0..nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            match node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(&mut grads, &shapes, a, g.clone());
                    acc(&mut grads, &shapes, b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, &shapes, a, g.clone());
                    acc(&mut grads, &shapes, b, -&g);
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, &shapes, a, &g * &nodes[b.0].value);
                    acc(&mut grads, &shapes, b, &g * &nodes[a.0].value);
                }
                Op::Div(a, b) => {
                    let vb = &nodes[b.0].value;
                    acc(&mut grads, &shapes, a, &g / vb);
                    acc(&mut grads, &shapes, b, -(&g * &node.value) / vb);
                }
                Op::Neg(a) => acc(&mut grads, &shapes, a, -&g),
                Op::Scale(a, c) => acc(&mut grads, &shapes, a, &g * c),
                Op::AddScalar(a) => acc(&mut grads, &shapes, a, g.clone()),
                Op::MatMul(a, b) => {
                    acc(&mut grads, &shapes, a, g.dot(&nodes[b.0].value.t()));
                    acc(&mut grads, &shapes, b, nodes[a.0].value.t().dot(&g));
                }
                Op::Tanh(a) => {
                    let d = node.value.mapv(|y| 1.0 - y * y);
                    acc(&mut grads, &shapes, a, &g * &d);
                }
                Op::Exp(a) => acc(&mut grads, &shapes, a, &g * &node.value),
                Op::Sigmoid(a) => {
                    let d = node.value.mapv(|y| y * (1.0 - y));
                    acc(&mut grads, &shapes, a, &g * &d);
                }
                Op::Softplus(a) => {
                    let d = nodes[a.0].value.mapv(sigmoid);
                    acc(&mut grads, &shapes, a, &g * &d);
                }
                Op::Square(a) => {
                    acc(&mut grads, &shapes, a, &g * &nodes[a.0].value.mapv(|x| 2.0 * x));
                }
                Op::PowAbs(a, m) => {
                    let d = nodes[a.0].value.mapv(|x| {
                        if x == 0.0 {
                            0.0
                        } else {
                            m * x.abs().powf(m - 1.0) * x.signum()
                        }
                    });
                    acc(&mut grads, &shapes, a, &g * &d);
                }
                Op::Rsqrt(a) => {
                    let d = node.value.mapv(|y| -0.5 * y * y * y);
                    acc(&mut grads, &shapes, a, &g * &d);
                }
                Op::SumAll(a) => {
                    let delta = Array2::from_elem(shapes[a.0], g[[0, 0]]);
                    acc(&mut grads, &shapes, a, delta);
                }
                Op::MeanAll(a) => {
                    let (r, c) = shapes[a.0];
                    let delta = Array2::from_elem((r, c), g[[0, 0]] / (r * c) as f64);
                    acc(&mut grads, &shapes, a, delta);
                }
                Op::SumRows(a) => {
                    let (r, c) = shapes[a.0];
                    let mut delta = Array2::zeros((r, c));
                    for i2 in 0..r {
                        delta.row_mut(i2).fill(g[[i2, 0]]);
                    }
                    acc(&mut grads, &shapes, a, delta);
                }
                Op::SumCols(a) => {
                    let (r, c) = shapes[a.0];
                    let mut delta = Array2::zeros((r, c));
                    for j in 0..c {
                        delta.column_mut(j).fill(g[[0, j]]);
                    }
                    acc(&mut grads, &shapes, a, delta);
                }
                Op::ConcatCols(a, b) => {
                    let ca = shapes[a.0].1;
                    acc(&mut grads, &shapes, a, g.slice(s![.., ..ca]).to_owned());
                    acc(&mut grads, &shapes, b, g.slice(s![.., ca..]).to_owned());
                }
                Op::Col(a, j) => {
                    let mut delta = Array2::zeros(shapes[a.0]);
                    delta.slice_mut(s![.., j..j + 1]).assign(&g);
                    acc(&mut grads, &shapes, a, delta);
                }
                Op::AddRow(a, b) => {
                    acc(&mut grads, &shapes, a, g.clone());
                    let mut db = Array2::zeros((1, shapes[b.0].1));
                    for j in 0..g.ncols() {
                        db[[0, j]] = g.column(j).sum();
                    }
                    acc(&mut grads, &shapes, b, db);
                }
                Op::MulRow(a, b) => {
                    let vb = &nodes[b.0].value;
                    acc(&mut grads, &shapes, a, &g * &vb.row(0));
                    let prod = &g * &nodes[a.0].value;
                    let mut db = Array2::zeros((1, shapes[b.0].1));
                    for j in 0..prod.ncols() {
                        db[[0, j]] = prod.column(j).sum();
                    }
                    acc(&mut grads, &shapes, b, db);
                }
                Op::MulCol(a, b) => {
                    let vb = nodes[b.0].value.column(0).insert_axis(ndarray::Axis(1));
                    acc(&mut grads, &shapes, a, &g * &vb);
                    let prod = &g * &nodes[a.0].value;
                    let mut db = Array2::zeros((shapes[b.0].0, 1));
                    for i2 in 0..prod.nrows() {
                        db[[i2, 0]] = prod.row(i2).sum();
                    }
                    acc(&mut grads, &shapes, b, db);
                }
                Op::Slice(a, offset) => {
                    let mut delta = Array2::zeros(shapes[a.0]);
                    let cols = g.ncols();
                    for ((r, c), &v) in g.indexed_iter() {
                        delta[[offset + r * cols + c, 0]] = v;
                    }
                    acc(&mut grads, &shapes, a, delta);
                }
            }
            grads[i] = Some(g);
        }

        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        context: format!(
                            "adjoint of tape primitive `{}` (node {i})",
                            nodes[i].op.name()
                        ),
                    });
                }
            }
        }

        Ok(Gradients { grads, shapes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_grad(g: &Gradients, id: VarId) -> f64 {
        g.get(id)[[0, 0]]
    }

    #[test]
    fn power_rule() {
        let tape = Tape::new();
        let x = tape.scalar(3.0);
        let y = tape.square(x);
        let g = tape.backward(y).unwrap();
        assert_eq!(scalar_grad(&g, x), 6.0);
    }

    #[test]
    fn product_plus_tanh() {
        // f(x,y) = x·y + tanh(x) at (0,5): ∂x = y + tanh'(0) = 6, ∂y = x = 0.
        let tape = Tape::new();
        let x = tape.scalar(0.0);
        let y = tape.scalar(5.0);
        let f = tape.add(tape.mul(x, y), tape.tanh(x));
        let g = tape.backward(f).unwrap();
        assert_eq!(scalar_grad(&g, x), 6.0);
        assert_eq!(scalar_grad(&g, y), 0.0);
    }

    #[test]
    fn matmul_adjoints() {
        let tape = Tape::new();
        let a = tape.leaf(array![[1.0, 2.0], [3.0, 4.0]]);
        let b = tape.leaf(array![[5.0], [6.0]]);
        let y = tape.sum_all(tape.matmul(a, b));
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(a), array![[5.0, 6.0], [5.0, 6.0]]);
        assert_eq!(g.get(b), array![[4.0], [6.0]]);
    }

    #[test]
    fn broadcast_row_ops() {
        let tape = Tape::new();
        let a = tape.leaf(array![[1.0, 2.0], [3.0, 4.0]]);
        let b = tape.leaf(array![[10.0, 20.0]]);
        let y = tape.sum_all(tape.mul_row(a, b));
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(b), array![[4.0, 6.0]]);
        assert_eq!(g.get(a), array![[10.0, 20.0], [10.0, 20.0]]);
    }

    #[test]
    fn concat_and_col_round_trip_gradients() {
        let tape = Tape::new();
        let a = tape.leaf(array![[1.0], [2.0]]);
        let b = tape.leaf(array![[3.0], [4.0]]);
        let cat = tape.concat_cols(a, b);
        let right = tape.col(cat, 1);
        let y = tape.sum_all(right);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(a), array![[0.0], [0.0]]);
        assert_eq!(g.get(b), array![[1.0], [1.0]]);
    }

    #[test]
    fn gradient_linearity() {
        // grad(a·L1 + b·L2) = a·grad(L1) + b·grad(L2).
        let build = |wa: f64, wb: f64| -> (f64, f64) {
            let tape = Tape::new();
            let x = tape.scalar(0.7);
            let l1 = tape.square(x);
            let l2 = tape.tanh(x);
            let total = tape.add(tape.scale(l1, wa), tape.scale(l2, wb));
            let g = tape.backward(total).unwrap();
            (tape.scalar_value(total), g.get(x)[[0, 0]])
        };
        let (_, g1) = build(1.0, 0.0);
        let (_, g2) = build(0.0, 1.0);
        let (_, gc) = build(2.5, -1.5);
        assert!((gc - (2.5 * g1 - 1.5 * g2)).abs() < 1e-12);
    }

    #[test]
    fn replay_is_bit_identical() {
        let run = || {
            let tape = Tape::new();
            let x = tape.leaf(array![[0.3, -0.7], [1.1, 0.2]]);
            let w = tape.leaf(array![[0.5, -0.25], [0.75, 1.5]]);
            let y = tape.mean_all(tape.square(tape.tanh(tape.matmul(x, w))));
            let g = tape.backward(y).unwrap();
            (tape.scalar_value(y), g.get(w))
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        assert_eq!(v1.to_bits(), v2.to_bits());
        assert_eq!(
            g1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            g2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn non_finite_intermediate_names_the_primitive() {
        let tape = Tape::new();
        let x = tape.scalar(0.0);
        let y = tape.div(tape.scalar(1.0), x); // 1/0 → inf
        let loss = tape.sum_all(y);
        let err = tape.backward(loss).unwrap_err();
        assert!(err.to_string().contains("div"), "{err}");
    }

    #[test]
    fn reductions_and_norm_ops() {
        let tape = Tape::new();
        let x = tape.leaf(array![[1.0, -2.0], [3.0, -4.0]]);
        let m = tape.mean_all(tape.pow_abs(x, 2.0));
        assert!((tape.scalar_value(m) - 7.5).abs() < 1e-12);
        let g = tape.backward(m).unwrap();
        assert_eq!(g.get(x), array![[0.5, -1.0], [1.5, -2.0]]);
    }

    #[test]
    fn slice_reshape_values_and_scattered_gradient() {
        // theta = [1..6], carve rows 1..5 as a 2×2 (row-major) and sum a
        // weighted combination: gradients land back in the carved region only.
        let tape = Tape::new();
        let theta = tape.leaf(array![[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]]);
        let w = tape.slice_reshape(theta, 1, 2, 2);
        assert_eq!(tape.value(w), array![[2.0, 3.0], [4.0, 5.0]]);
        let mask = tape.leaf(array![[1.0, 10.0], [100.0, 1000.0]]);
        let y = tape.sum_all(tape.mul(w, mask));
        let g = tape.backward(y).unwrap();
        assert_eq!(
            g.get(theta),
            array![[0.0], [1.0], [10.0], [100.0], [1000.0], [0.0]]
        );
    }

    #[test]
    fn rsqrt_value_and_gradient() {
        let tape = Tape::new();
        let x = tape.scalar(4.0);
        let y = tape.rsqrt(x);
        assert!((tape.scalar_value(y) - 0.5).abs() < 1e-15);
        let g = tape.backward(y).unwrap();
        // d(x^-1/2)/dx = -1/2 x^-3/2 = -1/16.
        assert!((g.get(x)[[0, 0]] + 1.0 / 16.0).abs() < 1e-15);
    }
}
