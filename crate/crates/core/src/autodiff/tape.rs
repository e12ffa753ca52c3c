use std::cell::{Ref, RefCell};

use super::matrix::Matrix;
use super::params::{sigmoid, softplus, Activation, NetworkParams};
use crate::{Error, Result};

/// One recorded operation. Inputs are node indices into the tape, which is
/// append-only and therefore topologically ordered.
#[derive(Debug)]
enum Op {
    Leaf,
    /// `x · wᵀ`
    MatMulT(usize, usize),
    /// `x + b` with `b` a single row broadcast over all rows.
    AddRow(usize, usize),
    /// Elementwise map; stores the local partial per element.
    Unary(usize, Vec<f64>),
    Scale(usize, f64),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    /// Elementwise choice: `mask[k]` picks the first input.
    Select(usize, usize, Vec<bool>),
    Concat(Vec<usize>),
    SliceCols(usize, usize),
    Sum(usize),
    RowSum(usize),
    /// Sum consecutive row groups of the given sizes.
    SegmentSum(usize, Vec<usize>),
    /// Column vector broadcast across `width` columns.
    BroadcastCols(usize),
    /// Single row repeated down the rows.
    RepeatRows(usize),
    /// `log q̂(query_j)` of an isotropic Gaussian KDE over the support rows of
    /// the input. Stores queries, bandwidth and the kernel responsibilities.
    LogKde { support: usize, queries: Matrix, sigma: f64, resp: Matrix },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode tape over dense matrices.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a tape node.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.id)
    }
}

/// Leaves bound to the layers of one [`NetworkParams`].
#[derive(Debug, Clone)]
pub struct ParamVars<'t> {
    layers: Vec<(Var<'t>, Var<'t>)>,
    activations: Vec<Activation>,
}

impl<'t> ParamVars<'t> {
    pub fn weight(&self, l: usize) -> Var<'t> {
        self.layers[l].0
    }

    pub fn bias(&self, l: usize) -> Var<'t> {
        self.layers[l].1
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Apply layer `l` (affine map plus its activation).
    pub fn dense(&self, l: usize, x: Var<'t>) -> Var<'t> {
        x.matmul_t(self.weight(l)).add_row(self.bias(l)).activation(self.activations[l])
    }

    /// Apply layers `range` in sequence.
    pub fn dense_range(&self, range: std::ops::Range<usize>, mut x: Var<'t>) -> Var<'t> {
        for l in range {
            x = self.dense(l, x);
        }
        x
    }
}

/// Adjoints produced by [`Tape::gradient`].
#[derive(Debug)]
pub struct Grads {
    adjoints: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn of(&self, v: Var<'_>) -> Option<&Matrix> {
        self.adjoints[v.id].as_ref()
    }

    /// Flat gradient laid out like the bound [`NetworkParams`].
    pub fn wrt(&self, params: &ParamVars<'_>) -> Vec<f64> {
        let mut out = Vec::new();
        for &(w, b) in &params.layers {
            for v in [w, b] {
                match &self.adjoints[v.id] {
                    Some(m) => out.extend_from_slice(m.data()),
                    None => {
                        let (r, c) = v.shape();
                        out.extend(std::iter::repeat_n(0.0, r * c));
                    }
                }
            }
        }
        out
    }
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

    fn push(&self, value: Matrix, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// A leaf that receives gradients.
    pub fn variable(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that does not receive gradients.
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Matrix::scalar(value))
    }

    /// Bind every layer of `params` as a gradient-receiving leaf pair.
    pub fn params(&self, params: &NetworkParams) -> ParamVars<'_> {
        self.bind(params, true)
    }

    /// Bind `params` without gradient tracking (e.g. frozen target networks).
    pub fn frozen_params(&self, params: &NetworkParams) -> ParamVars<'_> {
        self.bind(params, false)
    }

    fn bind(&self, params: &NetworkParams, grad: bool) -> ParamVars<'_> {
        let layers = (0..params.layers().len())
            .map(|l| {
                let w = self.push(params.weight(l), Op::Leaf, grad);
                let b = self.push(params.bias(l), Op::Leaf, grad);
                (w, b)
            })
            .collect();
        ParamVars { layers, activations: params.layers().iter().map(|s| s.activation).collect() }
    }

    /// Reverse accumulation from a `1 × 1` loss node.
    pub fn gradient(&self, loss: Var<'_>) -> Result<Grads> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.shape() != (1, 1) {
            return Err(Error::usage(format!(
                "gradient needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        if !root.value.data()[0].is_finite() {
            return Err(Error::NonFiniteLoss(format!("{}", root.value.data()[0])));
        }
        let mut adj: Vec<Option<Matrix>> = (0..nodes.len()).map(|_| None).collect();
        adj[loss.id] = Some(Matrix::scalar(1.0));
        for id in (0..=loss.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            backprop(&nodes, &node.op, &node.value, &g, &mut adj);
            adj[id] = Some(g);
        }
        Ok(Grads { adjoints: adj })
    }
}

fn accumulate(adj: &mut [Option<Matrix>], nodes: &[Node], id: usize, delta: Matrix) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut adj[id] {
        Some(m) => {
            for (a, d) in m.data_mut().iter_mut().zip(delta.data()) {
                *a += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn backprop(nodes: &[Node], op: &Op, value: &Matrix, g: &Matrix, adj: &mut [Option<Matrix>]) {
    let val = |i: usize| &nodes[i].value;
    let wants = |i: usize| nodes[i].requires_grad;
    match op {
        Op::Leaf => {}
        Op::MatMulT(x, w) => {
            let (xm, wm) = (val(*x), val(*w));
            if wants(*x) {
                // dX = G · W
                let mut dx = Matrix::zeros(xm.rows(), xm.cols());
                for r in 0..g.rows() {
                    let gr = g.row(r);
                    let dr = dx.row_mut(r);
                    for (j, &gj) in gr.iter().enumerate() {
                        if gj != 0.0 {
                            for (d, wv) in dr.iter_mut().zip(wm.row(j)) {
                                *d += gj * wv;
                            }
                        }
                    }
                }
                accumulate(adj, nodes, *x, dx);
            }
            if wants(*w) {
                // dW = Gᵀ · X
                let mut dw = Matrix::zeros(wm.rows(), wm.cols());
                for r in 0..g.rows() {
                    let xr = xm.row(r);
                    for (j, &gj) in g.row(r).iter().enumerate() {
                        if gj != 0.0 {
                            for (d, xv) in dw.row_mut(j).iter_mut().zip(xr) {
                                *d += gj * xv;
                            }
                        }
                    }
                }
                accumulate(adj, nodes, *w, dw);
            }
        }
        Op::AddRow(x, b) => {
            if wants(*b) {
                let mut db = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (d, gv) in db.data_mut().iter_mut().zip(g.row(r)) {
                        *d += gv;
                    }
                }
                accumulate(adj, nodes, *b, db);
            }
            accumulate(adj, nodes, *x, g.clone());
        }
        Op::Unary(x, d) => {
            let mut dx = g.clone();
            for (v, p) in dx.data_mut().iter_mut().zip(d) {
                *v *= p;
            }
            accumulate(adj, nodes, *x, dx);
        }
        Op::Scale(x, c) => accumulate(adj, nodes, *x, g.map(|v| v * c)),
        Op::Add(a, b) => {
            accumulate(adj, nodes, *a, g.clone());
            accumulate(adj, nodes, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(adj, nodes, *a, g.clone());
            accumulate(adj, nodes, *b, g.map(|v| -v));
        }
        Op::Mul(a, b) => {
            if wants(*a) {
                let mut da = g.clone();
                for (v, y) in da.data_mut().iter_mut().zip(val(*b).data()) {
                    *v *= y;
                }
                accumulate(adj, nodes, *a, da);
            }
            if wants(*b) {
                let mut db = g.clone();
                for (v, x) in db.data_mut().iter_mut().zip(val(*a).data()) {
                    *v *= x;
                }
                accumulate(adj, nodes, *b, db);
            }
        }
        Op::Div(a, b) => {
            let bv = val(*b);
            if wants(*a) {
                let mut da = g.clone();
                for (v, y) in da.data_mut().iter_mut().zip(bv.data()) {
                    *v /= y;
                }
                accumulate(adj, nodes, *a, da);
            }
            if wants(*b) {
                let mut db = g.clone();
                for ((v, q), y) in db.data_mut().iter_mut().zip(value.data()).zip(bv.data()) {
                    *v *= -q / y;
                }
                accumulate(adj, nodes, *b, db);
            }
        }
        Op::Select(a, b, mask) => {
            if wants(*a) {
                let mut da = g.clone();
                for (v, &m) in da.data_mut().iter_mut().zip(mask) {
                    if !m {
                        *v = 0.0;
                    }
                }
                accumulate(adj, nodes, *a, da);
            }
            if wants(*b) {
                let mut db = g.clone();
                for (v, &m) in db.data_mut().iter_mut().zip(mask) {
                    if m {
                        *v = 0.0;
                    }
                }
                accumulate(adj, nodes, *b, db);
            }
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let w = val(p).cols();
                if wants(p) {
                    let mut dp = Matrix::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        dp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    accumulate(adj, nodes, p, dp);
                }
                offset += w;
            }
        }
        Op::SliceCols(x, start) => {
            let xm = val(*x);
            let mut dx = Matrix::zeros(xm.rows(), xm.cols());
            for r in 0..g.rows() {
                dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
            }
            accumulate(adj, nodes, *x, dx);
        }
        Op::Sum(x) => {
            let xm = val(*x);
            accumulate(adj, nodes, *x, Matrix::filled(xm.rows(), xm.cols(), g.data()[0]));
        }
        Op::RowSum(x) => {
            let xm = val(*x);
            let mut dx = Matrix::zeros(xm.rows(), xm.cols());
            for r in 0..xm.rows() {
                let gr = g.get(r, 0);
                dx.row_mut(r).iter_mut().for_each(|v| *v = gr);
            }
            accumulate(adj, nodes, *x, dx);
        }
        Op::SegmentSum(x, counts) => {
            let xm = val(*x);
            let mut dx = Matrix::zeros(xm.rows(), xm.cols());
            let mut row = 0;
            for (s, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    dx.row_mut(row).copy_from_slice(g.row(s));
                    row += 1;
                }
            }
            accumulate(adj, nodes, *x, dx);
        }
        Op::BroadcastCols(x) => {
            let mut dx = Matrix::zeros(g.rows(), 1);
            for r in 0..g.rows() {
                dx.set(r, 0, g.row(r).iter().sum());
            }
            accumulate(adj, nodes, *x, dx);
        }
        Op::RepeatRows(x) => {
            let mut dx = Matrix::zeros(1, g.cols());
            for r in 0..g.rows() {
                for (d, v) in dx.row_mut(0).iter_mut().zip(g.row(r)) {
                    *d += v;
                }
            }
            accumulate(adj, nodes, *x, dx);
        }
        Op::LogKde { support, queries, sigma, resp } => {
            // d log q̂(q_j) / d a_i = r_ji (q_j - a_i) / σ²
            let sm = val(*support);
            let inv_var = 1.0 / (sigma * sigma);
            let mut ds = Matrix::zeros(sm.rows(), sm.cols());
            for j in 0..queries.rows() {
                let gj = g.get(j, 0);
                if gj == 0.0 {
                    continue;
                }
                let qj = queries.row(j);
                let rj = resp.row(j);
                for i in 0..sm.rows() {
                    let w = gj * rj[i] * inv_var;
                    if w == 0.0 {
                        continue;
                    }
                    for ((d, q), a) in ds.row_mut(i).iter_mut().zip(qj).zip(sm.row(i)) {
                        *d += w * (q - a);
                    }
                }
            }
            accumulate(adj, nodes, *support, ds);
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Matrix> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self) -> f64 {
        let v = self.value();
        debug_assert_eq!(v.shape(), (1, 1));
        v.data()[0]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().shape()
    }

    fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn unary(self, f: impl Fn(f64) -> (f64, f64)) -> Var<'t> {
        let (value, partials) = {
            let x = self.value();
            let mut out = Matrix::zeros(x.rows(), x.cols());
            let mut d = Vec::with_capacity(x.data().len());
            for (o, &v) in out.data_mut().iter_mut().zip(x.data()) {
                let (y, dy) = f(v);
                *o = y;
                d.push(dy);
            }
            (out, d)
        };
        let rg = self.requires_grad();
        self.tape.push(value, Op::Unary(self.id, partials), rg)
    }

    fn binary(self, other: Var<'t>, f: impl Fn(f64, f64) -> f64, op: impl FnOnce(usize, usize) -> Op) -> Var<'t> {
        let value = {
            let (a, b) = (self.value(), other.value());
            assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
            let mut out = a.clone();
            for (o, &y) in out.data_mut().iter_mut().zip(b.data()) {
                *o = f(*o, y);
            }
            out
        };
        let rg = self.requires_grad() || other.requires_grad();
        self.tape.push(value, op(self.id, other.id), rg)
    }

    pub fn matmul_t(self, w: Var<'t>) -> Var<'t> {
        let value = self.value().matmul_t(&w.value());
        let rg = self.requires_grad() || w.requires_grad();
        self.tape.push(value, Op::MatMulT(self.id, w.id), rg)
    }

    pub fn add_row(self, b: Var<'t>) -> Var<'t> {
        let value = {
            let (x, bm) = (self.value(), b.value());
            assert_eq!(bm.rows(), 1);
            assert_eq!(bm.cols(), x.cols(), "bias width");
            let mut out = x.clone();
            for r in 0..out.rows() {
                for (o, bv) in out.row_mut(r).iter_mut().zip(bm.data()) {
                    *o += bv;
                }
            }
            out
        };
        let rg = self.requires_grad() || b.requires_grad();
        self.tape.push(value, Op::AddRow(self.id, b.id), rg)
    }

    pub fn activation(self, act: Activation) -> Var<'t> {
        match act {
            Activation::Identity => self,
            Activation::Tanh => self.tanh(),
            Activation::Relu => self.relu(),
            Activation::Softplus => self.softplus(),
        }
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(|x| {
            let y = x.tanh();
            (y, 1.0 - y * y)
        })
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(|x| if x > 0.0 { (x, 1.0) } else { (0.0, 0.0) })
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(|x| (softplus(x), sigmoid(x)))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(|x| {
            let y = x.exp();
            (y, y)
        })
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(|x| (x.ln(), 1.0 / x))
    }

    pub fn square(self) -> Var<'t> {
        self.unary(|x| (x * x, 2.0 * x))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let value = self.value().map(|v| v * c);
        let rg = self.requires_grad();
        self.tape.push(value, Op::Scale(self.id, c), rg)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(|x| (x + c, 1.0))
    }

    /// Clamp to `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(|x| {
            if x < lo {
                (lo, 0.0)
            } else if x > hi {
                (hi, 0.0)
            } else {
                (x, 1.0)
            }
        })
    }

    /// `max(x, floor)` elementwise.
    pub fn floor_at(self, floor: f64) -> Var<'t> {
        self.unary(|x| if x < floor { (floor, 0.0) } else { (x, 1.0) })
    }

    pub fn add(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, |a, b| a + b, Op::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, |a, b| a - b, Op::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, |a, b| a * b, Op::Mul)
    }

    pub fn div(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, |a, b| a / b, Op::Div)
    }

    /// Elementwise minimum; ties pick `self`.
    pub fn min(self, other: Var<'t>) -> Var<'t> {
        let mask: Vec<bool> = {
            let (a, b) = (self.value(), other.value());
            assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
            a.data().iter().zip(b.data()).map(|(x, y)| x <= y).collect()
        };
        let m2 = mask.clone();
        self.binary(other, |a, b| if a <= b { a } else { b }, move |x, y| Op::Select(x, y, m2))
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty());
        let tape = parts[0].tape;
        let value = {
            let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
            let rows = vals[0].rows();
            let cols: usize = vals.iter().map(|v| v.cols()).sum();
            let mut out = Matrix::zeros(rows, cols);
            for r in 0..rows {
                let mut off = 0;
                for v in &vals {
                    assert_eq!(v.rows(), rows, "concat row mismatch");
                    out.row_mut(r)[off..off + v.cols()].copy_from_slice(v.row(r));
                    off += v.cols();
                }
            }
            out
        };
        let rg = parts.iter().any(|p| p.requires_grad());
        tape.push(value, Op::Concat(parts.iter().map(|p| p.id).collect()), rg)
    }

    pub fn slice_cols(self, start: usize, width: usize) -> Var<'t> {
        let value = {
            let x = self.value();
            assert!(start + width <= x.cols());
            let mut out = Matrix::zeros(x.rows(), width);
            for r in 0..x.rows() {
                out.row_mut(r).copy_from_slice(&x.row(r)[start..start + width]);
            }
            out
        };
        let rg = self.requires_grad();
        self.tape.push(value, Op::SliceCols(self.id, start), rg)
    }

    /// Sum of all elements, in index order.
    pub fn sum(self) -> Var<'t> {
        let s: f64 = self.value().data().iter().sum();
        let rg = self.requires_grad();
        self.tape.push(Matrix::scalar(s), Op::Sum(self.id), rg)
    }

    pub fn mean(self) -> Var<'t> {
        let n = {
            let v = self.value();
            (v.rows() * v.cols()) as f64
        };
        self.sum().scale(1.0 / n)
    }

    /// Per-row sums as a column vector.
    pub fn row_sum(self) -> Var<'t> {
        let value = {
            let x = self.value();
            let sums: Vec<f64> = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
            Matrix::column(&sums)
        };
        let rg = self.requires_grad();
        self.tape.push(value, Op::RowSum(self.id), rg)
    }

    /// Sums consecutive row blocks of sizes `counts` (zero allowed), giving
    /// one output row per block.
    pub fn segment_sum(self, counts: &[usize]) -> Var<'t> {
        let value = {
            let x = self.value();
            assert_eq!(counts.iter().sum::<usize>(), x.rows(), "segment counts must cover all rows");
            let mut out = Matrix::zeros(counts.len(), x.cols());
            let mut row = 0;
            for (s, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    for (o, v) in out.row_mut(s).iter_mut().zip(x.row(row)) {
                        *o += v;
                    }
                    row += 1;
                }
            }
            out
        };
        let rg = self.requires_grad();
        self.tape.push(value, Op::SegmentSum(self.id, counts.to_vec()), rg)
    }

    /// Repeat a column vector across `width` columns.
    pub fn broadcast_cols(self, width: usize) -> Var<'t> {
        let value = {
            let x = self.value();
            assert_eq!(x.cols(), 1);
            let mut out = Matrix::zeros(x.rows(), width);
            for r in 0..x.rows() {
                let v = x.get(r, 0);
                out.row_mut(r).iter_mut().for_each(|o| *o = v);
            }
            out
        };
        let rg = self.requires_grad();
        self.tape.push(value, Op::BroadcastCols(self.id), rg)
    }

    /// Repeat a single row `n` times.
    pub fn repeat_rows(self, n: usize) -> Var<'t> {
        let value = {
            let x = self.value();
            assert_eq!(x.rows(), 1);
            let mut out = Matrix::zeros(n, x.cols());
            for r in 0..n {
                out.row_mut(r).copy_from_slice(x.row(0));
            }
            out
        };
        let rg = self.requires_grad();
        self.tape.push(value, Op::RepeatRows(self.id), rg)
    }

    /// Log-density of the isotropic Gaussian KDE with support rows `self`
    /// (N × d) at each row of `queries`, returned as a column. Evaluated with
    /// log-sum-exp.
    pub fn log_kde(self, queries: &Matrix, sigma: f64) -> Var<'t> {
        let (value, resp) = {
            let s = self.value();
            assert_eq!(s.cols(), queries.cols(), "KDE dimension mismatch");
            crate::density::log_kde_with_responsibilities(&s, queries, sigma)
        };
        let rg = self.requires_grad();
        self.tape.push(
            Matrix::column(&value),
            Op::LogKde { support: self.id, queries: queries.clone(), sigma, resp },
            rg,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let tape = Tape::new();
        let w = tape.variable(Matrix::scalar(3.0));
        let loss = w.square();
        let g = tape.gradient(loss).unwrap();
        assert_eq!(g.of(w).unwrap().data()[0], 6.0);
    }

    #[test]
    fn tanh_gradient_at_zero() {
        let tape = Tape::new();
        let w = tape.variable(Matrix::scalar(0.0));
        let g = tape.gradient(w.tanh()).unwrap();
        assert_eq!(g.of(w).unwrap().data()[0], 1.0);
    }

    #[test]
    fn non_scalar_loss_is_usage_error() {
        let tape = Tape::new();
        let w = tape.variable(Matrix::zeros(2, 1));
        assert!(matches!(tape.gradient(w.tanh()), Err(Error::Usage(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let c = tape.constant(Matrix::scalar(2.0));
        let w = tape.variable(Matrix::scalar(1.5));
        let g = tape.gradient(c.mul(w)).unwrap();
        assert!(g.of(c).is_none());
        assert_eq!(g.of(w).unwrap().data()[0], 2.0);
    }

    #[test]
    fn min_routes_gradient_to_smaller() {
        let tape = Tape::new();
        let a = tape.variable(Matrix::from_vec(1, 2, vec![1.0, 5.0]));
        let b = tape.variable(Matrix::from_vec(1, 2, vec![2.0, 3.0]));
        let g = tape.gradient(a.min(b).sum()).unwrap();
        assert_eq!(g.of(a).unwrap().data(), &[1.0, 0.0]);
        assert_eq!(g.of(b).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn segment_sum_handles_empty_groups() {
        let tape = Tape::new();
        let x = tape.variable(Matrix::from_vec(3, 1, vec![1.0, 2.0, 4.0]));
        let s = x.segment_sum(&[2, 0, 1]);
        assert_eq!(s.value().data(), &[3.0, 0.0, 4.0]);
        let g = tape.gradient(s.mul(tape.constant(Matrix::column(&[1.0, 10.0, 100.0]))).sum()).unwrap();
        assert_eq!(g.of(x).unwrap().data(), &[1.0, 1.0, 100.0]);
    }

    #[test]
    fn repeat_rows_sums_gradients() {
        let tape = Tape::new();
        let x = tape.variable(Matrix::from_rows(&[[1.0, -2.0]]));
        let y = x.repeat_rows(3);
        assert_eq!(y.shape(), (3, 2));
        let w = tape.constant(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]));
        let g = tape.gradient(y.mul(w).sum()).unwrap();
        assert_eq!(g.of(x).unwrap().data(), &[9.0, 12.0]);
    }
}
