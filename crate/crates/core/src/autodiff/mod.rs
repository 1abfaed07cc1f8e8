//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] owns every value computed in a forward pass. Operations append
//! a node and return a [`Var`] handle; [`Tape::backward`] walks the nodes in
//! reverse once and accumulates gradients into the leaves. Gradients keep
//! accumulating across `backward` calls until [`Tape::zero_grad`].
//!
//! ```
//! use symmatch::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::new(1, 2, vec![3.0, -1.0]).unwrap());
//! let loss = tape.frobenius_sq(x).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap().data(), &[6.0, -2.0]);
//! ```

pub mod gradcheck;
mod tensor;

pub use tensor::Tensor;

use tensor::gemm;

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    BroadcastRows(Var),
    Scale(Var, f64),
    Relu(Var),
    RowSoftmax(Var, f64),
    ConcatCols(Var, Var),
    MaxPoolRows(Var, Vec<usize>),
    FrobeniusSq(Var),
    Sum(Var),
    SqrtEps(Var),
    GatherRows(Var, Vec<usize>),
    ScatterAddCols(Var, Vec<usize>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::AddRow(..) => "add_row",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::Scale(..) => "scale",
            Op::Relu(..) => "relu",
            Op::RowSoftmax(..) => "row_softmax",
            Op::ConcatCols(..) => "concat_cols",
            Op::MaxPoolRows(..) => "global_max_pool",
            Op::FrobeniusSq(..) => "frobenius_sq",
            Op::Sum(..) => "sum",
            Op::SqrtEps(..) => "sqrt_eps",
            Op::GatherRows(..) => "gather_rows",
            Op::ScatterAddCols(..) => "scatter_add_cols",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input; receives gradients on `backward`.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Input that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(Error::NonFinite(op.name().to_string()));
        }
        let requires_grad = match &op {
            Op::Leaf => true,
            Op::Constant => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::AddRow(a, b) | Op::ConcatCols(a, b) => {
                self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad
            }
            Op::Transpose(a)
            | Op::BroadcastRows(a)
            | Op::Scale(a, _)
            | Op::Relu(a)
            | Op::RowSoftmax(a, _)
            | Op::MaxPoolRows(a, _)
            | Op::FrobeniusSq(a)
            | Op::Sum(a)
            | Op::SqrtEps(a)
            | Op::GatherRows(a, _)
            | Op::ScatterAddCols(a, _) => self.nodes[a.0].requires_grad,
        };
        Ok(self.push_raw(value, op, requires_grad))
    }

    fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transposed();
        self.push(out, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "sub", |x, y| x - y)?;
        self.push(out, Op::Sub(a, b))
    }

    fn zip(&self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(op, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.rows(), ta.cols(), data)
    }

    /// Adds the 1×d row `row` to every row of the n×d `a` (bias add).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let [n, d] = self.shape(a);
        if self.shape(row) != [1, d] {
            return Err(Error::shape("add_row", format!("{:?} + {:?}", [n, d], self.shape(row))));
        }
        let r = self.value(row).data().to_vec();
        let mut out = self.value(a).clone();
        for chunk in out.data_mut().chunks_mut(d.max(1)) {
            for (v, b) in chunk.iter_mut().zip(&r) {
                *v += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    /// Repeats a 1×d row `n` times.
    pub fn broadcast_rows(&mut self, row: Var, n: usize) -> Result<Var> {
        let [r, d] = self.shape(row);
        if r != 1 {
            return Err(Error::shape("broadcast_rows", format!("expected a single row, got {r}")));
        }
        let src = self.value(row).data().to_vec();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(&src);
        }
        let out = Tensor::new(n, d, data)?;
        self.push(out, Op::BroadcastRows(row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(out, Op::Relu(a))
    }

    /// Row-wise softmax of `logits / tau`, computed with max subtraction.
    pub fn row_softmax(&mut self, logits: Var, tau: f64) -> Result<Var> {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("softmax temperature must be positive, got {tau}")));
        }
        let x = self.value(logits);
        let (n, m) = (x.rows(), x.cols());
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            let row = x.row(i);
            let out = &mut data[i * m..(i + 1) * m];
            let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut total = 0.0;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = ((v - max) / tau).exp();
                total += *o;
            }
            for o in out.iter_mut() {
                *o /= total;
            }
        }
        let out = Tensor::new(n, m, data)?;
        self.push(out, Op::RowSoftmax(logits, tau))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let ([ra, ca], [rb, cb]) = (self.shape(a), self.shape(b));
        if ra != rb {
            return Err(Error::shape("concat_cols", format!("{ra} rows vs {rb} rows")));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let out = Tensor::new(ra, ca + cb, data)?;
        self.push(out, Op::ConcatCols(a, b))
    }

    /// Column-wise maximum over rows, n×d → 1×d. Ties go to the lowest row.
    pub fn global_max_pool(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (n, d) = (x.rows(), x.cols());
        if n == 0 {
            return Err(Error::shape("global_max_pool", "cannot pool zero rows"));
        }
        let mut best = x.row(0).to_vec();
        let mut arg = vec![0usize; d];
        for r in 1..n {
            for (c, &v) in x.row(r).iter().enumerate() {
                if v > best[c] {
                    best[c] = v;
                    arg[c] = r;
                }
            }
        }
        let out = Tensor::new(1, d, best)?;
        self.push(out, Op::MaxPoolRows(a, arg))
    }

    /// Sum of squared entries, as a 1×1 tensor.
    pub fn frobenius_sq(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().map(|v| v * v).sum();
        self.push(Tensor::scalar(s), Op::FrobeniusSq(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// `sqrt(x + eps)` of a scalar.
    pub fn sqrt_eps(&mut self, a: Var, eps: f64) -> Result<Var> {
        if self.shape(a) != [1, 1] {
            return Err(Error::shape("sqrt_eps", "expects a scalar"));
        }
        let v = self.value(a).item() + eps;
        if v < 0.0 {
            return Err(Error::InvalidArgument("sqrt of a negative value".into()));
        }
        self.push(Tensor::scalar(v.sqrt()), Op::SqrtEps(a))
    }

    /// Output row `i` is input row `index[i]`.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let (n, d) = (x.rows(), x.cols());
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                size: n,
                context: "gather_rows".into(),
            });
        }
        let mut data = Vec::with_capacity(index.len() * d);
        for &i in index {
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::new(index.len(), d, data)?;
        self.push(out, Op::GatherRows(a, index.to_vec()))
    }

    /// Right-multiplies by the 0/1 matrix of a map: input column `c` is added
    /// into output column `index[c]`, giving an n×`width` result.
    pub fn scatter_add_cols(&mut self, a: Var, index: &[usize], width: usize) -> Result<Var> {
        let x = self.value(a);
        let (n, m) = (x.rows(), x.cols());
        if index.len() != m {
            return Err(Error::shape("scatter_add_cols", format!("{} indices for {m} columns", index.len())));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= width) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                size: width,
                context: "scatter_add_cols".into(),
            });
        }
        let mut out = Tensor::zeros(n, width);
        for r in 0..n {
            let src = x.row(r);
            let dst = &mut out.data_mut()[r * width..(r + 1) * width];
            for (c, &t) in index.iter().enumerate() {
                dst[t] += src[c];
            }
        }
        self.push(out, Op::ScatterAddCols(a, index.to_vec()))
    }

    /// Reverse pass from a scalar. Leaf gradients accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::shape("backward", format!("loss must be scalar, got {:?}", self.shape(loss))));
        }
        let mut adj: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => match &mut self.grads[idx] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                },
                Op::Constant => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    if self.nodes[a.0].requires_grad {
                        let mut da = Tensor::zeros(ta.rows(), ta.cols());
                        gemm(&g, false, tb, true, &mut da, 0.0);
                        accumulate(&mut adj, *a, da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut db = Tensor::zeros(tb.rows(), tb.cols());
                        gemm(ta, true, &g, false, &mut db, 0.0);
                        accumulate(&mut adj, *b, db);
                    }
                }
                Op::Transpose(a) => accumulate(&mut adj, *a, g.transposed()),
                Op::Add(a, b) => {
                    accumulate(&mut adj, *b, g.clone());
                    accumulate(&mut adj, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.map(|v| -v));
                    accumulate(&mut adj, *a, g);
                }
                Op::AddRow(a, row) => {
                    accumulate(&mut adj, *row, column_sums(&g));
                    accumulate(&mut adj, *a, g);
                }
                Op::BroadcastRows(row) => accumulate(&mut adj, *row, column_sums(&g)),
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut adj, *a, g.map(|v| v * c));
                }
                Op::Relu(a) => {
                    let y = &node.value;
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&gv, &yv)| if yv > 0.0 { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut adj, *a, Tensor::new(g.rows(), g.cols(), data)?);
                }
                Op::RowSoftmax(a, tau) => {
                    let y = &node.value;
                    let m = y.cols();
                    let mut dx = Tensor::zeros(y.rows(), m);
                    for i in 0..y.rows() {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let s: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let out = &mut dx.data_mut()[i * m..(i + 1) * m];
                        for j in 0..m {
                            out[j] = yr[j] * (gr[j] - s) / tau;
                        }
                    }
                    accumulate(&mut adj, *a, dx);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[a.0].value.cols();
                    let cb = self.nodes[b.0].value.cols();
                    let mut da = Vec::with_capacity(g.rows() * ca);
                    let mut db = Vec::with_capacity(g.rows() * cb);
                    for r in 0..g.rows() {
                        da.extend_from_slice(&g.row(r)[..ca]);
                        db.extend_from_slice(&g.row(r)[ca..]);
                    }
                    accumulate(&mut adj, *a, Tensor::new(g.rows(), ca, da)?);
                    accumulate(&mut adj, *b, Tensor::new(g.rows(), cb, db)?);
                }
                Op::MaxPoolRows(a, arg) => {
                    let [n, d] = self.nodes[a.0].value.shape();
                    let mut dx = Tensor::zeros(n, d);
                    for (c, &r) in arg.iter().enumerate() {
                        dx.data_mut()[r * d + c] += g.data()[c];
                    }
                    accumulate(&mut adj, *a, dx);
                }
                Op::FrobeniusSq(a) => {
                    let s = 2.0 * g.item();
                    let dx = self.nodes[a.0].value.map(|v| s * v);
                    accumulate(&mut adj, *a, dx);
                }
                Op::Sum(a) => {
                    let [n, d] = self.nodes[a.0].value.shape();
                    accumulate(&mut adj, *a, Tensor::new(n, d, vec![g.item(); n * d])?);
                }
                Op::SqrtEps(a) => {
                    let y = node.value.item();
                    accumulate(&mut adj, *a, Tensor::scalar(g.item() / (2.0 * y)));
                }
                Op::GatherRows(a, index) => {
                    let [n, d] = self.nodes[a.0].value.shape();
                    let mut dx = Tensor::zeros(n, d);
                    for (i, &src) in index.iter().enumerate() {
                        let row = g.row(i);
                        for (o, v) in dx.data_mut()[src * d..(src + 1) * d].iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    accumulate(&mut adj, *a, dx);
                }
                Op::ScatterAddCols(a, index) => {
                    let n = g.rows();
                    let m = index.len();
                    let mut dx = Tensor::zeros(n, m);
                    for r in 0..n {
                        let gr = g.row(r);
                        let out = &mut dx.data_mut()[r * m..(r + 1) * m];
                        for (c, &t) in index.iter().enumerate() {
                            out[c] = gr[t];
                        }
                    }
                    accumulate(&mut adj, *a, dx);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut adj[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let d = g.cols();
    let mut out = vec![0.0; d];
    for r in 0..g.rows() {
        for (o, v) in out.iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    Tensor::new(1, d, out).expect("row vector shape")
}
