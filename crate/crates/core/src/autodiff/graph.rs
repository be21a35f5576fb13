use super::tensor::{matmul_raw, Tensor};
use crate::error::{Error, Result};

/// Lower clamp applied inside every logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of a binary op lines up with the left one.
#[derive(Clone, Copy, Debug)]
enum Bcast {
    Same,
    /// rhs is `1×c` against `r×c`
    Row(usize),
    /// rhs is `r×1` against `r×c`
    Col(usize),
    Scalar,
}

impl Bcast {
    #[inline]
    fn index(self, k: usize) -> usize {
        match self {
            Bcast::Same => k,
            Bcast::Row(c) => k % c,
            Bcast::Col(c) => k / c,
            Bcast::Scalar => 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Binary(Binary, Var, Var, Bcast),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sigmoid(Var),
    Abs(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    SumCols(Var),
    SqDist(Var, Var),
    RowOuter(Var, Var),
    ConcatCols(Var, Var),
    GradReverse(Var, f64),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only tape of tensor operations.
///
/// Every forward op pushes one node; [`Graph::backward`] walks the tape in
/// reverse and accumulates gradients for every node that (transitively)
/// depends on a parameter. A graph is built per step and dropped after use.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Leaf that is held fixed.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        Ok(self.push_unchecked(value, Op::Leaf, requires_grad))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last [`backward`](Self::backward), shaped
    /// like the node's value. `None` if the node is not on a path to the loss.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::from_parts(self.nodes[v.0].value.shape().to_vec(), g.clone()))
    }

    fn push_unchecked(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let t = &self.nodes[v.0].value;
        match t.shape().len() {
            1 | 2 => Ok(t.dims2().unwrap()),
            _ => Err(Error::shape(op, t.shape(), &[])),
        }
    }

    fn bcast(&self, op: &'static str, a: Var, b: Var) -> Result<Bcast> {
        let ta = &self.nodes[a.0].value;
        let tb = &self.nodes[b.0].value;
        if ta.shape() == tb.shape() {
            return Ok(Bcast::Same);
        }
        if tb.numel() == 1 {
            return Ok(Bcast::Scalar);
        }
        if let (Some((r, c)), Some((rb, cb))) = (ta.dims2(), tb.dims2()) {
            if ta.shape().len() == 2 {
                if rb == 1 && cb == c {
                    return Ok(Bcast::Row(c));
                }
                if tb.shape().len() == 2 && rb == r && cb == 1 {
                    return Ok(Bcast::Col(c));
                }
            }
        }
        Err(Error::shape(op, ta.shape(), tb.shape()))
    }

    // ---- forward ops -------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 || self.shape(a).len() != 2 || self.shape(b).len() != 2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        if self.shape(a).len() != 2 {
            return Err(Error::shape("transpose", self.shape(a), &[]));
        }
        let t = self.value(a).transpose();
        self.push("transpose", t, Op::Transpose(a), &[a])
    }

    fn binary(&mut self, name: &'static str, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let bc = self.bcast(name, a, b)?;
        let ta = self.value(a);
        let tb = self.value(b).data();
        if matches!(kind, Binary::Div) && tb.contains(&0.0) {
            return Err(Error::domain(name, "division by zero"));
        }
        let out: Vec<f64> = ta
            .data()
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let y = tb[bc.index(k)];
                match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                    Binary::Div => x / y,
                }
            })
            .collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), out);
        self.push(name, value, Op::Binary(kind, a, b, bc), &[a, b])
    }

    /// Elementwise `a + b`; `b` may be a row vector, column vector or scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", Binary::Div, a, b)
    }

    fn unary(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let ta = self.value(a);
        let value = Tensor::from_parts(ta.shape().to_vec(), ta.data().iter().map(|&x| f(x)).collect());
        self.push(name, value, op, &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.unary("scale", a, Op::Scale(a, s), |x| x * s)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.unary("add_scalar", a, Op::AddScalar(a), |x| x + s)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let n = self.neg(a)?;
        self.add_scalar(n, 1.0)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, Op::Exp(a), f64::exp)
    }

    /// `ln(max(a, 1e-12))`
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, Op::Log(a), |x| x.max(LOG_EPS).ln())
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, Op::Sigmoid(a), sigmoid)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary("abs", a, Op::Abs(a), f64::abs)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary("clamp", a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2("softmax_rows", a)?;
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(c) {
            softmax_in_place(row);
        }
        let shape = self.shape(a).to_vec();
        debug_assert_eq!(out.len(), r * c);
        self.push("softmax_rows", Tensor::from_parts(shape, out), Op::SoftmaxRows(a), &[a])
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (_, c) = self.dims2("log_softmax_rows", a)?;
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let shape = self.shape(a).to_vec();
        self.push(
            "log_softmax_rows",
            Tensor::from_parts(shape, out),
            Op::LogSoftmaxRows(a),
            &[a],
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Sums each row, giving an `r×1` column.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2("sum_rows", a)?;
        let out = self.value(a).data().chunks(c).map(|row| row.iter().sum()).collect();
        self.push("sum_rows", Tensor::from_parts(vec![r, 1], out), Op::SumRows(a), &[a])
    }

    /// Sums each column, giving a `1×c` row.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let (_, c) = self.dims2("sum_cols", a)?;
        let mut out = vec![0.0; c];
        for row in self.value(a).data().chunks(c) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        self.push("sum_cols", Tensor::from_parts(vec![1, c], out), Op::SumCols(a), &[a])
    }

    /// Column means, `1×c`.
    pub fn mean_cols(&mut self, a: Var) -> Result<Var> {
        let (r, _) = self.dims2("mean_cols", a)?;
        let s = self.sum_cols(a)?;
        self.scale(s, 1.0 / r as f64)
    }

    /// Pairwise squared Euclidean distances between the rows of `a` and `b`.
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, d) = self.dims2("sq_dist", a)?;
        let (n, d2) = self.dims2("sq_dist", b)?;
        if d != d2 {
            return Err(Error::shape("sq_dist", self.shape(a), self.shape(b)));
        }
        let out = sq_dist_raw(self.value(a).data(), self.value(b).data(), m, n, d);
        self.push(
            "sq_dist",
            Tensor::from_parts(vec![m, n], out),
            Op::SqDist(a, b),
            &[a, b],
        )
    }

    /// Row-wise flattened outer product: row `i` of the result is
    /// `a_i ⊗ b_i` with `a`'s index varying slowest.
    pub fn row_outer(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, p) = self.dims2("row_outer", a)?;
        let (r2, q) = self.dims2("row_outer", b)?;
        if r != r2 {
            return Err(Error::shape("row_outer", self.shape(a), self.shape(b)));
        }
        let (ta, tb) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(r * p * q);
        for i in 0..r {
            for u in 0..p {
                let x = ta[i * p + u];
                out.extend(tb[i * q..(i + 1) * q].iter().map(|&y| x * y));
            }
        }
        self.push(
            "row_outer",
            Tensor::from_parts(vec![r, p * q], out),
            Op::RowOuter(a, b),
            &[a, b],
        )
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, p) = self.dims2("concat_cols", a)?;
        let (r2, q) = self.dims2("concat_cols", b)?;
        if r != r2 {
            return Err(Error::shape("concat_cols", self.shape(a), self.shape(b)));
        }
        let (ta, tb) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(r * (p + q));
        for i in 0..r {
            out.extend_from_slice(&ta[i * p..(i + 1) * p]);
            out.extend_from_slice(&tb[i * q..(i + 1) * q]);
        }
        self.push(
            "concat_cols",
            Tensor::from_parts(vec![r, p + q], out),
            Op::ConcatCols(a, b),
            &[a, b],
        )
    }

    /// Identity on the forward pass; multiplies the upstream gradient by
    /// `-coefficient` on the backward pass.
    pub fn grad_reverse(&mut self, a: Var, coefficient: f64) -> Result<Var> {
        if !(coefficient >= 0.0) || !coefficient.is_finite() {
            return Err(Error::domain("grad_reverse", "coefficient must be finite and >= 0"));
        }
        let value = self.value(a).clone();
        self.push("grad_reverse", value, Op::GradReverse(a, coefficient), &[a])
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse sweep from a single-element `loss`. Gradients from different
    /// uses of the same node are summed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = &self.nodes[loss.0].value;
        if lt.numel() != 1 || lt.shape().len() > 1 {
            return Err(Error::shape("backward", lt.shape(), &[]));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(up) = self.grads[id].take() else {
                continue;
            };
            self.propagate(id, &up);
            self.grads[id] = Some(up);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var) -> Option<&mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let len = self.nodes[v.0].value.numel();
        Some(self.grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&mut self, id: usize, up: &[f64]) {
        let op = self.nodes[id].op.clone();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(a).dims2().unwrap();
                let n = self.value(b).cols();
                if self.requires_grad(a) {
                    let bt = self.value(b).transpose();
                    let da = matmul_raw(up, bt.data(), m, n, k);
                    add_into(self.accumulate(a), &da);
                }
                if self.requires_grad(b) {
                    let at = self.value(a).transpose();
                    let db = matmul_raw(at.data(), up, k, m, n);
                    add_into(self.accumulate(b), &db);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = self.value(a).dims2().unwrap();
                let ut = Tensor::from_parts(vec![c, r], up.to_vec()).transpose();
                add_into(self.accumulate(a), ut.data());
            }
            Op::Binary(kind, a, b, bc) => {
                let (xa, xb) = (self.value(a).data().to_vec(), self.value(b).data().to_vec());
                if let Some(ga) = self.accumulate(a) {
                    for (k, g) in ga.iter_mut().enumerate() {
                        let y = xb[bc.index(k)];
                        *g += match kind {
                            Binary::Add | Binary::Sub => up[k],
                            Binary::Mul => up[k] * y,
                            Binary::Div => up[k] / y,
                        };
                    }
                }
                if let Some(gb) = self.accumulate(b) {
                    for (k, &u) in up.iter().enumerate() {
                        let j = bc.index(k);
                        let y = xb[j];
                        gb[j] += match kind {
                            Binary::Add => u,
                            Binary::Sub => -u,
                            Binary::Mul => u * xa[k],
                            Binary::Div => -u * xa[k] / (y * y),
                        };
                    }
                }
            }
            Op::Scale(a, s) => self.unary_back(a, up, |_, _, u| u * s, id),
            Op::AddScalar(a) => self.unary_back(a, up, |_, _, u| u, id),
            Op::Relu(a) => self.unary_back(a, up, |x, _, u| if x > 0.0 { u } else { 0.0 }, id),
            Op::Exp(a) => self.unary_back(a, up, |_, y, u| u * y, id),
            Op::Log(a) => self.unary_back(a, up, |x, _, u| if x > LOG_EPS { u / x } else { 0.0 }, id),
            Op::Sigmoid(a) => self.unary_back(a, up, |_, y, u| u * y * (1.0 - y), id),
            Op::Abs(a) => self.unary_back(
                a,
                up,
                |x, _, u| {
                    if x > 0.0 {
                        u
                    } else if x < 0.0 {
                        -u
                    } else {
                        0.0
                    }
                },
                id,
            ),
            Op::Clamp(a, lo, hi) => self.unary_back(a, up, |x, _, u| if x >= lo && x <= hi { u } else { 0.0 }, id),
            Op::GradReverse(a, c) => self.unary_back(a, up, |_, _, u| -c * u, id),
            Op::SoftmaxRows(a) => {
                let c = self.value(a).cols();
                let y = self.nodes[id].value.data().to_vec();
                if let Some(ga) = self.accumulate(a) {
                    for ((g, yr), ur) in ga.chunks_mut(c).zip(y.chunks(c)).zip(up.chunks(c)) {
                        let dot: f64 = yr.iter().zip(ur).map(|(y, u)| y * u).sum();
                        for ((g, &y), &u) in g.iter_mut().zip(yr).zip(ur) {
                            *g += y * (u - dot);
                        }
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                let c = self.value(a).cols();
                let y = self.nodes[id].value.data().to_vec();
                if let Some(ga) = self.accumulate(a) {
                    for ((g, yr), ur) in ga.chunks_mut(c).zip(y.chunks(c)).zip(up.chunks(c)) {
                        let total: f64 = ur.iter().sum();
                        for ((g, &y), &u) in g.iter_mut().zip(yr).zip(ur) {
                            *g += u - y.exp() * total;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.accumulate(a) {
                    ga.iter_mut().for_each(|g| *g += up[0]);
                }
            }
            Op::Mean(a) => {
                let n = self.value(a).numel() as f64;
                if let Some(ga) = self.accumulate(a) {
                    ga.iter_mut().for_each(|g| *g += up[0] / n);
                }
            }
            Op::SumRows(a) => {
                let c = self.value(a).cols();
                if let Some(ga) = self.accumulate(a) {
                    for (row, &u) in ga.chunks_mut(c).zip(up) {
                        row.iter_mut().for_each(|g| *g += u);
                    }
                }
            }
            Op::SumCols(a) => {
                let c = self.value(a).cols();
                if let Some(ga) = self.accumulate(a) {
                    for row in ga.chunks_mut(c) {
                        row.iter_mut().zip(up).for_each(|(g, &u)| *g += u);
                    }
                }
            }
            Op::SqDist(a, b) => {
                let (m, d) = self.value(a).dims2().unwrap();
                let n = self.value(b).rows();
                let (xa, xb) = (self.value(a).data().to_vec(), self.value(b).data().to_vec());
                let mut da = vec![0.0; m * d];
                let mut db = vec![0.0; n * d];
                for i in 0..m {
                    for j in 0..n {
                        let u = 2.0 * up[i * n + j];
                        if u == 0.0 {
                            continue;
                        }
                        for t in 0..d {
                            let diff = u * (xa[i * d + t] - xb[j * d + t]);
                            da[i * d + t] += diff;
                            db[j * d + t] -= diff;
                        }
                    }
                }
                add_into(self.accumulate(a), &da);
                add_into(self.accumulate(b), &db);
            }
            Op::RowOuter(a, b) => {
                let (r, p) = self.value(a).dims2().unwrap();
                let q = self.value(b).cols();
                let (xa, xb) = (self.value(a).data().to_vec(), self.value(b).data().to_vec());
                if let Some(ga) = self.accumulate(a) {
                    for i in 0..r {
                        for u in 0..p {
                            let base = i * p * q + u * q;
                            ga[i * p + u] += (0..q).map(|v| up[base + v] * xb[i * q + v]).sum::<f64>();
                        }
                    }
                }
                if let Some(gb) = self.accumulate(b) {
                    for i in 0..r {
                        for u in 0..p {
                            let base = i * p * q + u * q;
                            let x = xa[i * p + u];
                            for v in 0..q {
                                gb[i * q + v] += up[base + v] * x;
                            }
                        }
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let p = self.value(a).cols();
                let q = self.value(b).cols();
                if let Some(ga) = self.accumulate(a) {
                    for (g, u) in ga.chunks_mut(p).zip(up.chunks(p + q)) {
                        g.iter_mut().zip(&u[..p]).for_each(|(g, &u)| *g += u);
                    }
                }
                if let Some(gb) = self.accumulate(b) {
                    for (g, u) in gb.chunks_mut(q).zip(up.chunks(p + q)) {
                        g.iter_mut().zip(&u[p..]).for_each(|(g, &u)| *g += u);
                    }
                }
            }
        }
    }

    /// Elementwise backward: `f(input, output, upstream)`.
    fn unary_back(&mut self, a: Var, up: &[f64], f: impl Fn(f64, f64, f64) -> f64, id: usize) {
        if !self.requires_grad(a) {
            return;
        }
        let x = self.value(a).data().to_vec();
        let y = self.nodes[id].value.data().to_vec();
        let ga = self.accumulate(a).unwrap();
        for (k, g) in ga.iter_mut().enumerate() {
            *g += f(x[k], y[k], up[k]);
        }
    }
}

fn add_into(target: Option<&mut Vec<f64>>, src: &[f64]) {
    if let Some(t) = target {
        t.iter_mut().zip(src).for_each(|(t, &s)| *t += s);
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    row.iter_mut().for_each(|x| *x /= total);
}

pub(crate) fn sq_dist_raw(a: &[f64], b: &[f64], m: usize, n: usize, d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let ai = &a[i * d..(i + 1) * d];
        for j in 0..n {
            let bj = &b[j * d..(j + 1) * d];
            out.push(ai.iter().zip(bj).map(|(x, y)| (x - y) * (x - y)).sum());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_by_hand() {
        let mut g = Graph::new();
        let a = g.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        let b = g.constant(mat(&[&[1.0], &[1.0]])).unwrap();
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 1]);
        assert_eq!(g.value(c).data(), &[3.0, 7.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = Graph::new();
        let a = g.constant(mat(&[&[0.0, 0.0]])).unwrap();
        let s = g.softmax_rows(a).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn relu_clips_negatives() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![-1.0, 2.0]).unwrap()).unwrap();
        let r = g.relu(a).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 2.0]);
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![3.0]).unwrap()).unwrap();
        let xx = g.mul(x, x).unwrap();
        let l = g.sum(xx).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn mean_gradient_is_uniform() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, -2.0, 5.0, 0.5]).unwrap()).unwrap();
        let l = g.mean(x).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.25; 4]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
        let y = g.scale(x, 2.0).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Shape { op: "backward", .. })));
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = g.constant(Tensor::zeros(&[2, 2])).unwrap();
        match g.matmul(a, b) {
            Err(Error::Shape { op, lhs, rhs }) => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(g.add(a, b), Err(Error::Shape { op: "add", .. })));
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut g = Graph::new();
        let bad = Tensor::vector(vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(g.constant(bad), Err(Error::NonFinite { .. })));
        let big = g.constant(Tensor::vector(vec![1000.0]).unwrap()).unwrap();
        assert!(matches!(g.exp(big), Err(Error::NonFinite { op: "exp" })));
    }

    #[test]
    fn log_is_clamped() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![0.0, 1.0]).unwrap()).unwrap();
        let l = g.log(x).unwrap();
        assert_eq!(g.value(l).data()[0], LOG_EPS.ln());
        let s = g.sum(l).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn broadcasting_row_col_scalar() {
        let mut g = Graph::new();
        let a = g.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        let row = g.constant(mat(&[&[10.0, 20.0]])).unwrap();
        let col = g.constant(mat(&[&[1.0], &[2.0]])).unwrap();
        let s = g.constant(Tensor::scalar(0.5)).unwrap();
        let r = g.add(a, row).unwrap();
        assert_eq!(g.value(r).data(), &[11.0, 22.0, 13.0, 24.0]);
        let c = g.div(a, col).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 1.5, 2.0]);
        let m = g.mul(a, s).unwrap();
        assert_eq!(g.value(m).data(), &[0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn grad_reverse_negates_and_scales() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.5, -0.5]).unwrap()).unwrap();
        let r = g.grad_reverse(x, 2.0).unwrap();
        assert_eq!(g.value(r), g.value(x));
        let l = g.sum(r).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[-2.0, -2.0]);
    }

    #[test]
    fn division_by_zero_is_domain_error() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![1.0]).unwrap()).unwrap();
        let z = g.constant(Tensor::vector(vec![0.0]).unwrap()).unwrap();
        assert!(matches!(g.div(a, z), Err(Error::Domain { op: "div", .. })));
    }
}
