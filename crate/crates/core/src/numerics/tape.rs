//! Define-by-run reverse-mode differentiation.
//!
//! Every forward op evaluates eagerly and appends a node holding its output.
//! [`Tape::backward`] walks the nodes in exact reverse insertion order, so an
//! input is always visited after all of its consumers.

use std::collections::{BTreeMap, HashMap};

use super::tensor::{gemm, matmul};
use super::{NumericsError, ParamId, ParamStore, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Value {
    Owned(Tensor),
    Param(ParamId),
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Softmax(Var),
    LogSoftmax(Var),
    MeanRows(Var),
    SumAll(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Embed(Var, Vec<usize>),
    Transpose(Var),
    Reshape(Var),
    Gather(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward pass.
#[derive(Debug, Default)]
pub struct Gradients {
    params: BTreeMap<ParamId, Tensor>,
    leaves: HashMap<Var, Tensor>,
}

impl Gradients {
    /// Gradient with respect to a parameter, if the loss depends on it.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    /// Gradient with respect to a non-parameter leaf created by [`Tape::leaf`].
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.leaves.get(&var)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }

    pub fn into_params(self) -> BTreeMap<ParamId, Tensor> {
        self.params
    }
}

/// Operation recorder. Parameters are borrowed from a [`ParamStore`] and are
/// never copied onto the tape.
pub struct Tape<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    track_params: bool,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

type Result<T> = std::result::Result<T, NumericsError>;

fn broadcast_shape(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Result<[usize; 2]> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a[0], b[0]), dim(a[1], b[1])) {
        (Some(r), Some(c)) => Ok([r, c]),
        _ => Err(NumericsError::Shape { op, lhs: a, rhs: b }),
    }
}

#[inline]
fn bidx(shape: [usize; 2], r: usize, c: usize) -> usize {
    let rr = if shape[0] == 1 { 0 } else { r };
    let cc = if shape[1] == 1 { 0 } else { c };
    rr * shape[1] + cc
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    for row in out.data_mut().chunks_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

fn log_softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    for row in out.data_mut().chunks_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

fn stable_sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl<'p> Tape<'p> {
    /// A tape with no parameter store; only constants and leaves.
    pub fn new() -> Self {
        Self {
            store: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            track_params: true,
        }
    }

    pub fn with_params(store: &'p ParamStore) -> Self {
        Self {
            store: Some(store),
            ..Self::new()
        }
    }

    /// A tape whose parameters are treated as constants (inference).
    pub fn inference(store: &'p ParamStore) -> Self {
        Self {
            track_params: false,
            ..Self::with_params(store)
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.expect("param node without store").get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite(name));
        }
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf; its gradient is reported by [`Gradients::wrt`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// The node for a stored parameter; registered at most once per tape.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        assert!(self.store.is_some(), "tape has no parameter store");
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            requires_grad: self.track_params,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = matmul(self.value(a), self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        self.push("matmul", out, Op::MatMul(a, b), rg)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(name, ta.shape(), tb.shape())?;
        let (sa, sb) = (ta.shape(), tb.shape());
        let (da, db) = (ta.data(), tb.data());
        let mut data = Vec::with_capacity(shape[0] * shape[1]);
        if sa == sb {
            data.extend(da.iter().zip(db).map(|(&x, &y)| f(x, y)));
        } else {
            for r in 0..shape[0] {
                for c in 0..shape[1] {
                    data.push(f(da[bidx(sa, r, c)], db[bidx(sb, r, c)]));
                }
            }
        }
        Tensor::new(shape[0], shape[1], data)
    }

    /// Elementwise sum with row/column/scalar broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        let rg = self.requires(a) || self.requires(b);
        self.push("add", out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("sub", a, b, |x, y| x - y)?;
        let rg = self.requires(a) || self.requires(b);
        self.push("sub", out, Op::Sub(a, b), rg)
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("mul", a, b, |x, y| x * y)?;
        let rg = self.requires(a) || self.requires(b);
        self.push("mul", out, Op::Mul(a, b), rg)
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let out = self.value(x).map(|v| scale * v + shift);
        let rg = self.requires(x);
        self.push("affine", out, Op::Affine(x, scale), rg)
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Result<Var> {
        self.affine(x, scale, 0.0)
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        self.affine(x, -1.0, 1.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(stable_sigmoid);
        let rg = self.requires(x);
        self.push("sigmoid", out, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(f64::tanh);
        let rg = self.requires(x);
        self.push("tanh", out, Op::Tanh(x), rg)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(f64::exp);
        let rg = self.requires(x);
        self.push("exp", out, Op::Exp(x), rg)
    }

    /// Row-wise softmax (max-subtracted).
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let out = softmax_rows(self.value(x));
        let rg = self.requires(x);
        self.push("softmax", out, Op::Softmax(x), rg)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let out = log_softmax_rows(self.value(x));
        let rg = self.requires(x);
        self.push("log_softmax", out, Op::LogSoftmax(x), rg)
    }

    /// Mean over rows, producing a `1 x cols` row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let rows = t.rows();
        // Running mean: rows that are all equal reproduce that row exactly.
        let mut out = t.row(0).to_vec();
        for r in 1..rows {
            let k = (r + 1) as f64;
            for (o, v) in out.iter_mut().zip(t.row(r)) {
                *o += (v - *o) / k;
            }
        }
        let rg = self.requires(x);
        self.push("mean_rows", Tensor::row_vector(out), Op::MeanRows(x), rg)
    }

    /// Sum of every entry as a `1 x 1` scalar.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.requires(x);
        self.push("sum_all", out, Op::SumAll(x), rg)
    }

    /// Concatenation along the last (column) axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| NumericsError::Invalid("concat of zero tensors".into()))?;
        let rows = self.shape(*first)[0];
        for p in parts {
            let s = self.shape(*p);
            if s[0] != rows {
                return Err(NumericsError::Shape {
                    op: "concat",
                    lhs: self.shape(*first),
                    rhs: s,
                });
            }
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p)[1]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let rg = parts.iter().any(|p| self.requires(*p));
        let out = Tensor::new(rows, cols, data)?;
        self.push("concat", out, Op::ConcatCols(parts.to_vec()), rg)
    }

    /// Columns `start..start + width`.
    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let t = self.value(x);
        if width == 0 || start + width > t.cols() {
            return Err(NumericsError::Shape {
                op: "slice_cols",
                lhs: t.shape(),
                rhs: [start, start + width],
            });
        }
        let mut data = Vec::with_capacity(t.rows() * width);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row(r)[start..start + width]);
        }
        let out = Tensor::new(t.rows(), width, data)?;
        let rg = self.requires(x);
        self.push("slice_cols", out, Op::SliceCols(x, start), rg)
    }

    /// Rows `start..start + count`.
    pub fn slice_rows(&mut self, x: Var, start: usize, count: usize) -> Result<Var> {
        let t = self.value(x);
        if count == 0 || start + count > t.rows() {
            return Err(NumericsError::Shape {
                op: "slice_rows",
                lhs: t.shape(),
                rhs: [start, start + count],
            });
        }
        let cols = t.cols();
        let data = t.data()[start * cols..(start + count) * cols].to_vec();
        let out = Tensor::new(count, cols, data)?;
        let rg = self.requires(x);
        self.push("slice_rows", out, Op::SliceRows(x, start), rg)
    }

    /// Gathers rows of `table` by index.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if ids.is_empty() {
            return Err(NumericsError::Invalid("embedding lookup with no ids".into()));
        }
        if let Some(bad) = ids.iter().find(|&&i| i >= t.rows()) {
            return Err(NumericsError::Invalid(format!(
                "embedding id {bad} out of range for table of {} rows",
                t.rows()
            )));
        }
        let cols = t.cols();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::new(ids.len(), cols, data)?;
        let rg = self.requires(table);
        self.push("embed_lookup", out, Op::Embed(table, ids.to_vec()), rg)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose();
        let rg = self.requires(x);
        self.push("transpose", out, Op::Transpose(x), rg)
    }

    /// Same data, new shape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(x);
        if rows * cols != t.len() {
            return Err(NumericsError::Shape {
                op: "reshape",
                lhs: t.shape(),
                rhs: [rows, cols],
            });
        }
        let out = Tensor::new(rows, cols, t.data().to_vec())?;
        let rg = self.requires(x);
        self.push("reshape", out, Op::Reshape(x), rg)
    }

    /// Picks `x[r, cols[r]]` for every row, giving a `rows x 1` column.
    pub fn gather(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if cols.len() != t.rows() || cols.iter().any(|&c| c >= t.cols()) {
            return Err(NumericsError::Invalid(format!(
                "gather indices {cols:?} do not fit shape {:?}",
                t.shape()
            )));
        }
        let data = cols.iter().enumerate().map(|(r, &c)| t.get(r, c)).collect();
        let out = Tensor::new(cols.len(), 1, data)?;
        let rg = self.requires(x);
        self.push("gather", out, Op::Gather(x, cols.to_vec()), rg)
    }

    /// `x · w + b` for a row batch `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add(y, b),
            None => Ok(y),
        }
    }

    /// Consumes the tape and returns gradients of the scalar `loss` with
    /// respect to every differentiable leaf and parameter.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(NumericsError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::default();

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let y = self.value(Var(i));
            match &node.op {
                Op::Leaf => {
                    match node.value {
                        Value::Param(id) => out.params.insert(id, g),
                        Value::Owned(_) => out.leaves.insert(Var(i), g),
                    };
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    // Accumulate in place with beta = 1 so repeated uses of a
                    // weight matrix do not allocate per use.
                    self.accum_with(&mut grads, *a, |d| gemm(&g, false, tb, true, d.data_mut(), 1.0));
                    self.accum_with(&mut grads, *b, |d| gemm(ta, true, &g, false, d.data_mut(), 1.0));
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let (sa, sb) = (self.shape(*a), self.shape(*b));
                    if self.requires(*a) {
                        if sa == g.shape() {
                            self.accum(&mut grads, *a, g.clone());
                        } else {
                            self.accum_with(&mut grads, *a, |d| reduce_into(d, &g, 1.0));
                        }
                    }
                    if self.requires(*b) {
                        if sb == g.shape() {
                            self.accum(&mut grads, *b, g.map(|v| sign * v));
                        } else {
                            self.accum_with(&mut grads, *b, |d| reduce_into(d, &g, sign));
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (sa, sb) = (self.shape(*a), self.shape(*b));
                    let (da, db) = (self.value(*a).data(), self.value(*b).data());
                    let [rows, cols] = g.shape();
                    let mut ga = Tensor::zeros(sa[0], sa[1]);
                    let mut gb = Tensor::zeros(sb[0], sb[1]);
                    for r in 0..rows {
                        for c in 0..cols {
                            let gv = g.get(r, c);
                            let (ia, ib) = (bidx(sa, r, c), bidx(sb, r, c));
                            ga.data_mut()[ia] += gv * db[ib];
                            gb.data_mut()[ib] += gv * da[ia];
                        }
                    }
                    if self.requires(*a) {
                        self.accum(&mut grads, *a, ga);
                    }
                    if self.requires(*b) {
                        self.accum(&mut grads, *b, gb);
                    }
                }
                Op::Affine(x, s) => {
                    let s = *s;
                    self.accum(&mut grads, *x, g.map(|v| v * s));
                }
                Op::Sigmoid(x) => {
                    let d = zip_map(&g, y, |gv, yv| gv * yv * (1.0 - yv));
                    self.accum(&mut grads, *x, d);
                }
                Op::Tanh(x) => {
                    let d = zip_map(&g, y, |gv, yv| gv * (1.0 - yv * yv));
                    self.accum(&mut grads, *x, d);
                }
                Op::Exp(x) => {
                    let d = zip_map(&g, y, |gv, yv| gv * yv);
                    self.accum(&mut grads, *x, d);
                }
                Op::Softmax(x) => {
                    let mut d = g.clone();
                    let cols = y.cols();
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            d.set(r, c, yr[c] * (gr[c] - dot));
                        }
                    }
                    self.accum(&mut grads, *x, d);
                }
                Op::LogSoftmax(x) => {
                    let mut d = g.clone();
                    let cols = y.cols();
                    for r in 0..y.rows() {
                        let total: f64 = g.row(r).iter().sum();
                        for c in 0..cols {
                            d.set(r, c, g.get(r, c) - y.get(r, c).exp() * total);
                        }
                    }
                    self.accum(&mut grads, *x, d);
                }
                Op::MeanRows(x) => {
                    let [rows, cols] = self.shape(*x);
                    let mut d = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            d.set(r, c, g.get(0, c) / rows as f64);
                        }
                    }
                    self.accum(&mut grads, *x, d);
                }
                Op::SumAll(x) => {
                    let [rows, cols] = self.shape(*x);
                    self.accum(&mut grads, *x, Tensor::filled(rows, cols, g.item()));
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let [rows, cols] = self.shape(*p);
                        if self.requires(*p) {
                            let mut d = Vec::with_capacity(rows * cols);
                            for r in 0..rows {
                                d.extend_from_slice(&g.row(r)[offset..offset + cols]);
                            }
                            self.accum(&mut grads, *p, Tensor::new(rows, cols, d)?);
                        }
                        offset += cols;
                    }
                }
                Op::SliceCols(x, start) => {
                    let start = *start;
                    self.accum_with(&mut grads, *x, |d| {
                        let cols = d.cols();
                        for r in 0..g.rows() {
                            for (j, v) in g.row(r).iter().enumerate() {
                                d.data_mut()[r * cols + start + j] += v;
                            }
                        }
                    });
                }
                Op::SliceRows(x, start) => {
                    let start = *start;
                    self.accum_with(&mut grads, *x, |d| {
                        let offset = start * d.cols();
                        for (a, b) in d.data_mut()[offset..offset + g.len()].iter_mut().zip(g.data()) {
                            *a += b;
                        }
                    });
                }
                Op::Embed(table, ids) => {
                    // Sparse: only looked-up rows are touched.
                    self.accum_with(&mut grads, *table, |d| {
                        let cols = d.cols();
                        for (r, &id) in ids.iter().enumerate() {
                            for (c, v) in g.row(r).iter().enumerate() {
                                d.data_mut()[id * cols + c] += v;
                            }
                        }
                    });
                }
                Op::Transpose(x) => {
                    self.accum(&mut grads, *x, g.transpose());
                }
                Op::Reshape(x) => {
                    let [rows, cols] = self.shape(*x);
                    self.accum(&mut grads, *x, Tensor::new(rows, cols, g.into_data())?);
                }
                Op::Gather(x, cols_idx) => {
                    self.accum_with(&mut grads, *x, |d| {
                        let cols = d.cols();
                        for (r, &c) in cols_idx.iter().enumerate() {
                            d.data_mut()[r * cols + c] += g.get(r, 0);
                        }
                    });
                }
            }
        }
        Ok(out)
    }

    fn accum(&self, grads: &mut [Option<Tensor>], v: Var, d: Tensor) {
        if !self.requires(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_scaled(&d, 1.0),
            slot => *slot = Some(d),
        }
    }

    /// Accumulates in place into the (lazily zeroed) gradient of `v`.
    fn accum_with(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut Tensor)) {
        if !self.requires(v) {
            return;
        }
        let [rows, cols] = self.shape(v);
        f(grads[v.0].get_or_insert_with(|| Tensor::zeros(rows, cols)));
    }
}

/// Sums `scale * g` into the broadcast-reduced shape of `d`.
fn reduce_into(d: &mut Tensor, g: &Tensor, scale: f64) {
    let sd = d.shape();
    for r in 0..g.rows() {
        for (c, v) in g.row(r).iter().enumerate() {
            d.data_mut()[bidx(sd, r, c)] += scale * v;
        }
    }
}

fn zip_map(g: &Tensor, y: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = g.data().iter().zip(y.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::new(g.rows(), g.cols(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::new(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_hand_example() {
        let mut tape = Tape::new();
        let a = tape.constant(t(2, 2, &[1., 2., 3., 4.]));
        let b = tape.constant(t(2, 1, &[1., 1.]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[3.0, 7.0]);
    }

    #[test]
    fn activation_fixed_points() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::scalar(0.0));
        let s = tape.sigmoid(z).unwrap();
        let th = tape.tanh(z).unwrap();
        assert_eq!(tape.value(s).item(), 0.5);
        assert_eq!(tape.value(th).item(), 0.0);
        let two = tape.constant(t(1, 2, &[0., 0.]));
        let sm = tape.softmax(two).unwrap();
        assert_eq!(tape.value(sm).data(), &[0.5, 0.5]);
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 3));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
        let c = tape.constant(Tensor::zeros(3, 2));
        assert!(tape.add(a, c).unwrap_err().to_string().contains("add"));
    }

    #[test]
    fn product_rule() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let y = tape.leaf(Tensor::scalar(3.0));
        let p = tape.mul(x, y).unwrap();
        let g = tape.backward(p).unwrap();
        assert_eq!(g.wrt(x).unwrap().item(), 3.0);
        assert_eq!(g.wrt(y).unwrap().item(), 2.0);
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let s = tape.sigmoid(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().item(), 0.25);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(1, 2));
        assert!(matches!(
            tape.backward(x),
            Err(NumericsError::NonScalarLoss([1, 2]))
        ));
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let mut tape = Tape::new();
        let x = tape.constant(t(1, 3, &[1000.0, 1000.0, -1000.0]));
        let s = tape.softmax(x).unwrap();
        let v = tape.value(s);
        assert!((v.get(0, 0) - 0.5).abs() < 1e-12);
        assert_eq!(v.get(0, 2), 0.0);
        let ls = tape.log_softmax(x).unwrap();
        assert!(tape.value(ls).is_finite());
    }

    #[test]
    fn mean_rows_of_identical_rows_is_exact() {
        let row = [0.1, -0.7, 3.3];
        let mut tape = Tape::new();
        let x = tape.constant(t(3, 3, &[row, row, row].concat()));
        let m = tape.mean_rows(x).unwrap();
        assert_eq!(tape.value(m).data(), &row);
    }

    #[test]
    fn shared_input_accumulates_gradient() {
        // d/dx (x*x + x) = 2x + 1
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.5));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.add(sq, x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().item(), 4.0);
    }

    #[test]
    fn broadcast_gradient_reduces() {
        let mut tape = Tape::new();
        let m = tape.leaf(Tensor::filled(3, 2, 1.0));
        let b = tape.leaf(t(1, 2, &[0.5, 0.25]));
        let s = tape.mul(m, b).unwrap();
        let total = tape.sum_all(s).unwrap();
        let g = tape.backward(total).unwrap();
        assert_eq!(g.wrt(b).unwrap().data(), &[3.0, 3.0]);
        assert_eq!(g.wrt(m).unwrap().data(), &[0.5, 0.25, 0.5, 0.25, 0.5, 0.25]);
    }
}
