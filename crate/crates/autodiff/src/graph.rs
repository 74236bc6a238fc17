//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in creation order, which is already a
//! topological order, so `backward` is a single reverse sweep that visits each
//! node once. Graphs are built fresh for every forward pass and dropped after
//! the gradients have been read.

use crate::error::{AutodiffError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, T),
    AddScalar(Var),
    MatMul(Var, Var),
    Concat(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    Abs(Var),
    Square(Var),
    Sqrt(Var),
    Sigmoid(Var),
    Relu(Var),
    Softplus(Var),
    Sin(Var),
    Cos(Var),
    Exp(Var),
    Ln(Var),
    Clamp(Var, T, T),
    NormalizeRows(Var),
    Cross(Var, Var),
    Dot(Var, Var),
    Gather(Var, Vec<usize>),
    ScatterAdd(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar root with respect to every leaf that requires them.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// `None` when the leaf does not influence the root (gradient exactly zero).
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient materialized as a tensor, zero-filled when absent.
    pub fn dense(&self, v: Var, shape: [usize; 2]) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape[0], shape[1]))
    }
}

#[inline]
fn bcast_shape(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Result<[usize; 2]> {
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
        _ => Err(AutodiffError::ShapeMismatch { op, lhs: a, rhs: b }),
    }
}

#[inline]
fn bidx(shape: [usize; 2], r: usize, c: usize) -> usize {
    let rr = if shape[0] == 1 { 0 } else { r };
    let cc = if shape[1] == 1 { 0 } else { c };
    rr * shape[1] + cc
}

fn binary_forward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    out: [usize; 2],
    f: impl Fn(T, T) -> T,
) -> Tensor<T> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(out[0], out[1], data).expect("shape");
    }
    let (sa, sb) = (a.shape(), b.shape());
    Tensor::from_fn(out[0], out[1], |r, c| {
        f(a.data()[bidx(sa, r, c)], b.data()[bidx(sb, r, c)])
    })
}

/// Accumulate `partial(r, c)` into a gradient of broadcast shape `shape`.
fn reduce_into<T: Scalar>(
    shape: [usize; 2],
    out: [usize; 2],
    partial: impl Fn(usize, usize) -> T,
) -> Tensor<T> {
    let mut g = Tensor::zeros(shape[0], shape[1]);
    let data = g.data_mut();
    for r in 0..out[0] {
        for c in 0..out[1] {
            data[bidx(shape, r, c)] += partial(r, c);
        }
    }
    g
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    // log(1 + e^x) without overflow
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn scalar(&mut self, v: T) -> Var {
        self.constant(Tensor::scalar(v))
    }

    /// Copy of `v` cut from the tape: nothing flows back through it.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.nodes[v.0].value.clone();
        self.push(t, Op::Leaf, false)
    }

    /// Error out if `v` holds NaN or infinity.
    pub fn check_finite(&self, v: Var, label: &str) -> Result<()> {
        if self.value(v).all_finite() {
            Ok(())
        } else {
            Err(AutodiffError::NonFinite(label.to_string()))
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        let out = bcast_shape(name, self.shape(a), self.shape(b))?;
        let value = binary_forward(self.value(a), self.value(b), out, f);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    /// Elementwise sum with row/column broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.abs(), Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// Derivative at exactly zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.sqrt(), Op::Sqrt(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// Derivative at exactly zero is zero.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.sin(), Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.cos(), Op::Cos(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.ln(), Op::Ln(a))
    }

    /// Gradient passes only where `lo < x < hi`.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        self.unary(a, |x| x.max(lo).min(hi), Op::Clamp(a, lo, hi))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(AutodiffError::InvalidArgument {
                op: "concat",
                msg: "no inputs".into(),
            });
        }
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::hcat(&tensors)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Row-wise concatenation.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(AutodiffError::InvalidArgument {
                op: "concat_rows",
                msg: "no inputs".into(),
            });
        }
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::vcat(&tensors)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Columns `[start, end)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let cols = self.shape(a)[1];
        if start >= end || end > cols {
            return Err(AutodiffError::InvalidArgument {
                op: "slice_cols",
                msg: format!("range {start}..{end} outside {cols} columns"),
            });
        }
        let value = self.value(a).slice_cols(start, end);
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    /// Sum of all entries, `1 x 1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Mean of all entries, `1 x 1`. Empty input yields zero.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = t.len().max(1);
        let s: T = t.data().iter().copied().sum::<T>() / T::c(n as f64);
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Per-row sum, `n x 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::from_fn(t.rows(), 1, |r, _| t.row(r).iter().copied().sum());
        let rg = self.rg(a);
        self.push(value, Op::RowSum(a), rg)
    }

    /// Scale each row to unit length; zero rows stay zero.
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut value = t.clone();
        let cols = t.cols();
        for r in 0..t.rows() {
            let row = &mut value.data_mut()[r * cols..(r + 1) * cols];
            let n = row.iter().map(|&x| x * x).sum::<T>().sqrt();
            if n > T::zero() {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::NormalizeRows(a), rg)
    }

    /// Row-wise cross product of `n x 3` inputs.
    pub fn cross(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb || sa[1] != 3 {
            return Err(AutodiffError::ShapeMismatch {
                op: "cross",
                lhs: sa,
                rhs: sb,
            });
        }
        let value = cross_rows(self.value(a), self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Cross(a, b), rg))
    }

    /// Row-wise inner product, `n x 1`.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op: "dot",
                lhs: sa,
                rhs: sb,
            });
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let value = Tensor::from_fn(sa[0], 1, |r, _| {
            ta.row(r).iter().zip(tb.row(r)).map(|(&x, &y)| x * y).sum()
        });
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Dot(a, b), rg))
    }

    /// Rows of `a` picked by index (repeats allowed).
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let rows = self.shape(a)[0];
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(AutodiffError::InvalidArgument {
                op: "gather",
                msg: format!("row {bad} out of {rows}"),
            });
        }
        let value = self.value(a).gather_rows(idx);
        let rg = self.rg(a);
        Ok(self.push(value, Op::Gather(a, idx.to_vec()), rg))
    }

    /// `out[idx[i]] += a[i]` into a zero tensor with `rows` rows.
    pub fn scatter_add(&mut self, a: Var, idx: &[usize], rows: usize) -> Result<Var> {
        let t = self.value(a);
        if idx.len() != t.rows() {
            return Err(AutodiffError::InvalidArgument {
                op: "scatter_add",
                msg: format!("{} indices for {} rows", idx.len(), t.rows()),
            });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(AutodiffError::InvalidArgument {
                op: "scatter_add",
                msg: format!("target row {bad} out of {rows}"),
            });
        }
        let cols = t.cols();
        let mut value = Tensor::zeros(rows, cols);
        for (src, &dst) in idx.iter().enumerate() {
            let s = t.row(src).to_vec();
            let d = &mut value.data_mut()[dst * cols..(dst + 1) * cols];
            for (x, y) in d.iter_mut().zip(s) {
                *x += y;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::ScatterAdd(a, idx.to_vec()), rg))
    }

    /// Reverse sweep from a `1 x 1` root.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let shape = self.shape(root);
        if shape != [1, 1] {
            return Err(AutodiffError::NonScalarRoot(shape));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.rg(root) {
            return Ok(Gradients { grads });
        }
        grads[root.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(node, &dy, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn unary_grad(&self, grads: &mut [Option<Tensor<T>>], a: Var, dy: &Tensor<T>, f: impl Fn(T, T) -> T) {
        if !self.rg(a) {
            return;
        }
        let x = self.value(a);
        let data = x.data().iter().zip(dy.data()).map(|(&x, &d)| f(x, d)).collect();
        let g = Tensor::new(x.rows(), x.cols(), data).expect("shape");
        self.accumulate(grads, a, g);
    }

    fn propagate(&self, node: &Node<T>, dy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let y = &node.value;
        let out = y.shape();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -T::one() } else { T::one() };
                if self.rg(*a) {
                    let g = if self.shape(*a) == out {
                        dy.clone()
                    } else {
                        reduce_into(self.shape(*a), out, |r, c| dy.get(r, c))
                    };
                    self.accumulate(grads, *a, g);
                }
                if self.rg(*b) {
                    let g = if self.shape(*b) == out {
                        dy.map(|d| d * sign)
                    } else {
                        reduce_into(self.shape(*b), out, |r, c| dy.get(r, c) * sign)
                    };
                    self.accumulate(grads, *b, g);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (sa, sb) = (ta.shape(), tb.shape());
                if self.rg(*a) {
                    let g = reduce_into(sa, out, |r, c| dy.get(r, c) * tb.data()[bidx(sb, r, c)]);
                    self.accumulate(grads, *a, g);
                }
                if self.rg(*b) {
                    let g = reduce_into(sb, out, |r, c| dy.get(r, c) * ta.data()[bidx(sa, r, c)]);
                    self.accumulate(grads, *b, g);
                }
            }
            Op::Div(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (sa, sb) = (ta.shape(), tb.shape());
                if self.rg(*a) {
                    let g = reduce_into(sa, out, |r, c| dy.get(r, c) / tb.data()[bidx(sb, r, c)]);
                    self.accumulate(grads, *a, g);
                }
                if self.rg(*b) {
                    let g = reduce_into(sb, out, |r, c| {
                        let den = tb.data()[bidx(sb, r, c)];
                        -dy.get(r, c) * y.get(r, c) / den
                    });
                    self.accumulate(grads, *b, g);
                }
            }
            Op::Neg(a) => self.unary_grad(grads, *a, dy, |_, d| -d),
            Op::Scale(a, s) => {
                let s = *s;
                self.unary_grad(grads, *a, dy, |_, d| d * s)
            }
            Op::AddScalar(a) => self.unary_grad(grads, *a, dy, |_, d| d),
            Op::Abs(a) => self.unary_grad(grads, *a, dy, |x, d| {
                if x > T::zero() {
                    d
                } else if x < T::zero() {
                    -d
                } else {
                    T::zero()
                }
            }),
            Op::Square(a) => self.unary_grad(grads, *a, dy, |x, d| T::c(2.0) * x * d),
            Op::Sqrt(a) => self.unary_grad(grads, *a, dy, |x, d| {
                let s = x.sqrt();
                if s > T::zero() {
                    d / (T::c(2.0) * s)
                } else {
                    T::zero()
                }
            }),
            Op::Sigmoid(a) => self.unary_grad(grads, *a, dy, |x, d| {
                let s = sigmoid(x);
                d * s * (T::one() - s)
            }),
            Op::Relu(a) => self.unary_grad(grads, *a, dy, |x, d| if x > T::zero() { d } else { T::zero() }),
            Op::Softplus(a) => self.unary_grad(grads, *a, dy, |x, d| d * sigmoid(x)),
            Op::Sin(a) => self.unary_grad(grads, *a, dy, |x, d| d * x.cos()),
            Op::Cos(a) => self.unary_grad(grads, *a, dy, |x, d| -d * x.sin()),
            Op::Exp(a) => self.unary_grad(grads, *a, dy, |x, d| d * x.exp()),
            Op::Ln(a) => self.unary_grad(grads, *a, dy, |x, d| d / x),
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                self.unary_grad(grads, *a, dy, |x, d| if x > lo && x < hi { d } else { T::zero() })
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.rg(*a) {
                    // dA = dY B^T
                    let mut g = Tensor::zeros(m, k);
                    T::gemm(
                        m, n, k, T::one(), dy.data(), n as isize, 1, tb.data(), 1, n as isize,
                        T::zero(), g.data_mut(), k as isize, 1,
                    );
                    self.accumulate(grads, *a, g);
                }
                if self.rg(*b) {
                    // dB = A^T dY
                    let mut g = Tensor::zeros(k, n);
                    T::gemm(
                        k, m, n, T::one(), ta.data(), 1, k as isize, dy.data(), n as isize, 1,
                        T::zero(), g.data_mut(), n as isize, 1,
                    );
                    self.accumulate(grads, *b, g);
                }
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.rg(p) {
                        self.accumulate(grads, p, dy.slice_cols(start, start + w));
                    }
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let cols = out[1];
                let mut start = 0;
                for &p in parts {
                    let n = self.shape(p)[0];
                    if self.rg(p) {
                        let data = dy.data()[start * cols..(start + n) * cols].to_vec();
                        self.accumulate(grads, p, Tensor::new(n, cols, data).expect("shape"));
                    }
                    start += n;
                }
            }
            Op::SliceCols(a, start) => {
                if self.rg(*a) {
                    let [rows, cols] = self.shape(*a);
                    let w = out[1];
                    let mut g = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        g.data_mut()[r * cols + start..r * cols + start + w].copy_from_slice(dy.row(r));
                    }
                    self.accumulate(grads, *a, g);
                }
            }
            Op::Sum(a) => {
                let [r, c] = self.shape(*a);
                self.accumulate(grads, *a, Tensor::full(r, c, dy.item()));
            }
            Op::Mean(a) => {
                let [r, c] = self.shape(*a);
                let n = T::c((r * c).max(1) as f64);
                self.accumulate(grads, *a, Tensor::full(r, c, dy.item() / n));
            }
            Op::RowSum(a) => {
                let [r, c] = self.shape(*a);
                self.accumulate(grads, *a, Tensor::from_fn(r, c, |i, _| dy.get(i, 0)));
            }
            Op::NormalizeRows(a) => {
                if self.rg(*a) {
                    let x = self.value(*a);
                    let cols = x.cols();
                    let mut g = Tensor::zeros(x.rows(), cols);
                    for r in 0..x.rows() {
                        let n = x.row(r).iter().map(|&v| v * v).sum::<T>().sqrt();
                        if n == T::zero() {
                            continue;
                        }
                        let yr = y.row(r);
                        let dr = dy.row(r);
                        let proj: T = yr.iter().zip(dr).map(|(&p, &q)| p * q).sum();
                        for c in 0..cols {
                            g.data_mut()[r * cols + c] = (dr[c] - yr[c] * proj) / n;
                        }
                    }
                    self.accumulate(grads, *a, g);
                }
            }
            Op::Cross(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    self.accumulate(grads, *a, cross_rows(tb, dy));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, cross_rows(dy, ta));
                }
            }
            Op::Dot(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let g = Tensor::from_fn(ta.rows(), ta.cols(), |r, c| dy.get(r, 0) * tb.get(r, c));
                    self.accumulate(grads, *a, g);
                }
                if self.rg(*b) {
                    let g = Tensor::from_fn(tb.rows(), tb.cols(), |r, c| dy.get(r, 0) * ta.get(r, c));
                    self.accumulate(grads, *b, g);
                }
            }
            Op::Gather(a, idx) => {
                if self.rg(*a) {
                    let [rows, cols] = self.shape(*a);
                    let mut g = Tensor::zeros(rows, cols);
                    for (src, &dst) in idx.iter().enumerate() {
                        let d = &mut g.data_mut()[dst * cols..(dst + 1) * cols];
                        for (x, &v) in d.iter_mut().zip(dy.row(src)) {
                            *x += v;
                        }
                    }
                    self.accumulate(grads, *a, g);
                }
            }
            Op::ScatterAdd(a, idx) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, dy.gather_rows(idx));
                }
            }
        }
    }
}

fn cross_rows<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    Tensor::from_fn(a.rows(), 3, |r, c| {
        let (x, y) = (a.row(r), b.row(r));
        match c {
            0 => x[1] * y[2] - x[2] * y[1],
            1 => x[2] * y[0] - x[0] * y[2],
            _ => x[0] * y[1] - x[1] * y[0],
        }
    })
}
