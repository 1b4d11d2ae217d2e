use std::sync::Arc;

use rand::Rng;

use super::matrix::{gemm, Matrix};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Recip(Var),
    Dropout(Var, Vec<f64>),
    GatherRows(Var, Arc<[usize]>),
    SegmentSoftmax(Var, Arc<[usize]>),
    SegmentWeightedSum {
        values: Var,
        weights: Var,
        segments: Arc<[usize]>,
    },
    SegmentLogSumExp(Var, Arc<[usize]>),
    SumCols(Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Dynamic reverse-mode tape. Operations are appended in evaluation order,
/// so the node list is always topologically sorted.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to the trainable leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for a trainable leaf; `None` for constants and for leaves the
    /// loss does not depend on.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn stable_softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn check_segments(op: &'static str, segments: &[usize], rows: usize, n_segments: usize) -> Result<()> {
    if segments.len() != rows {
        return Err(Error::Shape {
            op,
            lhs: (rows, 1),
            rhs: (segments.len(), 1),
        });
    }
    if let Some(&s) = segments.iter().find(|&&s| s >= n_segments) {
        return Err(Error::InvalidArgument(format!(
            "{op}: segment id {s} out of range for {n_segments} segments"
        )));
    }
    Ok(())
}

fn require_nonempty_segments(op: &'static str, segments: &[usize], n_segments: usize) -> Result<()> {
    let mut seen = vec![false; n_segments];
    for &s in segments {
        seen[s] = true;
    }
    match seen.iter().position(|&b| !b) {
        Some(s) => Err(Error::InvalidArgument(format!("{op}: segment {s} is empty"))),
        None => Ok(()),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
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

    /// Records a constant input.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a trainable input whose gradient [`Tape::backward`] reports.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.as_slice().iter().zip(vb.as_slice()).map(|(&x, &y)| f(x, y)).collect();
        Matrix::from_vec(va.rows(), va.cols(), data).expect("same shape")
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_map(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.zip_map(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_map(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Adds a `1×n` bias row to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let ((m, n), sb) = (self.shape(a), self.shape(bias));
        if sb != (1, n) {
            return Err(Error::Shape {
                op: "add_bias",
                lhs: (m, n),
                rhs: sb,
            });
        }
        let b = self.value(bias).as_slice().to_vec();
        let mut value = self.value(a).clone();
        for r in 0..m {
            for (x, y) in value.row_mut(r).iter_mut().zip(&b) {
                *x += y;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(value, Op::AddBias(a, bias), rg))
    }

    /// Multiplies row `i` of an `m×n` matrix by entry `i` of an `m×1` column.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var> {
        let ((m, n), ss) = (self.shape(a), self.shape(s));
        if ss != (m, 1) {
            return Err(Error::Shape {
                op: "scale_rows",
                lhs: (m, n),
                rhs: ss,
            });
        }
        let mut value = self.value(a).clone();
        for r in 0..m {
            let k = self.value(s)[(r, 0)];
            value.row_mut(r).iter_mut().for_each(|x| *x *= k);
        }
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(value, Op::ScaleRows(a, s), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::hconcat(&mats)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    /// `max(x, slope·x)` for `slope` in (0, 1).
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, Op::LeakyRelu(a, slope), |x| if x >= 0.0 { x } else { slope * x })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), stable_sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    /// `ln(1 + e^x)` without overflow for large `|x|`.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), stable_softplus)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.unary(a, Op::Recip(a), |x| 1.0 / x)
    }

    /// Inverted dropout. Identity when `training` is false or `rate` is 0.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} not in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let src = self.value(a);
        let data = src.as_slice().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = Matrix::from_vec(src.rows(), src.cols(), data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Dropout(a, mask), rg))
    }

    /// Row `i` of the result is row `indices[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, indices: impl Into<Arc<[usize]>>) -> Result<Var> {
        let indices = indices.into();
        let rows = self.shape(a).0;
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::Shape {
                op: "gather_rows",
                lhs: self.shape(a),
                rhs: (bad, 0),
            });
        }
        let value = self.value(a).gather_rows(&indices);
        let rg = self.rg(a);
        Ok(self.push(value, Op::GatherRows(a, indices), rg))
    }

    /// Softmax of an `n×1` column within each segment, with per-segment max subtraction.
    pub fn segment_softmax(&mut self, logits: Var, segments: impl Into<Arc<[usize]>>, n_segments: usize) -> Result<Var> {
        let segments = segments.into();
        let (n, c) = self.shape(logits);
        if c != 1 {
            return Err(Error::Shape {
                op: "segment_softmax",
                lhs: (n, c),
                rhs: (n, 1),
            });
        }
        check_segments("segment_softmax", &segments, n, n_segments)?;
        require_nonempty_segments("segment_softmax", &segments, n_segments)?;
        let x = self.value(logits).as_slice();
        let mut max = vec![f64::NEG_INFINITY; n_segments];
        for (&v, &s) in x.iter().zip(segments.iter()) {
            max[s] = max[s].max(v);
        }
        let e: Vec<f64> = x.iter().zip(segments.iter()).map(|(&v, &s)| (v - max[s]).exp()).collect();
        let mut denom = vec![0.0; n_segments];
        for (&v, &s) in e.iter().zip(segments.iter()) {
            denom[s] += v;
        }
        let out = e.iter().zip(segments.iter()).map(|(&v, &s)| v / denom[s]).collect();
        let rg = self.rg(logits);
        Ok(self.push(Matrix::column(out), Op::SegmentSoftmax(logits, segments), rg))
    }

    /// `out[s] = Σ_{i: segments[i] = s} weights[i] · values[i]`. Empty segments give zero rows.
    pub fn segment_weighted_sum(
        &mut self,
        values: Var,
        weights: Var,
        segments: impl Into<Arc<[usize]>>,
        n_segments: usize,
    ) -> Result<Var> {
        let segments = segments.into();
        let (n, d) = self.shape(values);
        let sw = self.shape(weights);
        if sw != (n, 1) {
            return Err(Error::Shape {
                op: "segment_weighted_sum",
                lhs: (n, d),
                rhs: sw,
            });
        }
        check_segments("segment_weighted_sum", &segments, n, n_segments)?;
        let mut out = Matrix::zeros(n_segments, d);
        let (v, w) = (self.value(values), self.value(weights));
        for (i, &s) in segments.iter().enumerate() {
            let wi = w[(i, 0)];
            for (o, x) in out.row_mut(s).iter_mut().zip(v.row(i)) {
                *o += wi * x;
            }
        }
        let rg = self.rg(values) || self.rg(weights);
        Ok(self.push(
            out,
            Op::SegmentWeightedSum {
                values,
                weights,
                segments,
            },
            rg,
        ))
    }

    /// `out[s] = ln Σ_{i in s} exp(x[i])` for an `n×1` column.
    pub fn segment_logsumexp(&mut self, x: Var, segments: impl Into<Arc<[usize]>>, n_segments: usize) -> Result<Var> {
        let segments = segments.into();
        let (n, c) = self.shape(x);
        if c != 1 {
            return Err(Error::Shape {
                op: "segment_logsumexp",
                lhs: (n, c),
                rhs: (n, 1),
            });
        }
        check_segments("segment_logsumexp", &segments, n, n_segments)?;
        require_nonempty_segments("segment_logsumexp", &segments, n_segments)?;
        let xs = self.value(x).as_slice();
        let mut max = vec![f64::NEG_INFINITY; n_segments];
        for (&v, &s) in xs.iter().zip(segments.iter()) {
            max[s] = max[s].max(v);
        }
        let mut acc = vec![0.0; n_segments];
        for (&v, &s) in xs.iter().zip(segments.iter()) {
            acc[s] += (v - max[s]).exp();
        }
        let out = acc.iter().zip(&max).map(|(a, m)| m + a.ln()).collect();
        let rg = self.rg(x);
        Ok(self.push(Matrix::column(out), Op::SegmentLogSumExp(x, segments), rg))
    }

    /// Row sums: `m×n → m×1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let value = Matrix::column((0..src.rows()).map(|r| src.row(r).iter().sum()).collect());
        let rg = self.rg(a);
        self.push(value, Op::SumCols(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let value = Matrix::scalar(src.sum() / src.len() as f64);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    /// Smallest distance from a rectifier kink over every ReLU and LeakyReLU
    /// input on the tape; infinite when there are none. Finite differences
    /// are only meaningful when this exceeds the probe step.
    pub fn kink_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) | Op::LeakyRelu(a, _) => Some(a),
                _ => None,
            })
            .flat_map(|a| self.value(a).as_slice().iter().map(|x| x.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Reverse sweep from a `1×1` loss. Gradients are accumulated additively
    /// over every use of a value.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                lhs: shape,
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let y = &node.value;
        let elementwise = |x: &Matrix, f: &dyn Fn(f64, f64, f64) -> f64| {
            let data = x
                .as_slice()
                .iter()
                .zip(y.as_slice())
                .zip(g.as_slice())
                .map(|((&xi, &yi), &gi)| f(xi, yi, gi))
                .collect();
            Matrix::from_vec(x.rows(), x.cols(), data).expect("same shape")
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, gemm(g, false, self.value(*b), true));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, gemm(self.value(*a), true, g, false));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    self.accumulate(grads, *a, elementwise(vb, &|bi, _, gi| bi * gi));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, elementwise(va, &|ai, _, gi| ai * gi));
                }
            }
            Op::AddBias(a, bias) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*bias) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    self.accumulate(grads, *bias, gb);
                }
            }
            Op::ScaleRows(a, s) => {
                let (va, vs) = (self.value(*a), self.value(*s));
                if self.rg(*a) {
                    let mut ga = g.clone();
                    for r in 0..ga.rows() {
                        let k = vs[(r, 0)];
                        ga.row_mut(r).iter_mut().for_each(|x| *x *= k);
                    }
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*s) {
                    let gs = (0..g.rows())
                        .map(|r| g.row(r).iter().zip(va.row(r)).map(|(x, y)| x * y).sum())
                        .collect();
                    self.accumulate(grads, *s, Matrix::column(gs));
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|x| c * x)),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.shape(p);
                    if self.rg(p) {
                        let gp = Matrix::from_fn(rows, cols, |r, c| g[(r, offset + c)]);
                        self.accumulate(grads, p, gp);
                    }
                    offset += cols;
                }
            }
            Op::Relu(a) => {
                let ga = elementwise(self.value(*a), &|x, _, gi| if x >= 0.0 { gi } else { 0.0 });
                self.accumulate(grads, *a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let ga = elementwise(self.value(*a), &|x, _, gi| if x >= 0.0 { gi } else { slope * gi });
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = elementwise(self.value(*a), &|_, yi, gi| gi * yi * (1.0 - yi));
                self.accumulate(grads, *a, ga);
            }
            Op::Exp(a) => {
                let ga = elementwise(self.value(*a), &|_, yi, gi| gi * yi);
                self.accumulate(grads, *a, ga);
            }
            Op::Log(a) => {
                let ga = elementwise(self.value(*a), &|x, _, gi| gi / x);
                self.accumulate(grads, *a, ga);
            }
            Op::Softplus(a) => {
                let ga = elementwise(self.value(*a), &|x, _, gi| gi * stable_sigmoid(x));
                self.accumulate(grads, *a, ga);
            }
            Op::Recip(a) => {
                let ga = elementwise(self.value(*a), &|_, yi, gi| -gi * yi * yi);
                self.accumulate(grads, *a, ga);
            }
            Op::Dropout(a, mask) => {
                let data = g.as_slice().iter().zip(mask).map(|(x, m)| x * m).collect();
                let ga = Matrix::from_vec(g.rows(), g.cols(), data).expect("same shape");
                self.accumulate(grads, *a, ga);
            }
            Op::GatherRows(a, indices) => {
                let (rows, cols) = self.shape(*a);
                let mut ga = Matrix::zeros(rows, cols);
                for (i, &src) in indices.iter().enumerate() {
                    for (o, x) in ga.row_mut(src).iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SegmentSoftmax(a, segments) => {
                let n_seg = segments.iter().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n_seg];
                for (i, &s) in segments.iter().enumerate() {
                    dot[s] += g[(i, 0)] * y[(i, 0)];
                }
                let ga = (0..y.rows())
                    .map(|i| y[(i, 0)] * (g[(i, 0)] - dot[segments[i]]))
                    .collect();
                self.accumulate(grads, *a, Matrix::column(ga));
            }
            Op::SegmentWeightedSum {
                values,
                weights,
                segments,
            } => {
                let (v, w) = (self.value(*values), self.value(*weights));
                if self.rg(*values) {
                    let mut gv = Matrix::zeros(v.rows(), v.cols());
                    for (i, &s) in segments.iter().enumerate() {
                        let wi = w[(i, 0)];
                        for (o, x) in gv.row_mut(i).iter_mut().zip(g.row(s)) {
                            *o = wi * x;
                        }
                    }
                    self.accumulate(grads, *values, gv);
                }
                if self.rg(*weights) {
                    let gw = segments
                        .iter()
                        .enumerate()
                        .map(|(i, &s)| g.row(s).iter().zip(v.row(i)).map(|(a, b)| a * b).sum())
                        .collect();
                    self.accumulate(grads, *weights, Matrix::column(gw));
                }
            }
            Op::SegmentLogSumExp(a, segments) => {
                let x = self.value(*a);
                let ga = segments
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| g[(s, 0)] * (x[(i, 0)] - y[(s, 0)]).exp())
                    .collect();
                self.accumulate(grads, *a, Matrix::column(ga));
            }
            Op::SumCols(a) => {
                let (rows, cols) = self.shape(*a);
                self.accumulate(grads, *a, Matrix::from_fn(rows, cols, |r, _| g[(r, 0)]));
            }
            Op::Sum(a) => {
                let (rows, cols) = self.shape(*a);
                self.accumulate(grads, *a, Matrix::filled(rows, cols, g.item()));
            }
            Op::Mean(a) => {
                let (rows, cols) = self.shape(*a);
                let k = g.item() / (rows * cols) as f64;
                self.accumulate(grads, *a, Matrix::filled(rows, cols, k));
            }
        }
    }
}
