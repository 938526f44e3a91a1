use std::sync::Arc;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sqrt(Var),
    Pow(Var, f64),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Transpose(Var),
    RowSlice { src: Var, start: usize },
    ConcatRows(Vec<Var>),
    Sum(Var),
    SumRows(Var),
    MeanAxis0(Var),
    VarAxis0(Var),
    L2RowNormalize { src: Var, norms: Vec<f64> },
    LogSoftmaxRows(Var),
    SegmentMean { src: Var, ids: Arc<[usize]>, counts: Vec<usize> },
    AggregateNeighbors { src: Var, edges: Arc<[(usize, usize)]> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of primitive applications.
///
/// Nodes are appended in evaluation order, so the node list is always a
/// topological order of the computation. A tape belongs to one worker.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Broadcast relation of a right-hand operand against a left-hand one.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Bcast {
    Same,
    LhsScalar,
    RhsScalar,
    RhsRow,
}

fn broadcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Bcast> {
    if a.shape() == b.shape() {
        Ok(Bcast::Same)
    } else if b.is_scalar() {
        Ok(Bcast::RhsScalar)
    } else if a.is_scalar() {
        Ok(Bcast::LhsScalar)
    } else if b.rows() == 1 && b.cols() == a.cols() {
        Ok(Bcast::RhsRow)
    } else {
        Err(Error::shape(op, a.shape(), b.shape()))
    }
}

fn zip_broadcast(a: &Tensor, b: &Tensor, mode: Bcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
    match mode {
        Bcast::Same => Tensor::from_parts_unchecked(
            a.shape().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
        ),
        Bcast::RhsScalar => {
            let y = b.data()[0];
            a.map(|x| f(x, y))
        }
        Bcast::LhsScalar => {
            let x = a.data()[0];
            b.map(|y| f(x, y))
        }
        Bcast::RhsRow => {
            let cols = a.cols();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, b.data()[i % cols]))
                .collect();
            Tensor::from_parts_unchecked(a.shape().to_vec(), data)
        }
    }
}

/// Sums a gradient down to the shape of an operand it was broadcast from.
fn reduce_to(grad: Tensor, target: &Tensor) -> Tensor {
    if grad.shape() == target.shape() {
        grad
    } else if target.is_scalar() {
        Tensor::scalar(grad.data().iter().sum())
    } else {
        let cols = grad.cols();
        let mut out = vec![0.0; cols];
        for (i, g) in grad.data().iter().enumerate() {
            out[i % cols] += g;
        }
        Tensor::from_parts_unchecked(vec![1, cols], out)
    }
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<()> {
    if t.is_matrix() {
        Ok(())
    } else {
        Err(Error::shape(op, t.shape(), &[]))
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn unary(&mut self, src: Var, value: Tensor, op: Op) -> Var {
        let needs = self.needs(src);
        self.push(value, op, needs)
    }

    /// Matrix product of an `n × k` and a `k × m` matrix.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), needs))
    }

    /// Elementwise sum; `b` may be a scalar or a row vector.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mode = broadcast("add", self.value(a), self.value(b))?;
        let value = zip_broadcast(self.value(a), self.value(b), mode, |x, y| x + y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let mode = broadcast("sub", self.value(a), self.value(b))?;
        let value = zip_broadcast(self.value(a), self.value(b), mode, |x, y| x - y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a, b), needs))
    }

    /// Elementwise (Hadamard) product with the same broadcasting as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let mode = broadcast("mul", self.value(a), self.value(b))?;
        let value = zip_broadcast(self.value(a), self.value(b), mode, |x, y| x * y);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        self.unary(a, value, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Var {
        let value = self.value(a).map(|x| x + offset);
        self.unary(a, value, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.unary(a, value, Op::Relu(a))
    }

    /// Square root of strictly positive inputs. Zero is rejected because the
    /// derivative is unbounded there; callers add an epsilon first.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if let Some(bad) = x.data().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Domain {
                op: "sqrt",
                detail: format!("input {bad} is not strictly positive"),
            });
        }
        let value = x.map(f64::sqrt);
        Ok(self.unary(a, value, Op::Sqrt(a)))
    }

    /// `x^exponent`. Negative bases need an integral exponent.
    ///
    /// At a zero base with `exponent < 1` the derivative is taken as 0.
    pub fn pow(&mut self, a: Var, exponent: f64) -> Result<Var> {
        let x = self.value(a);
        if exponent.fract() != 0.0 {
            if let Some(bad) = x.data().iter().find(|&&v| v < 0.0) {
                return Err(Error::Domain {
                    op: "pow",
                    detail: format!("negative base {bad} with fractional exponent {exponent}"),
                });
            }
        }
        let value = x.map(|v| v.powf(exponent));
        Ok(self.unary(a, value, Op::Pow(a, exponent)))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.unary(a, value, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if let Some(bad) = x.data().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("input {bad} is not strictly positive"),
            });
        }
        let value = x.map(f64::ln);
        Ok(self.unary(a, value, Op::Log(a)))
    }

    /// Absolute value; the subgradient at zero is 0.
    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::abs);
        self.unary(a, value, Op::Abs(a))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        require_matrix("transpose", self.value(a))?;
        let value = self.value(a).transpose();
        Ok(self.unary(a, value, Op::Transpose(a)))
    }

    /// Rows `start..end` of a matrix.
    pub fn row_slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        require_matrix("row_slice", x)?;
        if start > end || end > x.rows() {
            return Err(Error::invalid(format!(
                "row range {start}..{end} outside 0..{}",
                x.rows()
            )));
        }
        let cols = x.cols();
        let data = x.data()[start * cols..end * cols].to_vec();
        let value = Tensor::from_parts_unchecked(vec![end - start, cols], data);
        Ok(self.unary(a, value, Op::RowSlice { src: a, start }))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat_rows needs at least one input"))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let x = self.value(p);
            require_matrix("concat_rows", x)?;
            if x.cols() != cols {
                return Err(Error::shape("concat_rows", self.value(*first).shape(), x.shape()));
            }
            rows += x.rows();
            data.extend_from_slice(x.data());
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        let value = Tensor::from_parts_unchecked(vec![rows, cols], data);
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), needs))
    }

    /// Sum of every element, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.unary(a, value, Op::Sum(a))
    }

    /// Mean of every element, as a scalar.
    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Per-row sums of an `n × d` matrix, as `n × 1`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        require_matrix("sum_rows", x)?;
        let data = (0..x.rows()).map(|i| x.row(i).iter().sum()).collect();
        let value = Tensor::from_parts_unchecked(vec![x.rows(), 1], data);
        Ok(self.unary(a, value, Op::SumRows(a)))
    }

    /// Column means of an `n × d` matrix, as a `1 × d` row vector.
    pub fn mean_axis0(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        require_matrix("mean_axis0", x)?;
        if x.rows() == 0 {
            return Err(Error::invalid("mean_axis0 of an empty matrix"));
        }
        let value = column_means(x);
        Ok(self.unary(a, value, Op::MeanAxis0(a)))
    }

    /// Unbiased column variances (divisor `n − 1`), as a `1 × d` row vector.
    pub fn var_axis0(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        require_matrix("var_axis0", x)?;
        let n = x.rows();
        if n < 2 {
            return Err(Error::DegenerateBatch(format!(
                "unbiased variance needs at least 2 rows, got {n}"
            )));
        }
        let means = column_means(x);
        let cols = x.cols();
        let mut out = vec![0.0; cols];
        for i in 0..n {
            for (j, (o, &v)) in out.iter_mut().zip(x.row(i)).enumerate() {
                let c = v - means.data()[j];
                *o += c * c;
            }
        }
        out.iter_mut().for_each(|o| *o /= (n - 1) as f64);
        let value = Tensor::from_parts_unchecked(vec![1, cols], out);
        Ok(self.unary(a, value, Op::VarAxis0(a)))
    }

    /// Scales every row to unit Euclidean norm. Zero rows are rejected.
    pub fn l2_row_normalize(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        require_matrix("l2_row_normalize", x)?;
        let mut out = x.clone();
        let mut norms = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let norm = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Domain {
                    op: "l2_row_normalize",
                    detail: format!("row {i} has zero norm"),
                });
            }
            out.row_mut(i).iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        Ok(self.unary(a, out, Op::L2RowNormalize { src: a, norms }))
    }

    /// Row-wise `x − logsumexp(x)`.
    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        require_matrix("log_softmax_rows", x)?;
        let mut out = x.clone();
        for i in 0..x.rows() {
            let row = out.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        Ok(self.unary(a, out, Op::LogSoftmaxRows(a)))
    }

    /// Mean of the rows sharing each segment id. Every segment must be nonempty.
    pub fn segment_mean(
        &mut self,
        a: Var,
        segment_ids: Arc<[usize]>,
        num_segments: usize,
    ) -> Result<Var> {
        let x = self.value(a);
        require_matrix("segment_mean", x)?;
        if segment_ids.len() != x.rows() {
            return Err(Error::invalid(format!(
                "{} segment ids for {} rows",
                segment_ids.len(),
                x.rows()
            )));
        }
        let mut counts = vec![0usize; num_segments];
        for &s in segment_ids.iter() {
            if s >= num_segments {
                return Err(Error::invalid(format!(
                    "segment id {s} out of range 0..{num_segments}"
                )));
            }
            counts[s] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("segment {empty} is empty")));
        }
        let cols = x.cols();
        let mut out = Tensor::zeros(num_segments, cols);
        for (i, &s) in segment_ids.iter().enumerate() {
            let src = x.row(i);
            for (o, v) in out.row_mut(s).iter_mut().zip(src) {
                *o += v;
            }
        }
        for (s, &c) in counts.iter().enumerate() {
            out.row_mut(s).iter_mut().for_each(|v| *v /= c as f64);
        }
        let op = Op::SegmentMean {
            src: a,
            ids: segment_ids,
            counts,
        };
        Ok(self.unary(a, out, op))
    }

    /// Row `v` of the output is the sum of `features[u]` over directed edges `u → v`.
    pub fn aggregate_neighbors(&mut self, a: Var, edges: Arc<[(usize, usize)]>) -> Result<Var> {
        let x = self.value(a);
        require_matrix("aggregate_neighbors", x)?;
        let n = x.rows();
        if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= n || v >= n) {
            return Err(Error::invalid(format!(
                "edge ({u}, {v}) out of range for {n} nodes"
            )));
        }
        let mut out = Tensor::zeros_like(x);
        for &(u, v) in edges.iter() {
            let (src, dst) = (x.row(u), out.row_mut(v));
            for (o, s) in dst.iter_mut().zip(src) {
                *o += s;
            }
        }
        Ok(self.unary(a, out, Op::AggregateNeighbors { src: a, edges }))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::from_parts_unchecked(
            loss_value.shape().to_vec(),
            vec![1.0],
        ));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.matmul_t(val(*b)));
                }
                if self.needs(*b) {
                    acc(*b, val(*a).t_matmul(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, reduce_to(g.clone(), val(*a)));
                acc(*b, reduce_to(g.clone(), val(*b)));
            }
            Op::Sub(a, b) => {
                acc(*a, reduce_to(g.clone(), val(*a)));
                acc(*b, reduce_to(g.map(|x| -x), val(*b)));
            }
            Op::Mul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                if self.needs(*a) {
                    let mode = broadcast("mul", g, y).expect("shapes checked in forward");
                    acc(*a, reduce_to(zip_broadcast(g, y, mode, |p, q| p * q), x));
                }
                if self.needs(*b) {
                    let mode = broadcast("mul", g, x).expect("shapes checked in forward");
                    acc(*b, reduce_to(zip_broadcast(g, x, mode, |p, q| p * q), y));
                }
            }
            Op::Scale(a, factor) => acc(*a, g.map(|x| x * factor)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Relu(a) => acc(*a, elementwise(g, val(*a), |d, x| if x > 0.0 { d } else { 0.0 })),
            Op::Sqrt(a) => acc(*a, elementwise(g, &node.value, |d, y| d / (2.0 * y))),
            Op::Pow(a, e) => {
                let e = *e;
                acc(
                    *a,
                    elementwise(g, val(*a), |d, x| {
                        if x == 0.0 && e < 1.0 {
                            0.0
                        } else {
                            d * e * x.powf(e - 1.0)
                        }
                    }),
                )
            }
            Op::Exp(a) => acc(*a, elementwise(g, &node.value, |d, y| d * y)),
            Op::Log(a) => acc(*a, elementwise(g, val(*a), |d, x| d / x)),
            Op::Abs(a) => acc(
                *a,
                elementwise(g, val(*a), |d, x| {
                    if x > 0.0 {
                        d
                    } else if x < 0.0 {
                        -d
                    } else {
                        0.0
                    }
                }),
            ),
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::RowSlice { src, start } => {
                let x = val(*src);
                let mut out = Tensor::zeros_like(x);
                let cols = x.cols();
                out.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                acc(*src, out);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let x = val(p);
                    let chunk = g.data()[offset..offset + x.len()].to_vec();
                    offset += x.len();
                    acc(p, Tensor::from_parts_unchecked(x.shape().to_vec(), chunk));
                }
            }
            Op::Sum(a) => {
                let d = g.data()[0];
                acc(*a, val(*a).map(|_| d));
            }
            Op::SumRows(a) => {
                let x = val(*a);
                let cols = x.cols();
                let data = (0..x.len()).map(|i| g.data()[i / cols]).collect();
                acc(*a, Tensor::from_parts_unchecked(x.shape().to_vec(), data));
            }
            Op::MeanAxis0(a) => {
                let x = val(*a);
                let (n, cols) = (x.rows() as f64, x.cols());
                let data = (0..x.len()).map(|i| g.data()[i % cols] / n).collect();
                acc(*a, Tensor::from_parts_unchecked(x.shape().to_vec(), data));
            }
            Op::VarAxis0(a) => {
                let x = val(*a);
                let means = column_means(x);
                let (n, cols) = (x.rows(), x.cols());
                let denom = (n - 1) as f64;
                let data = x
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let j = i % cols;
                        g.data()[j] * 2.0 * (v - means.data()[j]) / denom
                    })
                    .collect();
                acc(*a, Tensor::from_parts_unchecked(x.shape().to_vec(), data));
            }
            Op::L2RowNormalize { src, norms } => {
                let y = &node.value;
                let mut out = Tensor::zeros_like(y);
                for (i, &norm) in norms.iter().enumerate() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &gv) in out.row_mut(i).iter_mut().zip(yr).zip(gr) {
                        *o = (gv - yv * dot) / norm;
                    }
                }
                acc(*src, out);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let mut out = Tensor::zeros_like(y);
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let total: f64 = gr.iter().sum();
                    for ((o, &yv), &gv) in out.row_mut(i).iter_mut().zip(yr).zip(gr) {
                        *o = gv - yv.exp() * total;
                    }
                }
                acc(*a, out);
            }
            Op::SegmentMean { src, ids, counts } => {
                let x = val(*src);
                let mut out = Tensor::zeros_like(x);
                for (i, &s) in ids.iter().enumerate() {
                    let c = counts[s] as f64;
                    for (o, &d) in out.row_mut(i).iter_mut().zip(g.row(s)) {
                        *o = d / c;
                    }
                }
                acc(*src, out);
            }
            Op::AggregateNeighbors { src, edges } => {
                let mut out = Tensor::zeros_like(val(*src));
                for &(u, v) in edges.iter() {
                    let grow = g.row(v);
                    for (o, d) in out.row_mut(u).iter_mut().zip(grow) {
                        *o += d;
                    }
                }
                acc(*src, out);
            }
        }
    }
}

fn elementwise(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_parts_unchecked(
        x.shape().to_vec(),
        g.data().iter().zip(x.data()).map(|(&d, &v)| f(d, v)).collect(),
    )
}

fn column_means(x: &Tensor) -> Tensor {
    let (n, cols) = (x.rows(), x.cols());
    let mut out = vec![0.0; cols];
    for i in 0..n {
        for (o, v) in out.iter_mut().zip(x.row(i)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= n as f64);
    Tensor::from_parts_unchecked(vec![1, cols], out)
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` if `v` did not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `v`, zero-filled when `v` was untouched.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros_like(tape.value(v)))
    }
}
