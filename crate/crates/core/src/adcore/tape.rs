//! Reverse-mode tape over [`Tensor`] values.
//!
//! Every primitive appends one node holding its forward value and whatever
//! it needs for the backward pass. Recording order is a topological order,
//! so `backward` walks the nodes once in reverse. Nodes that no parameter
//! flows into are marked constant and skipped.

use super::tensor::{gemm, Tensor};
use crate::error::{invalid, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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
    MatMulNt(Var, Var),
    AddRowBias(Var, Var),
    ConcatCols(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    RowSoftmax(Var),
    ReduceMax {
        x: Var,
        winners: Vec<usize>,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    BceWithLogits {
        x: Var,
        targets: Vec<f64>,
    },
    SoftmaxCe {
        x: Var,
        probs: Tensor,
        targets: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every node that needed one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like it when nothing flowed in.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn softmax_row(src: &[f64], dst: &mut [f64]) {
    let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = (s - max).exp();
        sum += *d;
    }
    for d in dst.iter_mut() {
        *d /= sum;
    }
}

fn accumulate(slot: &mut Option<Tensor>, shape: (usize, usize), f: impl FnOnce(&mut Tensor)) {
    let t = slot.get_or_insert_with(|| Tensor::zeros(shape.0, shape.1));
    f(t);
}

impl Tape {
    /// A tape that faults on non-finite values in debug builds.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            checked: cfg!(debug_assertions),
        }
    }

    pub fn with_checks(checked: bool) -> Self {
        Self {
            nodes: Vec::new(),
            checked,
        }
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

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Winner row per output element of a max reduction.
    pub fn winners(&self, v: Var) -> Option<&[usize]> {
        match &self.nodes[v.0].op {
            Op::ReduceMax { winners, .. } => Some(winners),
            _ => None,
        }
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if self.checked && !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::MatMulNt(a, b)
            | Op::AddRowBias(a, b)
            | Op::ConcatCols(a, b)
            | Op::Add(a, b)
            | Op::Mul(a, b) => self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad,
            Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::RowSoftmax(x)
            | Op::Scale(x, _)
            | Op::ReduceMax { x, .. }
            | Op::SelectRows { x, .. }
            | Op::BceWithLogits { x, .. }
            | Op::SoftmaxCe { x, .. } => self.nodes[x.0].needs_grad,
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: &Tensor) -> Var {
        self.nodes.push(Node {
            value: value.clone(),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(invalid(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = Tensor::zeros(m, n);
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            0.0,
            out.data_mut(),
        );
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        if k != k2 {
            return Err(invalid(format!("matmul_nt {m}x{k} by ({n}x{k2})^T")));
        }
        let mut out = Tensor::zeros(m, n);
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            true,
            0.0,
            out.data_mut(),
        );
        self.push(out, Op::MatMulNt(a, b), "matmul_nt")
    }

    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if self.shape(bias) != (1, c) {
            return Err(invalid(format!("bias {:?} for {r}x{c}", self.shape(bias))));
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for i in 0..r {
            for (o, bv) in out.row_mut(i).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRowBias(x, bias), "add_row_bias")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(invalid(format!("concat {ra} rows with {rb} rows")));
        }
        let mut out = Tensor::zeros(ra, ca + cb);
        for i in 0..ra {
            let row = out.row_mut(i);
            row[..ca].copy_from_slice(self.nodes[a.0].value.row(i));
            row[ca..].copy_from_slice(self.nodes[b.0].value.row(i));
        }
        self.push(out, Op::ConcatCols(a, b), "concat_cols")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x), "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x), "sigmoid")
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let mut out = Tensor::zeros(src.rows(), src.cols());
        for i in 0..src.rows() {
            softmax_row(src.row(i), out.row_mut(i));
        }
        self.push(out, Op::RowSoftmax(x), "row_softmax")
    }

    /// Output row `o` is the elementwise max over input rows `sets[o]`.
    /// Ties go to the lowest row index; the winning row of every output
    /// element is kept and receives the whole incoming gradient.
    pub fn reduce_max(&mut self, x: Var, sets: &[Vec<usize>]) -> Result<Var> {
        let src = self.value(x);
        let (r, c) = src.shape();
        let mut out = Tensor::zeros(sets.len(), c);
        let mut winners = vec![0usize; sets.len() * c];
        for (o, set) in sets.iter().enumerate() {
            let Some(&first) = set.iter().min() else {
                return Err(invalid(format!("max over an empty set (output row {o})")));
            };
            if let Some(&bad) = set.iter().find(|&&i| i >= r) {
                return Err(invalid(format!("row {bad} out of range for {r} rows")));
            }
            let dst = &mut winners[o * c..(o + 1) * c];
            dst.fill(first);
            let orow = out.row_mut(o);
            orow.copy_from_slice(src.row(first));
            for &i in set {
                let srow = src.row(i);
                for d in 0..c {
                    if srow[d] > orow[d] || (srow[d] == orow[d] && i < dst[d]) {
                        orow[d] = srow[d];
                        dst[d] = i;
                    }
                }
            }
        }
        self.push(out, Op::ReduceMax { x, winners }, "reduce_max")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(invalid(format!(
                "add {:?} + {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(invalid(format!(
                "mul {:?} * {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = self.value(a).clone();
        for (o, y) in out.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o *= y;
        }
        self.push(out, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v * s);
        self.push(out, Op::Scale(x, s), "scale")
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let src = self.value(x);
        let (r, c) = src.shape();
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(invalid(format!("row {bad} out of range for {r} rows")));
        }
        let mut out = Tensor::zeros(rows.len(), c);
        for (o, &i) in rows.iter().enumerate() {
            out.row_mut(o).copy_from_slice(src.row(i));
        }
        self.push(
            out,
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
            "select_rows",
        )
    }

    /// Mean binary cross-entropy of every logit against its target in `[0, 1]`.
    pub fn bce_with_logits(&mut self, x: Var, targets: &[f64]) -> Result<Var> {
        let src = self.value(x);
        if src.data().len() != targets.len() || targets.is_empty() {
            return Err(invalid(format!(
                "{} targets for {} logits",
                targets.len(),
                src.data().len()
            )));
        }
        let total: f64 = src
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &t)| softplus(z) - t * z)
            .sum();
        let out = Tensor::scalar(total / targets.len() as f64);
        self.push(
            out,
            Op::BceWithLogits {
                x,
                targets: targets.to_vec(),
            },
            "bce_with_logits",
        )
    }

    /// Mean over rows of the cross-entropy between `softmax(row)` and the
    /// one-hot target column.
    pub fn softmax_cross_entropy(&mut self, x: Var, targets: &[usize]) -> Result<Var> {
        let src = self.value(x);
        let (r, c) = src.shape();
        if targets.len() != r || r == 0 {
            return Err(invalid(format!("{} targets for {r} rows", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(invalid(format!(
                "target {bad} out of range for {c} classes"
            )));
        }
        let mut probs = Tensor::zeros(r, c);
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = src.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
            softmax_row(row, probs.row_mut(i));
        }
        let out = Tensor::scalar(total / r as f64);
        self.push(
            out,
            Op::SoftmaxCe {
                x,
                probs,
                targets: targets.to_vec(),
            },
            "softmax_cross_entropy",
        )
    }

    /// Backpropagates from the 1x1 node `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.shape(output) != (1, 1) {
            return Err(invalid("backward needs a scalar output"));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = g.cols();
                if self.needs(*a) {
                    let bv = self.value(*b).data();
                    accumulate(&mut grads[a.0], (m, k), |t| {
                        gemm(m, n, k, g.data(), false, bv, true, 1.0, t.data_mut())
                    });
                }
                if self.needs(*b) {
                    let av = self.value(*a).data();
                    accumulate(&mut grads[b.0], (k, n), |t| {
                        gemm(k, m, n, av, true, g.data(), false, 1.0, t.data_mut())
                    });
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = self.shape(*a);
                let n = g.cols();
                if self.needs(*a) {
                    let bv = self.value(*b).data();
                    accumulate(&mut grads[a.0], (m, k), |t| {
                        gemm(m, n, k, g.data(), false, bv, false, 1.0, t.data_mut())
                    });
                }
                if self.needs(*b) {
                    let av = self.value(*a).data();
                    accumulate(&mut grads[b.0], (n, k), |t| {
                        gemm(n, m, k, g.data(), true, av, false, 1.0, t.data_mut())
                    });
                }
            }
            Op::AddRowBias(x, bias) => {
                if self.needs(*x) {
                    accumulate(&mut grads[x.0], g.shape(), |t| t.add_assign(g));
                }
                if self.needs(*bias) {
                    accumulate(&mut grads[bias.0], (1, g.cols()), |t| {
                        for i in 0..g.rows() {
                            for (o, v) in t.data_mut().iter_mut().zip(g.row(i)) {
                                *o += v;
                            }
                        }
                    });
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(*a).1;
                let cb = self.shape(*b).1;
                if self.needs(*a) {
                    accumulate(&mut grads[a.0], (g.rows(), ca), |t| {
                        for i in 0..g.rows() {
                            for (o, v) in t.row_mut(i).iter_mut().zip(&g.row(i)[..ca]) {
                                *o += v;
                            }
                        }
                    });
                }
                if self.needs(*b) {
                    accumulate(&mut grads[b.0], (g.rows(), cb), |t| {
                        for i in 0..g.rows() {
                            for (o, v) in t.row_mut(i).iter_mut().zip(&g.row(i)[ca..]) {
                                *o += v;
                            }
                        }
                    });
                }
            }
            Op::Relu(x) => {
                let y = &node.value;
                accumulate(&mut grads[x.0], g.shape(), |t| {
                    for ((o, gv), yv) in t.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        if *yv > 0.0 {
                            *o += gv;
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                accumulate(&mut grads[x.0], g.shape(), |t| {
                    for ((o, gv), yv) in t.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::RowSoftmax(x) => {
                let y = &node.value;
                accumulate(&mut grads[x.0], g.shape(), |t| {
                    for i in 0..g.rows() {
                        let (gr, yr) = (g.row(i), y.row(i));
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((o, gv), yv) in t.row_mut(i).iter_mut().zip(gr).zip(yr) {
                            *o += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::ReduceMax { x, winners } => {
                let shape = self.shape(*x);
                let c = g.cols();
                accumulate(&mut grads[x.0], shape, |t| {
                    for o in 0..g.rows() {
                        for d in 0..c {
                            let w = winners[o * c + d];
                            t.data_mut()[w * c + d] += g.get(o, d);
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.needs(*v) {
                        accumulate(&mut grads[v.0], g.shape(), |t| t.add_assign(g));
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(a, b), (b, a)] {
                    if self.needs(*v) {
                        let ov = self.value(*other);
                        accumulate(&mut grads[v.0], g.shape(), |t| {
                            for ((o, gv), y) in t.data_mut().iter_mut().zip(g.data()).zip(ov.data())
                            {
                                *o += gv * y;
                            }
                        });
                    }
                }
            }
            Op::Scale(x, s) => {
                accumulate(&mut grads[x.0], g.shape(), |t| {
                    for (o, gv) in t.data_mut().iter_mut().zip(g.data()) {
                        *o += gv * s;
                    }
                });
            }
            Op::SelectRows { x, rows } => {
                let shape = self.shape(*x);
                accumulate(&mut grads[x.0], shape, |t| {
                    for (o, &i) in rows.iter().enumerate() {
                        for (d, gv) in t.row_mut(i).iter_mut().zip(g.row(o)) {
                            *d += gv;
                        }
                    }
                });
            }
            Op::BceWithLogits { x, targets } => {
                let src = self.value(*x);
                let scale = g.item() / targets.len() as f64;
                accumulate(&mut grads[x.0], src.shape(), |t| {
                    for ((o, &z), &y) in t.data_mut().iter_mut().zip(src.data()).zip(targets) {
                        *o += scale * (sigmoid(z) - y);
                    }
                });
            }
            Op::SoftmaxCe { x, probs, targets } => {
                let scale = g.item() / targets.len() as f64;
                accumulate(&mut grads[x.0], probs.shape(), |t| {
                    for (i, &target) in targets.iter().enumerate() {
                        for (j, (o, p)) in t.row_mut(i).iter_mut().zip(probs.row(i)).enumerate() {
                            let onehot = if j == target { 1.0 } else { 0.0 };
                            *o += scale * (p - onehot);
                        }
                    }
                });
            }
        }
    }
}
