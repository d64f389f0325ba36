use std::sync::Arc;

use rand::Rng;

use super::{gemm, order_invariant_sum, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Const,
    MatMul(Var, Var),
    CanonicalMatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Hadamard(Var, Var),
    Div(Var, Var),
    Sigmoid(Var),
    Relu(Var),
    Dropout(Var, Vec<f64>),
    MaskRows(Var, Arc<[bool]>),
    Concat(Vec<Var>, usize),
    Slice { src: Var, axis: usize, start: usize },
    Gather(Var, Arc<[usize]>),
    SegmentSum(Var, Arc<[usize]>),
    SmoothL1 { pred: Var, target: Tensor, delta: f64 },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Ordered record of tensor operations.
///
/// Nodes are appended in evaluation order, which is a valid topological
/// order for the reverse sweep in [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every tracked node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `var`; zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

fn check_index(op: &'static str, index: &[usize], len: usize) -> Result<()> {
    match index.iter().find(|&&i| i >= len) {
        Some(&i) => Err(Error::Index { op, index: i, len }),
        None => Ok(()),
    }
}

fn gather_rows(src: &Tensor, index: &[usize]) -> Tensor {
    let cols = src.cols();
    let mut data = Vec::with_capacity(index.len() * cols);
    for &i in index {
        data.extend_from_slice(src.row(i));
    }
    Tensor {
        rows: index.len(),
        cols,
        data,
    }
}

fn segment_sum_rows(src: &Tensor, index: &[usize], segments: usize) -> Tensor {
    let cols = src.cols();
    // CSR of segment -> contributing rows
    let mut counts = vec![0usize; segments + 1];
    for &i in index {
        counts[i + 1] += 1;
    }
    for s in 0..segments {
        counts[s + 1] += counts[s];
    }
    let mut fill = counts.clone();
    let mut members = vec![0usize; index.len()];
    for (row, &seg) in index.iter().enumerate() {
        members[fill[seg]] = row;
        fill[seg] += 1;
    }

    let mut out = Tensor::zeros(segments, cols);
    let mut buf = Vec::new();
    for seg in 0..segments {
        let rows = &members[counts[seg]..counts[seg + 1]];
        let dst = &mut out.data[seg * cols..(seg + 1) * cols];
        match rows.len() {
            0 => {}
            1 => dst.copy_from_slice(src.row(rows[0])),
            _ => {
                for (c, d) in dst.iter_mut().enumerate() {
                    buf.clear();
                    buf.extend(rows.iter().map(|&r| src.data[r * cols + c]));
                    *d = order_invariant_sum(&mut buf);
                }
            }
        }
    }
    out
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().map(|&x| f(x)).collect(),
    }
}

fn matmul_values(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.shape();
    let n = b.cols();
    let mut out = Tensor::zeros(m, n);
    gemm(
        m,
        k,
        n,
        1.0,
        &a.data,
        (k as isize, 1),
        &b.data,
        (n as isize, 1),
        0.0,
        &mut out.data,
    );
    out
}

fn canonical_matmul_values(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.shape();
    let n = b.cols();
    let mut out = Tensor::zeros(m, n);
    let mut buf = Vec::with_capacity(k);
    for i in 0..m {
        let row = a.row(i);
        for j in 0..n {
            buf.clear();
            buf.extend(row.iter().enumerate().map(|(p, &x)| x * b.data[p * n + j]));
            out.data[i * n + j] = order_invariant_sum(&mut buf);
        }
    }
    out
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn tracked(&self, var: Var) -> bool {
        self.nodes[var.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("output of {name}")));
        }
        self.nodes.push(Node { value, op, tracked });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a differentiable input (a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Const,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av, bv));
        }
        let out = matmul_values(av, bv);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(out, Op::MatMul(a, b), tracked, "matmul")
    }

    /// Matrix product whose every output entry is an order-invariant sum of
    /// its products. Permuting the shared inner dimension of `a` and `b`
    /// together leaves the result bitwise unchanged.
    pub fn matmul_canonical(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul_canonical", av, bv));
        }
        let out = canonical_matmul_values(av, bv);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(out, Op::CanonicalMatMul(a, b), tracked, "matmul_canonical")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("add", av, bv));
        }
        let out = zip_map(av, bv, |x, y| x + y);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(out, Op::Add(a, b), tracked, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("sub", av, bv));
        }
        let out = zip_map(av, bv, |x, y| x - y);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(out, Op::Sub(a, b), tracked, "sub")
    }

    /// Adds a `1 × c` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(shape_err("add_row", av, rv));
        }
        let cols = av.cols();
        let mut out = av.clone();
        for chunk in out.data.chunks_exact_mut(cols.max(1)) {
            for (x, b) in chunk.iter_mut().zip(&rv.data) {
                *x += b;
            }
        }
        let tracked = self.tracked(a) || self.tracked(row);
        self.push(out, Op::AddRow(a, row), tracked, "add_row")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = map(self.value(a), |x| x * factor);
        let tracked = self.tracked(a);
        self.push(out, Op::Scale(a, factor), tracked, "scale")
    }

    pub fn add_scalar(&mut self, a: Var, value: f64) -> Result<Var> {
        let out = map(self.value(a), |x| x + value);
        let tracked = self.tracked(a);
        self.push(out, Op::AddScalar(a), tracked, "add_scalar")
    }

    /// Elementwise product.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("hadamard", av, bv));
        }
        let out = zip_map(av, bv, |x, y| x * y);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(out, Op::Hadamard(a, b), tracked, "hadamard")
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("div", av, bv));
        }
        let out = zip_map(av, bv, |x, y| x / y);
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(out, Op::Div(a, b), tracked, "div")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = map(self.value(a), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        let tracked = self.tracked(a);
        self.push(out, Op::Sigmoid(a), tracked, "sigmoid")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = map(self.value(a), |x| if x > 0.0 { x } else { 0.0 });
        let tracked = self.tracked(a);
        self.push(out, Op::Relu(a), tracked, "relu")
    }

    /// Inverted dropout. Identity (no new node) when `train` is false or
    /// `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        p: f64,
        rng: &mut R,
        train: bool,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Contract(format!("dropout probability {p} not in [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let av = self.value(a);
        let mask: Vec<f64> = (0..av.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let out = Tensor {
            rows: av.rows,
            cols: av.cols,
            data: av.data.iter().zip(&mask).map(|(x, m)| x * m).collect(),
        };
        let tracked = self.tracked(a);
        self.push(out, Op::Dropout(a, mask), tracked, "dropout")
    }

    /// Zeroes every row whose mask entry is false. Rows that are kept are
    /// copied unchanged, dropped rows become exact `+0.0`.
    pub fn mask_rows(&mut self, a: Var, mask: Arc<[bool]>) -> Result<Var> {
        let av = self.value(a);
        if mask.len() != av.rows() {
            return Err(Error::Shape {
                op: "mask_rows",
                lhs: av.shape(),
                rhs: (mask.len(), 1),
            });
        }
        let mut out = av.clone();
        let cols = av.cols();
        for (r, &keep) in mask.iter().enumerate() {
            if !keep {
                out.data[r * cols..(r + 1) * cols].fill(0.0);
            }
        }
        let tracked = self.tracked(a);
        self.push(out, Op::MaskRows(a, mask), tracked, "mask_rows")
    }

    /// Concatenates along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let base = self.value(*first).clone();
        let out = match axis {
            0 => {
                let mut data = base.data.clone();
                let mut rows = base.rows;
                for &p in &parts[1..] {
                    let pv = self.value(p);
                    if pv.cols() != base.cols() {
                        return Err(shape_err("concat", &base, pv));
                    }
                    data.extend_from_slice(&pv.data);
                    rows += pv.rows;
                }
                Tensor {
                    rows,
                    cols: base.cols,
                    data,
                }
            }
            1 => {
                let mut cols = 0;
                for &p in parts {
                    let pv = self.value(p);
                    if pv.rows() != base.rows() {
                        return Err(shape_err("concat", &base, pv));
                    }
                    cols += pv.cols;
                }
                let mut data = Vec::with_capacity(base.rows * cols);
                for r in 0..base.rows {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row(r));
                    }
                }
                Tensor {
                    rows: base.rows,
                    cols,
                    data,
                }
            }
            _ => return Err(Error::Contract(format!("concat axis {axis} not in {{0, 1}}"))),
        };
        let tracked = parts.iter().any(|&p| self.tracked(p));
        self.push(out, Op::Concat(parts.to_vec(), axis), tracked, "concat")
    }

    /// Takes `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&mut self, src: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let sv = self.value(src);
        let extent = match axis {
            0 => sv.rows(),
            1 => sv.cols(),
            _ => return Err(Error::Contract(format!("slice axis {axis} not in {{0, 1}}"))),
        };
        if start + len > extent {
            return Err(Error::Index {
                op: "slice",
                index: start + len,
                len: extent,
            });
        }
        let out = if axis == 0 {
            Tensor {
                rows: len,
                cols: sv.cols,
                data: sv.data[start * sv.cols..(start + len) * sv.cols].to_vec(),
            }
        } else {
            let mut data = Vec::with_capacity(sv.rows * len);
            for r in 0..sv.rows {
                data.extend_from_slice(&sv.row(r)[start..start + len]);
            }
            Tensor {
                rows: sv.rows,
                cols: len,
                data,
            }
        };
        let tracked = self.tracked(src);
        self.push(out, Op::Slice { src, axis, start }, tracked, "slice")
    }

    /// Row `e` of the output is row `index[e]` of `src`.
    pub fn gather(&mut self, src: Var, index: Arc<[usize]>) -> Result<Var> {
        let sv = self.value(src);
        check_index("gather", &index, sv.rows())?;
        let out = gather_rows(sv, &index);
        let tracked = self.tracked(src);
        self.push(out, Op::Gather(src, index), tracked, "gather")
    }

    /// Row `n` of the output is the sum of the rows `e` of `src` with
    /// `index[e] == n`; segments without members are zero rows. Sums are
    /// order-invariant, so permuting `src` rows with `index` is exact.
    pub fn segment_sum(&mut self, src: Var, index: Arc<[usize]>, segments: usize) -> Result<Var> {
        let sv = self.value(src);
        if index.len() != sv.rows() {
            return Err(Error::Shape {
                op: "segment_sum",
                lhs: sv.shape(),
                rhs: (index.len(), 1),
            });
        }
        check_index("segment_sum", &index, segments)?;
        let out = segment_sum_rows(sv, &index, segments);
        let tracked = self.tracked(src);
        self.push(out, Op::SegmentSum(src, index), tracked, "segment_sum")
    }

    /// Mean Smooth-L1 (Huber with slope one) loss against a fixed target.
    pub fn smooth_l1(&mut self, pred: Var, target: &Tensor, delta: f64) -> Result<Var> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() {
            return Err(shape_err("smooth_l1", pv, target));
        }
        if delta <= 0.0 {
            return Err(Error::Contract(format!("smooth_l1 delta {delta} must be > 0")));
        }
        let n = pv.len().max(1) as f64;
        let total: f64 = pv
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| {
                let d = (p - t).abs();
                if d < delta {
                    0.5 * d * d / delta
                } else {
                    d - 0.5 * delta
                }
            })
            .sum();
        let tracked = self.tracked(pred);
        self.push(
            Tensor::scalar(total / n),
            Op::SmoothL1 {
                pred,
                target: target.clone(),
                delta,
            },
            tracked,
            "smooth_l1",
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data.iter().sum();
        let tracked = self.tracked(a);
        self.push(Tensor::scalar(s), Op::Sum(a), tracked, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let s = av.data.iter().sum::<f64>() / av.len().max(1) as f64;
        let tracked = self.tracked(a);
        self.push(Tensor::scalar(s), Op::Mean(a), tracked, "mean")
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        // only tracked nodes report gradients
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.tracked {
                *g = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor>], var: Var) -> Option<&'g mut Tensor> {
        if !self.tracked(var) {
            return None;
        }
        let (r, c) = self.value(var).shape();
        Some(grads[var.0].get_or_insert_with(|| Tensor::zeros(r, c)))
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, contribution: impl FnOnce() -> Tensor) {
        if let Some(slot) = self.slot(grads, var) {
            slot.add_assign(&contribution());
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf | Op::Const => {}
            Op::MatMul(a, b) | Op::CanonicalMatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.shape();
                let n = bv.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    // dA += dC · Bᵀ
                    gemm(m, n, k, 1.0, &g.data, (n as isize, 1), &bv.data, (1, n as isize), 1.0, &mut ga.data);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    // dB += Aᵀ · dC
                    gemm(k, m, n, 1.0, &av.data, (1, k as isize), &g.data, (n as isize, 1), 1.0, &mut gb.data);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, || g.clone());
                self.accumulate(grads, *b, || g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, || g.clone());
                self.accumulate(grads, *b, || map(g, |x| -x));
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, || g.clone());
                self.accumulate(grads, *row, || {
                    let mut sums = Tensor::zeros(1, g.cols());
                    for chunk in g.data.chunks_exact(g.cols().max(1)) {
                        for (s, x) in sums.data.iter_mut().zip(chunk) {
                            *s += x;
                        }
                    }
                    sums
                });
            }
            Op::Scale(a, f) => self.accumulate(grads, *a, || map(g, |x| x * f)),
            Op::AddScalar(a) => self.accumulate(grads, *a, || g.clone()),
            Op::Hadamard(a, b) => {
                self.accumulate(grads, *a, || zip_map(g, self.value(*b), |x, y| x * y));
                self.accumulate(grads, *b, || zip_map(g, self.value(*a), |x, y| x * y));
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, || zip_map(g, bv, |x, y| x / y));
                self.accumulate(grads, *b, || {
                    let mut out = zip_map(g, av, |x, y| x * y);
                    for (o, y) in out.data.iter_mut().zip(&bv.data) {
                        *o = -*o / (y * y);
                    }
                    out
                });
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                self.accumulate(grads, *a, || zip_map(g, y, |x, s| x * s * (1.0 - s)));
            }
            Op::Relu(a) => {
                let input = self.value(*a);
                self.accumulate(grads, *a, || zip_map(g, input, |x, v| if v > 0.0 { x } else { 0.0 }));
            }
            Op::Dropout(a, mask) => self.accumulate(grads, *a, || Tensor {
                rows: g.rows,
                cols: g.cols,
                data: g.data.iter().zip(mask).map(|(x, m)| x * m).collect(),
            }),
            Op::MaskRows(a, mask) => self.accumulate(grads, *a, || {
                let mut out = g.clone();
                let cols = g.cols();
                for (r, &keep) in mask.iter().enumerate() {
                    if !keep {
                        out.data[r * cols..(r + 1) * cols].fill(0.0);
                    }
                }
                out
            }),
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = self.value(p).shape();
                    self.accumulate(grads, p, || {
                        if *axis == 0 {
                            Tensor {
                                rows: pr,
                                cols: pc,
                                data: g.data[offset * pc..(offset + pr) * pc].to_vec(),
                            }
                        } else {
                            let mut data = Vec::with_capacity(pr * pc);
                            for r in 0..pr {
                                data.extend_from_slice(&g.row(r)[offset..offset + pc]);
                            }
                            Tensor { rows: pr, cols: pc, data }
                        }
                    });
                    offset += if *axis == 0 { pr } else { pc };
                }
            }
            Op::Slice { src, axis, start } => {
                if let Some(gs) = self.slot(grads, *src) {
                    let cols = gs.cols();
                    if *axis == 0 {
                        let dst = &mut gs.data[start * cols..start * cols + g.len()];
                        for (d, x) in dst.iter_mut().zip(&g.data) {
                            *d += x;
                        }
                    } else {
                        for r in 0..g.rows() {
                            let dst = &mut gs.data[r * cols + start..r * cols + start + g.cols()];
                            for (d, x) in dst.iter_mut().zip(g.row(r)) {
                                *d += x;
                            }
                        }
                    }
                }
            }
            Op::Gather(src, index) => {
                let n = self.value(*src).rows();
                self.accumulate(grads, *src, || segment_sum_rows(g, index, n));
            }
            Op::SegmentSum(src, index) => self.accumulate(grads, *src, || gather_rows(g, index)),
            Op::SmoothL1 { pred, target, delta } => {
                let pv = self.value(*pred);
                let scale = g.data[0] / pv.len().max(1) as f64;
                self.accumulate(grads, *pred, || {
                    zip_map(pv, target, |p, t| {
                        let d = p - t;
                        let slope = if d.abs() < *delta { d / delta } else { d.signum() };
                        slope * scale
                    })
                });
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                self.accumulate(grads, *a, || Tensor::filled(r, c, g.data[0]));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                let n = (r * c).max(1) as f64;
                self.accumulate(grads, *a, || Tensor::filled(r, c, g.data[0] / n));
            }
        }
    }
}
