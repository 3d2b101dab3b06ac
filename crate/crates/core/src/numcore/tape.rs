//! Reverse-mode differentiation over the fixed operation set the attention
//! stack uses.
//!
//! A [`Tape`] records every primitive as a node holding its forward value and
//! whatever the adjoint needs. Parameters and constant inputs are borrowed for
//! the tape's lifetime, so recording a forward pass never copies weights.
//! [`Tape::backward`] replays the nodes in reverse exactly once.

use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::Rng;

use super::ops::{self, softplus};
use super::params::{ParamId, ParamStore};
use super::{Matrix, NumError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'p> {
    Constant,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Var },
    MatMul { a: Var, b: Var },
    MatMulNt { a: Var, b: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    HadamardConst { x: Var, c: &'p Matrix },
    Hadamard { a: Var, b: Var },
    PairScores { h: Var, w: Var, b: Var },
    LeakyRelu { x: Var, slope: f64 },
    Elu { x: Var },
    MaskedSoftmax { x: Var, mask: &'p Matrix },
    LayerNorm { x: Var, gain: Var, bias: Var, normed: Matrix, inv_std: Vec<f64> },
    Dropout { x: Var, scale: Matrix },
    ConcatCols { parts: Vec<Var> },
    ScatterRows { parts: Vec<(Var, Vec<usize>)> },
    SelectRows { x: Var, rows: Vec<usize> },
    InvPairDistance { x: Var, cap: f64 },
    SigmoidBce { logits: Var, targets: Matrix },
    SoftmaxCe { logits: Var, targets: Vec<usize> },
}

struct Node<'p> {
    value: Cow<'p, Matrix>,
    op: Op<'p>,
}

/// Gradients keyed by parameter block. Blocks the loss never touched are absent.
#[derive(Debug, Default)]
pub struct Gradients {
    slots: BTreeMap<ParamId, Matrix>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.slots.get(&id)
    }

    /// One matrix per block of `store`, zero where the loss did not reach.
    pub fn dense(mut self, store: &ParamStore) -> Vec<Matrix> {
        store
            .ids()
            .map(|id| {
                self.slots.remove(&id).unwrap_or_else(|| {
                    let m = store.get(id);
                    Matrix::zeros(m.rows(), m.cols())
                })
            })
            .collect()
    }

    fn accumulate(&mut self, id: ParamId, g: Matrix) {
        match self.slots.get_mut(&id) {
            Some(acc) => acc.add_assign(&g).expect("gradient shape is the parameter shape"),
            None => {
                self.slots.insert(id, g);
            }
        }
    }
}

#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Cow<'p, Matrix>, op: Op<'p>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn owned(&mut self, value: Matrix, op: Op<'p>) -> Var {
        self.push(Cow::Owned(value), op)
    }

    /// Constant input borrowed for the tape's lifetime.
    pub fn input(&mut self, m: &'p Matrix) -> Var {
        self.push(Cow::Borrowed(m), Op::Constant)
    }

    /// Constant input owned by the tape.
    pub fn input_owned(&mut self, m: Matrix) -> Var {
        self.owned(m, Op::Constant)
    }

    pub fn param(&mut self, store: &'p ParamStore, id: ParamId) -> Var {
        self.push(Cow::Borrowed(store.get(id)), Op::Param(id))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NumError> {
        let out = ops::linear(self.value(x), self.value(w), self.value(b))?;
        Ok(self.owned(out, Op::Linear { x, w, b }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.owned(out, Op::MatMul { a, b }))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.owned(out, Op::MatMulNt { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.owned(out, Op::Add { a, b }))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.owned(out, Op::Scale { x, factor })
    }

    /// Elementwise product with a constant matrix.
    pub fn hadamard_const(&mut self, x: Var, c: &'p Matrix) -> Result<Var, NumError> {
        let out = self.value(x).zip_map(c, "hadamard", |a, b| a * b)?;
        Ok(self.owned(out, Op::HadamardConst { x, c }))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.value(a).zip_map(self.value(b), "hadamard", |x, y| x * y)?;
        Ok(self.owned(out, Op::Hadamard { a, b }))
    }

    /// Affine scorer on every concatenated pair: `out[i,j] = w·(h_i ∥ h_j) + b`.
    ///
    /// `w` is `2d×1` and `b` is `1×1`. The N×N×2d concatenation is never
    /// materialized; the score splits into a row term and a column term.
    pub fn pair_scores(&mut self, h: Var, w: Var, b: Var) -> Result<Var, NumError> {
        let (hv, wv, bv) = (self.value(h), self.value(w), self.value(b));
        let d = hv.cols();
        if wv.shape() != (2 * d, 1) || bv.shape() != (1, 1) {
            return Err(NumError::Dimension { op: "pair_scores", left: hv.shape(), right: wv.shape() });
        }
        let (wl, wr) = wv.as_slice().split_at(d);
        let n = hv.rows();
        let left: Vec<f64> = (0..n).map(|i| super::matrix::dot(hv.row(i), wl)).collect();
        let right: Vec<f64> = (0..n).map(|i| super::matrix::dot(hv.row(i), wr)).collect();
        let bias = bv[(0, 0)];
        let out = Matrix::from_fn(n, n, |i, j| left[i] + right[j] + bias);
        Ok(self.owned(out, Op::PairScores { h, w, b }))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = ops::leaky_relu(self.value(x), slope);
        self.owned(out, Op::LeakyRelu { x, slope })
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let out = ops::elu(self.value(x));
        self.owned(out, Op::Elu { x })
    }

    pub fn masked_softmax(&mut self, x: Var, mask: &'p Matrix) -> Result<Var, NumError> {
        let out = ops::masked_row_softmax(self.value(x), mask)?;
        Ok(self.owned(out, Op::MaskedSoftmax { x, mask }))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, NumError> {
        let parts = ops::layer_norm_parts(self.value(x), self.value(gain), self.value(bias), eps)?;
        Ok(self.owned(parts.out, Op::LayerNorm { x, gain, bias, normed: parts.normed, inv_std: parts.inv_std }))
    }

    /// Inverted dropout; the identity node is skipped entirely when inactive.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, keep: f64, training: bool, rng: &mut R) -> Var {
        let (r, c) = self.shape(x);
        match ops::dropout_mask(r, c, keep, training, rng) {
            None => x,
            Some(scale) => {
                let out = self.value(x).zip_map(&scale, "dropout", |a, m| a * m).expect("same shape");
                self.owned(out, Op::Dropout { x, scale })
            }
        }
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let rows = parts.first().map_or(0, |&p| self.shape(p).0);
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(NumError::Dimension { op: "concat_cols", left: self.shape(parts[0]), right: self.shape(p) });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut at = 0;
            let dst = out.row_mut(i);
            for &p in parts {
                let src = self.nodes[p.0].value.row(i);
                dst[at..at + src.len()].copy_from_slice(src);
                at += src.len();
            }
        }
        Ok(self.owned(out, Op::ConcatCols { parts: parts.to_vec() }))
    }

    /// Interleaves the rows of several parts into an `n_rows` matrix; part `k`'s
    /// row `r` lands at `parts[k].1[r]`. Every output row must be covered once.
    pub fn scatter_rows(&mut self, parts: Vec<(Var, Vec<usize>)>, n_rows: usize) -> Result<Var, NumError> {
        let cols = parts.iter().find(|(_, idx)| !idx.is_empty()).map_or(0, |(v, _)| self.shape(*v).1);
        let mut out = Matrix::zeros(n_rows, cols);
        let mut covered = vec![false; n_rows];
        for (v, idx) in &parts {
            let m = self.value(*v);
            if m.rows() != idx.len() || (!idx.is_empty() && m.cols() != cols) {
                return Err(NumError::Dimension { op: "scatter_rows", left: m.shape(), right: (idx.len(), cols) });
            }
            for (r, &dst) in idx.iter().enumerate() {
                if dst >= n_rows || covered[dst] {
                    return Err(NumError::Dimension { op: "scatter_rows(index)", left: (dst, cols), right: (n_rows, cols) });
                }
                covered[dst] = true;
                out.row_mut(dst).copy_from_slice(m.row(r));
            }
        }
        if covered.iter().any(|c| !c) {
            return Err(NumError::Dimension { op: "scatter_rows(coverage)", left: (n_rows, cols), right: (covered.iter().filter(|c| **c).count(), cols) });
        }
        Ok(self.owned(out, Op::ScatterRows { parts }))
    }

    pub fn select_rows(&mut self, x: Var, rows: Vec<usize>) -> Var {
        let out = self.value(x).select_rows(&rows);
        self.owned(out, Op::SelectRows { x, rows })
    }

    /// `out[i,j] = 1/‖x_i − x_j‖₂`, clamped to `cap`; the diagonal equals `cap`.
    pub fn inv_pair_distance(&mut self, x: Var, cap: f64) -> Var {
        let out = inv_pair_distance_value(self.value(x), cap);
        self.owned(out, Op::InvPairDistance { x, cap })
    }

    /// Mean over rows and columns of per-entry sigmoid cross-entropy against
    /// `{0,1}` targets. A 0-row input yields a constant zero loss.
    pub fn sigmoid_bce(&mut self, logits: Var, targets: Matrix) -> Result<Var, NumError> {
        let z = self.value(logits);
        z.ensure_same_shape(&targets, "sigmoid_bce")?;
        let loss = if z.is_empty() {
            0.0
        } else {
            let total: f64 = z.as_slice().iter().zip(targets.as_slice()).map(|(&z, &y)| softplus(z) - y * z).sum();
            total / z.len() as f64
        };
        Ok(self.owned(Matrix::filled(1, 1, loss), Op::SigmoidBce { logits, targets }))
    }

    /// Mean over rows of softmax cross-entropy against class indices.
    pub fn softmax_ce(&mut self, logits: Var, targets: Vec<usize>) -> Result<Var, NumError> {
        let z = self.value(logits);
        if targets.len() != z.rows() {
            return Err(NumError::Dimension { op: "softmax_ce", left: z.shape(), right: (targets.len(), 1) });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= z.cols()) {
            return Err(NumError::LabelOutOfRange { label: bad, classes: z.cols() });
        }
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = z.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let loss = if targets.is_empty() { 0.0 } else { total / targets.len() as f64 };
        Ok(self.owned(Matrix::filled(1, 1, loss), Op::SoftmaxCe { logits, targets }))
    }

    /// Gradient of the scalar `loss` with respect to every parameter node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumError> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(NumError::EmptyTape);
        }
        if self.shape(loss) != (1, 1) {
            return Err(NumError::NotScalar { shape: self.shape(loss) });
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.accumulate(*id, g),
                Op::Linear { x, w, b } => {
                    let gx = g.matmul_nt(self.value(*w))?;
                    let gw = self.value(*x).matmul_tn(&g)?;
                    let gb = g.col_sums();
                    add_grad(&mut grads, *x, gx);
                    add_grad(&mut grads, *w, gw);
                    add_grad(&mut grads, *b, gb);
                }
                Op::MatMul { a, b } => {
                    let ga = g.matmul_nt(self.value(*b))?;
                    let gb = self.value(*a).matmul_tn(&g)?;
                    add_grad(&mut grads, *a, ga);
                    add_grad(&mut grads, *b, gb);
                }
                Op::MatMulNt { a, b } => {
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.matmul_tn(self.value(*a))?;
                    add_grad(&mut grads, *a, ga);
                    add_grad(&mut grads, *b, gb);
                }
                Op::Add { a, b } => {
                    add_grad(&mut grads, *a, g.clone());
                    add_grad(&mut grads, *b, g);
                }
                Op::Scale { x, factor } => add_grad(&mut grads, *x, g.map(|v| v * factor)),
                Op::HadamardConst { x, c } => add_grad(&mut grads, *x, g.zip_map(c, "hadamard", |a, b| a * b)?),
                Op::Hadamard { a, b } => {
                    let ga = g.zip_map(self.value(*b), "hadamard", |x, y| x * y)?;
                    let gb = g.zip_map(self.value(*a), "hadamard", |x, y| x * y)?;
                    add_grad(&mut grads, *a, ga);
                    add_grad(&mut grads, *b, gb);
                }
                Op::PairScores { h, w, b } => {
                    let hv = self.value(*h);
                    let (n, d) = hv.shape();
                    let wv = self.value(*w).as_slice();
                    let (wl, wr) = wv.split_at(d);
                    let row_g: Vec<f64> = (0..n).map(|i| g.row(i).iter().sum()).collect();
                    let col_g = g.col_sums();
                    let col_g = col_g.as_slice();
                    let mut gh = Matrix::zeros(n, d);
                    let mut gw = Matrix::zeros(2 * d, 1);
                    for i in 0..n {
                        let hrow = hv.row(i);
                        let (ri, ci) = (row_g[i], col_g[i]);
                        for k in 0..d {
                            gh[(i, k)] = ri * wl[k] + ci * wr[k];
                            gw[(k, 0)] += ri * hrow[k];
                            gw[(d + k, 0)] += ci * hrow[k];
                        }
                    }
                    add_grad(&mut grads, *h, gh);
                    add_grad(&mut grads, *w, gw);
                    add_grad(&mut grads, *b, Matrix::filled(1, 1, g.sum()));
                }
                Op::LeakyRelu { x, slope } => {
                    let gx = g.zip_map(self.value(*x), "leaky_relu", |gv, xv| if xv > 0.0 { gv } else { gv * slope })?;
                    add_grad(&mut grads, *x, gx);
                }
                Op::Elu { x } => {
                    let gx = g.zip_map(&node.value, "elu", |gv, y| if y > 0.0 { gv } else { gv * (y + 1.0) })?;
                    add_grad(&mut grads, *x, gx);
                }
                Op::MaskedSoftmax { x, mask } => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let (yr, gr, mr) = (y.row(i), g.row(i), mask.row(i));
                        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (j, o) in gx.row_mut(i).iter_mut().enumerate() {
                            if mr[j] != 0.0 {
                                *o = yr[j] * (gr[j] - inner);
                            }
                        }
                    }
                    add_grad(&mut grads, *x, gx);
                }
                Op::LayerNorm { x, gain, bias, normed, inv_std } => {
                    let gain_v = self.value(*gain).as_slice();
                    let (n, d) = normed.shape();
                    let mut gx = Matrix::zeros(n, d);
                    let mut gg = Matrix::zeros(1, d);
                    for i in 0..n {
                        let (xh, gr) = (normed.row(i), g.row(i));
                        let gxh: Vec<f64> = gr.iter().zip(gain_v).map(|(a, b)| a * b).collect();
                        let mean_g = gxh.iter().sum::<f64>() / d as f64;
                        let mean_gx = gxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for (j, o) in gx.row_mut(i).iter_mut().enumerate() {
                            *o = inv_std[i] * (gxh[j] - mean_g - xh[j] * mean_gx);
                        }
                        for (o, (a, b)) in gg.as_mut_slice().iter_mut().zip(gr.iter().zip(xh)) {
                            *o += a * b;
                        }
                    }
                    add_grad(&mut grads, *x, gx);
                    add_grad(&mut grads, *gain, gg);
                    add_grad(&mut grads, *bias, g.col_sums());
                }
                Op::Dropout { x, scale } => add_grad(&mut grads, *x, g.zip_map(scale, "dropout", |a, b| a * b)?),
                Op::ConcatCols { parts } => {
                    let mut at = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        let part = Matrix::from_fn(g.rows(), w, |i, j| g[(i, at + j)]);
                        at += w;
                        add_grad(&mut grads, p, part);
                    }
                }
                Op::ScatterRows { parts } => {
                    for (v, idx) in parts {
                        add_grad(&mut grads, *v, g.select_rows(idx));
                    }
                }
                Op::SelectRows { x, rows } => {
                    let (r, c) = self.shape(*x);
                    let mut gx = Matrix::zeros(r, c);
                    for (k, &src) in rows.iter().enumerate() {
                        for (o, &v) in gx.row_mut(src).iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                    add_grad(&mut grads, *x, gx);
                }
                Op::InvPairDistance { x, cap } => {
                    let xv = self.value(*x);
                    let (n, d) = xv.shape();
                    let mut gx = Matrix::zeros(n, d);
                    for i in 0..n {
                        for j in 0..n {
                            let a = node.value[(i, j)];
                            if i == j || a >= *cap {
                                continue;
                            }
                            // d(1/r)/dx_i = -(x_i - x_j) / r³ = -(x_i - x_j) · a³
                            let coeff = -g[(i, j)] * a * a * a;
                            for k in 0..d {
                                let diff = xv[(i, k)] - xv[(j, k)];
                                gx[(i, k)] += coeff * diff;
                                gx[(j, k)] -= coeff * diff;
                            }
                        }
                    }
                    add_grad(&mut grads, *x, gx);
                }
                Op::SigmoidBce { logits, targets } => {
                    let z = self.value(*logits);
                    if !z.is_empty() {
                        let s = g[(0, 0)] / z.len() as f64;
                        let gz = z.zip_map(targets, "sigmoid_bce", |zv, y| (ops::sigmoid(zv) - y) * s)?;
                        add_grad(&mut grads, *logits, gz);
                    }
                }
                Op::SoftmaxCe { logits, targets } => {
                    let z = self.value(*logits);
                    if !targets.is_empty() {
                        let s = g[(0, 0)] / targets.len() as f64;
                        let mut gz = ops::softmax_rows(z);
                        for (i, &t) in targets.iter().enumerate() {
                            gz[(i, t)] -= 1.0;
                        }
                        add_grad(&mut grads, *logits, gz.map(|v| v * s));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn add_grad(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g).expect("adjoint shape matches its node"),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn inv_pair_distance_value(x: &Matrix, cap: f64) -> Matrix {
    let n = x.rows();
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            return cap;
        }
        let dist = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist <= 1.0 / cap {
            cap
        } else {
            1.0 / dist
        }
    })
}
