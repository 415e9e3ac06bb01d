//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Tape`] borrows a [`ParamStore`] read-only; parameters enter the tape
//! without copying. Shape violations inside the tape are programming errors
//! and panic; user-facing layers validate shapes before recording ops.

use std::rc::Rc;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{mm_acc, mm_t_acc, t_mm_acc, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    Softplus(Var),
    MaskedSoftmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Transpose(Var),
    Reshape(Var),
    GatherRows {
        table: Var,
        idx: Vec<usize>,
    },
    RowWeightedSum {
        weights: Var,
        values: Var,
    },
    Pick {
        x: Var,
        idx: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
    BceWithLogits {
        x: Var,
        targets: Rc<[f64]>,
    },
}

enum Value {
    Own(Tensor),
    Param(ParamId),
}

struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(512),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Own(t) => t,
            Value::Param(id) => self.params.get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Value::Own(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input (no gradient).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Own(t),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.index()] = Some(v);
        v
    }

    /// `a [m,k] * b [k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul {m}x{k} by {k2}x{n}");
        let mut out = vec![0.0; m * n];
        mm_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b), &[a, b])
    }

    /// `a [m,k] * b [n,k]^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_t {m}x{k} by ({n}x{k2})^T");
        let mut out = vec![0.0; m * n];
        mm_t_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        self.push(Tensor::matrix(m, n, out), Op::MatMulT(a, b), &[a, b])
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(
            ta.shape(),
            tb.shape(),
            "elementwise op on mismatched shapes"
        );
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data);
        self.push(t, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Add the single row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = self.shape(a);
        assert_eq!(self.value(b).len(), n, "add_row: bias length vs {m}x{n}");
        let bias = self.value(b).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n.max(1)) {
            for (x, b) in row.iter_mut().zip(&bias) {
                *x += b;
            }
        }
        self.push(Tensor::matrix(m, n, data), Op::AddRow(a, b), &[a, b])
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| f(*x)).collect());
        self.push(out, op, &[a])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.map(a, Op::Gelu(a), |x| gelu(x).0)
    }

    /// `ln(1 + e^x)`, overflow-safe.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, Op::Softplus(a), softplus)
    }

    /// Softmax along each row over the entries where `mask` is true.
    /// Masked entries are exactly 0; a row with no true entry is all zeros.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Var {
        let t = self.value(a);
        assert_eq!(t.len(), mask.len(), "mask length");
        let out = masked_softmax_rows(t, mask);
        self.push(out, Op::MaskedSoftmax(a), &[a])
    }

    /// Per-row layer normalization with learned gain and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (m, n) = self.shape(x);
        assert_eq!(self.value(gamma).len(), n);
        assert_eq!(self.value(beta).len(), n);
        let xs = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xs[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + LN_EPS).sqrt();
            rstd[i] = r;
            for j in 0..n {
                let h = (row[j] - mean) * r;
                xhat[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        self.push(
            Tensor::matrix(m, n, out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let n = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut m = 0;
        for p in parts {
            let (r, c) = self.shape(*p);
            assert_eq!(c, n, "concat_rows width");
            m += r;
            data.extend_from_slice(self.value(*p).data());
        }
        self.push(
            Tensor::matrix(m, n, data),
            Op::ConcatRows(parts.to_vec()),
            parts,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let m = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let (r, c) = self.shape(*p);
                assert_eq!(r, m, "concat_cols height");
                c
            })
            .collect();
        let n: usize = widths.iter().sum();
        let mut data = vec![0.0; m * n];
        let mut off = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let src = self.value(*p).data();
            for i in 0..m {
                data[i * n + off..i * n + off + w].copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            off += w;
        }
        self.push(
            Tensor::matrix(m, n, data),
            Op::ConcatCols(parts.to_vec()),
            parts,
        )
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.shape(x);
        assert!(start + len <= m, "slice_rows {start}+{len} of {m}");
        let data = self.value(x).data()[start * n..(start + len) * n].to_vec();
        self.push(
            Tensor::matrix(len, n, data),
            Op::SliceRows { x, start },
            &[x],
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.shape(x);
        assert!(start + len <= n, "slice_cols {start}+{len} of {n}");
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        self.push(
            Tensor::matrix(m, len, data),
            Op::SliceCols { x, start },
            &[x],
        )
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let (m, n) = self.shape(x);
        let src = self.value(x).data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        self.push(Tensor::matrix(n, m, data), Op::Transpose(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let t = self.value(x).clone().reshaped(vec![rows, cols]);
        self.push(t, Op::Reshape(x), &[x])
    }

    /// Rows `idx` of `table`, in order.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Var {
        let (m, n) = self.shape(table);
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            assert!(i < m, "gather row {i} of {m}");
            data.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        self.push(
            Tensor::matrix(idx.len(), n, data),
            Op::GatherRows {
                table,
                idx: idx.to_vec(),
            },
            &[table],
        )
    }

    /// `out[i] = sum_j weights[i, j] * values[i * c + j]` for `weights [r, c]`
    /// and `values [r * c, d]`.
    pub fn row_weighted_sum(&mut self, weights: Var, values: Var) -> Var {
        let (r, c) = self.shape(weights);
        let (rc, d) = self.shape(values);
        assert_eq!(r * c, rc, "row_weighted_sum {r}x{c} weights vs {rc} values");
        let w = self.value(weights).data();
        let v = self.value(values).data();
        let mut out = vec![0.0; r * d];
        for i in 0..r {
            let orow = &mut out[i * d..(i + 1) * d];
            for j in 0..c {
                let wij = w[i * c + j];
                if wij == 0.0 {
                    continue;
                }
                let vrow = &v[(i * c + j) * d..(i * c + j + 1) * d];
                for (o, x) in orow.iter_mut().zip(vrow) {
                    *o += wij * x;
                }
            }
        }
        self.push(
            Tensor::matrix(r, d, out),
            Op::RowWeightedSum { weights, values },
            &[weights, values],
        )
    }

    /// Column `idx[i]` of row `i`, as an `[rows, 1]` column.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Var {
        let (m, n) = self.shape(x);
        assert_eq!(idx.len(), m, "pick needs one index per row");
        let t = self.value(x);
        let data = idx
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                assert!(j < n);
                t.get(i, j)
            })
            .collect();
        self.push(
            Tensor::matrix(m, 1, data),
            Op::Pick {
                x,
                idx: idx.to_vec(),
            },
            &[x],
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Mean binary cross-entropy between `sigmoid(x)` and `targets`.
    pub fn bce_with_logits(&mut self, x: Var, targets: &[f64]) -> Var {
        let t = self.value(x);
        assert_eq!(t.len(), targets.len(), "bce target length");
        let loss = bce_mean(t.data(), targets);
        self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits {
                x,
                targets: targets.into(),
            },
            &[x],
        )
    }

    /// Gradients of the scalar `out` with respect to every parameter used.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).len(), 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Vec<f64>>> = (0..=out.0).map(|_| None).collect();
        grads[out.0] = Some(vec![1.0]);
        let mut result = Gradients::zeros_like(self.params);

        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, &g, &mut grads, &mut result);
        }
        result
    }

    fn backprop(
        &self,
        i: usize,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        result: &mut Gradients,
    ) {
        let node = &self.nodes[i];
        let out = match &node.value {
            Value::Own(t) => t,
            Value::Param(id) => self.params.get(*id),
        };
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let len = self.value(v).len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => result.accumulate(*id, g),
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).1;
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |ga| mm_t_acc(g, bv, ga, m, n, k));
                acc(*b, &mut |gb| t_mm_acc(av, g, gb, m, k, n));
            }
            Op::MatMulT(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).0;
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |ga| mm_acc(g, bv, ga, m, n, k));
                acc(*b, &mut |gb| t_mm_acc(g, av, gb, m, n, k));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| add_into(gb, g));
            }
            Op::AddRow(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                let n = self.shape(*a).1;
                acc(*b, &mut |gb| {
                    for row in g.chunks(n.max(1)) {
                        add_into(gb, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |ga| {
                    for k in 0..g.len() {
                        ga[k] += g[k] * bv[k];
                    }
                });
                acc(*b, &mut |gb| {
                    for k in 0..g.len() {
                        gb[k] += g[k] * av[k];
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |ga| {
                for k in 0..g.len() {
                    ga[k] += g[k] * c;
                }
            }),
            Op::Tanh(a) => {
                let y = out.data();
                acc(*a, &mut |ga| {
                    for k in 0..g.len() {
                        ga[k] += g[k] * (1.0 - y[k] * y[k]);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                acc(*a, &mut |ga| {
                    for k in 0..g.len() {
                        ga[k] += g[k] * y[k] * (1.0 - y[k]);
                    }
                });
            }
            Op::Gelu(a) => {
                let x = self.value(*a).data();
                acc(*a, &mut |ga| {
                    for k in 0..g.len() {
                        ga[k] += g[k] * gelu(x[k]).1;
                    }
                });
            }
            Op::Softplus(a) => {
                let x = self.value(*a).data();
                acc(*a, &mut |ga| {
                    for k in 0..g.len() {
                        ga[k] += g[k] * sigmoid(x[k]);
                    }
                });
            }
            Op::MaskedSoftmax(a) => {
                let y = out.data();
                let n = out.cols().max(1);
                acc(*a, &mut |ga| {
                    for (r, (yr, gr)) in y.chunks(n).zip(g.chunks(n)).enumerate() {
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for j in 0..n {
                            ga[r * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let n = out.cols();
                let gv = self.value(*gamma).data();
                acc(*gamma, &mut |gg| {
                    for (k, gk) in g.iter().enumerate() {
                        gg[k % n] += gk * xhat[k];
                    }
                });
                acc(*beta, &mut |gb| {
                    for (k, gk) in g.iter().enumerate() {
                        gb[k % n] += gk;
                    }
                });
                acc(*x, &mut |gx| {
                    for (r, rs) in rstd.iter().enumerate() {
                        let row = r * n..(r + 1) * n;
                        let dxhat: Vec<f64> =
                            g[row.clone()].iter().zip(gv).map(|(a, b)| a * b).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / n as f64;
                        let mean_dx = dxhat
                            .iter()
                            .zip(&xhat[row.clone()])
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                            / n as f64;
                        for j in 0..n {
                            gx[r * n + j] += rs * (dxhat[j] - mean_d - xhat[r * n + j] * mean_dx);
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    acc(*p, &mut |gp| add_into(gp, &g[off..off + len]));
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (m, n) = (out.rows(), out.cols());
                let mut off = 0;
                for p in parts {
                    let w = self.shape(*p).1;
                    acc(*p, &mut |gp| {
                        for i in 0..m {
                            add_into(
                                &mut gp[i * w..(i + 1) * w],
                                &g[i * n + off..i * n + off + w],
                            );
                        }
                    });
                    off += w;
                }
            }
            Op::SliceRows { x, start } => {
                let n = out.cols();
                acc(*x, &mut |gx| {
                    add_into(&mut gx[start * n..start * n + g.len()], g)
                });
            }
            Op::SliceCols { x, start } => {
                let n = self.shape(*x).1;
                let w = out.cols();
                acc(*x, &mut |gx| {
                    for i in 0..out.rows() {
                        add_into(
                            &mut gx[i * n + start..i * n + start + w],
                            &g[i * w..(i + 1) * w],
                        );
                    }
                });
            }
            Op::Transpose(x) => {
                let (m, n) = self.shape(*x);
                acc(*x, &mut |gx| {
                    for i in 0..m {
                        for j in 0..n {
                            gx[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Reshape(x) => acc(*x, &mut |gx| add_into(gx, g)),
            Op::GatherRows { table, idx } => {
                let n = out.cols();
                acc(*table, &mut |gt| {
                    for (r, &i) in idx.iter().enumerate() {
                        add_into(&mut gt[i * n..(i + 1) * n], &g[r * n..(r + 1) * n]);
                    }
                });
            }
            Op::RowWeightedSum { weights, values } => {
                let (r, c) = self.shape(*weights);
                let d = self.shape(*values).1;
                let (w, v) = (self.value(*weights).data(), self.value(*values).data());
                acc(*weights, &mut |gw| {
                    for i in 0..r {
                        let gi = &g[i * d..(i + 1) * d];
                        for j in 0..c {
                            let vrow = &v[(i * c + j) * d..(i * c + j + 1) * d];
                            gw[i * c + j] += gi.iter().zip(vrow).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                });
                acc(*values, &mut |gv| {
                    for i in 0..r {
                        let gi = &g[i * d..(i + 1) * d];
                        for j in 0..c {
                            let wij = w[i * c + j];
                            let slot = &mut gv[(i * c + j) * d..(i * c + j + 1) * d];
                            for (s, x) in slot.iter_mut().zip(gi) {
                                *s += wij * x;
                            }
                        }
                    }
                });
            }
            Op::Pick { x, idx } => {
                let n = self.shape(*x).1;
                acc(*x, &mut |gx| {
                    for (i, &j) in idx.iter().enumerate() {
                        gx[i * n + j] += g[i];
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |gx| gx.iter_mut().for_each(|v| *v += g[0])),
            Op::Mean(x) => {
                let len = self.value(*x).len().max(1) as f64;
                acc(*x, &mut |gx| gx.iter_mut().for_each(|v| *v += g[0] / len));
            }
            Op::BceWithLogits { x, targets } => {
                let xs = self.value(*x).data();
                let len = xs.len().max(1) as f64;
                acc(*x, &mut |gx| {
                    for k in 0..xs.len() {
                        gx[k] += g[0] * (sigmoid(xs[k]) - targets[k]) / len;
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// GELU (tanh form) and its derivative.
fn gelu(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    let inner = C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dinner = C * (1.0 + 3.0 * 0.044715 * x * x);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
    (y, dy)
}

/// Stable mean of `softplus(x) - y * x` over all entries.
pub fn bce_mean(logits: &[f64], targets: &[f64]) -> f64 {
    let s: f64 = logits
        .iter()
        .zip(targets)
        .map(|(x, y)| softplus(*x) - y * x)
        .sum();
    s / logits.len().max(1) as f64
}

pub fn masked_softmax_rows(t: &Tensor, mask: &[bool]) -> Tensor {
    let n = t.cols().max(1);
    let mut out = vec![0.0; t.len()];
    for (r, row) in t.data().chunks(n).enumerate() {
        let m = &mask[r * n..(r + 1) * n];
        let max = row
            .iter()
            .zip(m)
            .filter(|(_, k)| **k)
            .map(|(x, _)| *x)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut z = 0.0;
        for j in 0..n {
            if m[j] {
                let e = (row[j] - max).exp();
                out[r * n + j] = e;
                z += e;
            }
        }
        for j in 0..n {
            out[r * n + j] /= z;
        }
    }
    Tensor::new(t.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::check_gradients;

    #[test]
    fn masked_softmax_examples() {
        let t = Tensor::row(vec![1.0; 4]);
        assert_eq!(masked_softmax_rows(&t, &[true; 4]).data(), &[0.25; 4]);
        let t = Tensor::row(vec![0.0; 3]);
        assert_eq!(
            masked_softmax_rows(&t, &[true, false, true]).data(),
            &[0.5, 0.0, 0.5]
        );
        assert_eq!(masked_softmax_rows(&t, &[false; 3]).data(), &[0.0; 3]);
    }

    #[test]
    fn softplus_and_bce_are_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(800.0).is_finite() && softplus(-800.0) >= 0.0);
        assert!((bce_mean(&[0.0], &[1.0]) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_mean(&[20.0], &[1.0]) < 3e-9);
        assert!(bce_mean(&[1000.0], &[0.0]).is_finite());
    }

    /// Every op, composed, against central differences.
    #[test]
    fn ops_gradient_check() {
        let mut store = ParamStore::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::{Rng, SeedableRng};
        let mut rand_t = |r: usize, c: usize| {
            Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
        };
        let a = store.add("a", rand_t(3, 4));
        let b = store.add("b", rand_t(4, 2));
        let w = store.add("w", rand_t(5, 4));
        let bias = store.add("bias", rand_t(1, 5));
        let g = store.add("g", rand_t(1, 5));
        let be = store.add("be", rand_t(1, 5));
        let table = store.add("table", rand_t(6, 2));
        let vals = store.add("vals", rand_t(6, 5));
        let mask = vec![
            true, false, true, true, true, false, false, false, true, true, false, true, true,
            true, true,
        ];
        let targets: Vec<f64> = (0..10).map(|k| (k % 3 == 0) as u8 as f64).collect();

        let report = check_gradients(&store, |tape| {
            let a = tape.param(a);
            let b = tape.param(b);
            let ab = tape.matmul(a, b); // 3x2
            let w = tape.param(w);
            let lin = tape.matmul_t(a, w); // 3x5
            let bias = tape.param(bias);
            let lin = tape.add_row(lin, bias);
            let (g, be) = (tape.param(g), tape.param(be));
            let ln = tape.layer_norm(lin, g, be);
            let act = tape.gelu(ln);
            let th = tape.tanh(act);
            let sm = tape.masked_softmax(th, &mask);
            let sg = tape.sigmoid(lin);
            let prod = tape.mul(sm, sg);
            let sum = tape.add(prod, lin);
            let sliced = tape.slice_cols(sum, 1, 3); // 3x3
            let top = tape.slice_rows(sliced, 0, 2); // 2x3
            let tr = tape.transpose(top); // 3x2
            let cat = tape.concat_rows(&[tr, ab]); // 6x2
            let table = tape.param(table);
            let gathered = tape.gather_rows(table, &[5, 0, 5, 2, 1, 3]);
            let both = tape.concat_cols(&[cat, gathered]); // 6x4
            let both = tape.scale(both, 0.7);
            let rs = tape.reshape(both, 3, 8);
            let weights = tape.slice_cols(rs, 0, 2); // 3x2
            let vals = tape.param(vals);
            let rw = tape.row_weighted_sum(weights, vals); // 3x5
            let sp = tape.softplus(rw);
            let picked = tape.pick(sp, &[4, 0, 2]);
            let bce_in = tape.slice_rows(sp, 1, 2);
            let bce = tape.bce_with_logits(bce_in, &targets);
            let m = tape.mean(picked);
            let s = tape.sum(sm);
            let t1 = tape.add(m, bce);
            Ok(tape.add(t1, s))
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "{report:?}");
    }

    use crate::neural::params::ParamStore;
}
