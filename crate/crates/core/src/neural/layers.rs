use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Result, SsgnError};

/// `x W^T + b` with `W [out, in]`. Shape errors name both shapes.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let xs = tape.shape(x);
    let ws = tape.shape(w);
    if xs.1 != ws.1 {
        return Err(SsgnError::Shape(format!(
            "linear: input {}x{} against weight {}x{}",
            xs.0, xs.1, ws.0, ws.1
        )));
    }
    let y = tape.matmul_t(x, w);
    match b {
        Some(b) => {
            let bs = tape.shape(b);
            if bs.0 * bs.1 != ws.0 {
                return Err(SsgnError::Shape(format!(
                    "linear: bias {}x{} against weight {}x{}",
                    bs.0, bs.1, ws.0, ws.1
                )));
            }
            Ok(tape.add_row(y, b))
        }
        None => Ok(y),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let w = store.add_xavier(format!("{name}.w"), output, input, rng);
        let b = bias.then(|| store.add_zeros(format!("{name}.b"), 1, output));
        Linear {
            w,
            b,
            input,
            output,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(self.w);
        let b = self.b.map(|b| tape.param(b));
        linear(tape, x, w, b).expect("linear layer shape")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        LayerNorm {
            gamma: store.add_ones(format!("{name}.gamma"), 1, d),
            beta: store.add_zeros(format!("{name}.beta"), 1, d),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let g = tape.param(self.gamma);
        let b = tape.param(self.beta);
        tape.layer_norm(x, g, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
}

impl Embedding {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        rows: usize,
        d: usize,
        rng: &mut R,
    ) -> Self {
        Embedding {
            table: store.add_xavier(format!("{name}.table"), rows, d, rng),
            rows,
        }
    }

    pub fn forward(&self, tape: &mut Tape, idx: &[usize]) -> Var {
        let t = tape.param(self.table);
        tape.gather_rows(t, idx)
    }
}

/// Row-major `[queries, keys]` mask where query `i` sees every context key
/// plus itself and earlier positions.
pub fn causal_mask(queries: usize, context: usize) -> Vec<bool> {
    let keys = context + queries;
    let mut m = vec![false; queries * keys];
    for i in 0..queries {
        for j in 0..context + i + 1 {
            m[i * keys + j] = true;
        }
    }
    m
}

/// Pre-norm transformer block: multi-head self-attention and a ×4
/// feed-forward with GELU, each wrapped in a residual connection.
#[derive(Debug, Clone, Copy)]
pub struct AttentionBlock {
    pub d: usize,
    pub heads: usize,
    ln1: LayerNorm,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

impl AttentionBlock {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(SsgnError::Config(format!(
                "hidden width {d} is not divisible into {heads} heads"
            )));
        }
        Ok(AttentionBlock {
            d,
            heads,
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d),
            wq: Linear::new(store, &format!("{name}.q"), d, d, true, rng),
            wk: Linear::new(store, &format!("{name}.k"), d, d, false, rng),
            wv: Linear::new(store, &format!("{name}.v"), d, d, true, rng),
            wo: Linear::new(store, &format!("{name}.o"), d, d, true, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d),
            ff1: Linear::new(store, &format!("{name}.ff1"), d, 4 * d, true, rng),
            ff2: Linear::new(store, &format!("{name}.ff2"), 4 * d, d, true, rng),
        })
    }

    /// Self-attention over `x` with every row visible.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let n = tape.shape(x).0;
        self.forward_with_context(tape, None, x, &vec![true; n * n])
    }

    pub fn forward_causal(&self, tape: &mut Tape, x: Var) -> Var {
        let n = tape.shape(x).0;
        self.forward_with_context(tape, None, x, &causal_mask(n, 0))
    }

    /// Updates the rows of `x`. Keys and values come from
    /// `[context; x]`, where `context` is this layer's input for rows that
    /// are not updated here. `mask` is `[rows(x), rows(context) + rows(x)]`.
    pub fn forward_with_context(
        &self,
        tape: &mut Tape,
        context: Option<Var>,
        x: Var,
        mask: &[bool],
    ) -> Var {
        let rows = tape.shape(x).0;
        let h = self.ln1.forward(tape, x);
        let kv_in = match context {
            Some(c) => {
                let hc = self.ln1.forward(tape, c);
                tape.concat_rows(&[hc, h])
            }
            None => h,
        };
        let keys = tape.shape(kv_in).0;
        assert_eq!(mask.len(), rows * keys, "attention mask shape");
        let q = self.wq.forward(tape, h);
        let k = self.wk.forward(tape, kv_in);
        let v = self.wv.forward(tape, kv_in);
        let dh = self.d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let qh = tape.slice_cols(q, head * dh, dh);
            let kh = tape.slice_cols(k, head * dh, dh);
            let vh = tape.slice_cols(v, head * dh, dh);
            let s = tape.matmul_t(qh, kh);
            let s = tape.scale(s, scale);
            let a = tape.masked_softmax(s, mask);
            outs.push(tape.matmul(a, vh));
        }
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat_cols(&outs)
        };
        let att = self.wo.forward(tape, cat);
        let x = tape.add(x, att);
        let h2 = self.ln2.forward(tape, x);
        let f = self.ff1.forward(tape, h2);
        let f = tape.gelu(f);
        let f = self.ff2.forward(tape, f);
        tape.add(x, f)
    }
}
