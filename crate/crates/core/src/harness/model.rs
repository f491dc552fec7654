//! A small causal transformer with hand-derived gradients.
//!
//! Token and position embeddings feed `n_layers` residual blocks, each a
//! multi-head causal self-attention followed by a ReLU MLP, then a linear
//! read-out to vocabulary logits. Both sublayers and the read-out see a
//! layer-normalized copy of the residual stream (pre-norm); the stream
//! itself, which the layer traces and hidden-state losses use, is left
//! unnormalized.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::RealMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub vocab_size: usize,
    pub max_len: usize,
    pub d_model: usize,
    pub d_mlp: usize,
    pub n_layers: usize,
    /// Attention heads per block; must divide `d_model`.
    pub n_heads: usize,
}

impl Architecture {
    fn block_size(&self) -> usize {
        let (d, h) = (self.d_model, self.d_mlp);
        4 * d * d + d * h + h + h * d + d + 4 * d
    }

    pub fn param_count(&self) -> usize {
        let (v, d) = (self.vocab_size, self.d_model);
        v * d + self.max_len * d + self.n_layers * self.block_size() + 2 * d + d * v + v
    }

    fn layout(&self) -> Layout {
        let (v, d, h) = (self.vocab_size, self.d_model, self.d_mlp);
        let tok = 0;
        let pos = tok + v * d;
        let mut at = pos + self.max_len * d;
        let mut blocks = Vec::with_capacity(self.n_layers);
        for _ in 0..self.n_layers {
            let b = BlockLayout {
                wq: at,
                wk: at + d * d,
                wv: at + 2 * d * d,
                wo: at + 3 * d * d,
                w1: at + 4 * d * d,
                b1: at + 4 * d * d + d * h,
                w2: at + 4 * d * d + d * h + h,
                b2: at + 4 * d * d + 2 * d * h + h,
                ln1: at + 4 * d * d + 2 * d * h + h + d,
                ln2: at + 4 * d * d + 2 * d * h + h + 3 * d,
            };
            at += self.block_size();
            blocks.push(b);
        }
        Layout {
            tok,
            pos,
            blocks,
            ln_f: at,
            w_out: at + 2 * d,
            b_out: at + 2 * d + d * v,
        }
    }
}

#[derive(Debug, Clone)]
struct BlockLayout {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    /// Layer-norm gain then bias, `d` each.
    ln1: usize,
    ln2: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    tok: usize,
    pos: usize,
    blocks: Vec<BlockLayout>,
    ln_f: usize,
    w_out: usize,
    b_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub model_id: String,
    pub arch: Architecture,
    params: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
struct BlockCache {
    ln1: NormCache,
    ln2: NormCache,
    q: RealMatrix,
    k: RealMatrix,
    v: RealMatrix,
    /// One causal attention pattern per head.
    attn: Vec<RealMatrix>,
    heads: RealMatrix,
    pre: RealMatrix,
    act: RealMatrix,
}

pub struct Forward {
    /// Residual stream per layer: index 0 is the embedding sum, index `k`
    /// the output of block `k`.
    pub states: Vec<RealMatrix>,
    pub logits: RealMatrix,
    blocks: Vec<BlockCache>,
    ln_f: NormCache,
    tokens: Vec<usize>,
}

impl Forward {
    pub fn last_hidden(&self) -> &RealMatrix {
        self.states.last().expect("at least the embedding layer")
    }
}

fn param_view(p: &[f64], at: usize, rows: usize, cols: usize) -> RealMatrix {
    RealMatrix::from_vec(rows, cols, p[at..at + rows * cols].to_vec()).expect("finite params")
}

const LN_EPS: f64 = 1e-5;

/// Per-row standardization kept for the backward pass of a layer norm.
struct NormCache {
    xhat: RealMatrix,
    inv_std: Vec<f64>,
}

impl NormCache {
    fn new(x: &RealMatrix) -> Self {
        let d = x.cols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = xhat.row_mut(r);
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            inv_std.push(inv);
        }
        NormCache { xhat, inv_std }
    }

    /// `gain * xhat + bias` with gain at `p[at..]` and bias right after.
    fn apply(&self, p: &[f64], at: usize) -> RealMatrix {
        let d = self.xhat.cols();
        let (gain, bias) = (&p[at..at + d], &p[at + d..at + 2 * d]);
        RealMatrix::from_fn(self.xhat.rows(), d, |r, j| {
            gain[j] * self.xhat.get(r, j) + bias[j]
        })
    }

    /// Accumulates gain and bias gradients; returns the input gradient.
    fn backward(&self, p: &[f64], at: usize, dy: &RealMatrix, grad: &mut [f64]) -> RealMatrix {
        let d = self.xhat.cols();
        let gain = &p[at..at + d];
        let mut dx = RealMatrix::zeros(dy.rows(), d);
        for r in 0..dy.rows() {
            let (xh, g) = (self.xhat.row(r), dy.row(r));
            for j in 0..d {
                grad[at + j] += g[j] * xh[j];
                grad[at + d + j] += g[j];
            }
            let dxh: Vec<f64> = g.iter().zip(gain).map(|(a, b)| a * b).collect();
            let mean = dxh.iter().sum::<f64>() / d as f64;
            let mean_x = dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            let inv = self.inv_std[r];
            for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
                *o = inv * (dxh[j] - mean - xh[j] * mean_x);
            }
        }
        dx
    }
}

/// Causal multi-head attention: head `h` uses columns
/// `h * d_head .. (h + 1) * d_head` of `q`, `k`, `v`. Returns the attention
/// patterns and the concatenated head outputs.
fn attend(q: &RealMatrix, k: &RealMatrix, v: &RealMatrix, n_heads: usize) -> (Vec<RealMatrix>, RealMatrix) {
    let (l, d) = q.shape();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = RealMatrix::zeros(l, d);
    let mut patterns = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = h * dh..(h + 1) * dh;
        let mut w = RealMatrix::zeros(l, l);
        for i in 0..l {
            let qi = &q.row(i)[cols.clone()];
            let scores: Vec<f64> = (0..=i)
                .map(|j| crate::matrix::dot(qi, &k.row(j)[cols.clone()]) * scale)
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (j, e) in exps.iter().enumerate() {
                let a = e / z;
                w.set(i, j, a);
                let out = &mut heads.row_mut(i)[cols.clone()];
                out.iter_mut()
                    .zip(&v.row(j)[cols.clone()])
                    .for_each(|(o, x)| *o += a * x);
            }
        }
        patterns.push(w);
    }
    (patterns, heads)
}

/// Gradients of [`attend`] with respect to `q`, `k`, `v`.
fn attend_backward(
    c: &BlockCache,
    d_heads: &RealMatrix,
    n_heads: usize,
) -> (RealMatrix, RealMatrix, RealMatrix) {
    let (l, d) = c.q.shape();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut d_q = RealMatrix::zeros(l, d);
    let mut d_k = RealMatrix::zeros(l, d);
    let mut d_v = RealMatrix::zeros(l, d);
    for (h, w) in c.attn.iter().enumerate() {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..l {
            let dhi = &d_heads.row(i)[cols.clone()];
            let d_attn: Vec<f64> = (0..=i)
                .map(|j| crate::matrix::dot(dhi, &c.v.row(j)[cols.clone()]))
                .collect();
            let inner: f64 = d_attn.iter().enumerate().map(|(j, g)| g * w.get(i, j)).sum();
            for (j, g) in d_attn.iter().enumerate() {
                let a = w.get(i, j);
                let ds = a * (g - inner) * scale;
                for col in cols.clone() {
                    let dq = d_q.get(i, col) + ds * c.k.get(j, col);
                    d_q.set(i, col, dq);
                    let dk = d_k.get(j, col) + ds * c.q.get(i, col);
                    d_k.set(j, col, dk);
                    let dv = d_v.get(j, col) + a * d_heads.get(i, col);
                    d_v.set(j, col, dv);
                }
            }
        }
    }
    (d_q, d_k, d_v)
}

fn add_into(g: &mut [f64], at: usize, m: &RealMatrix) {
    for (o, v) in g[at..at + m.as_slice().len()].iter_mut().zip(m.as_slice()) {
        *o += v;
    }
}

fn add_row_bias(m: &mut RealMatrix, b: &[f64]) {
    for r in 0..m.rows() {
        m.row_mut(r).iter_mut().zip(b).for_each(|(x, bi)| *x += bi);
    }
}

fn col_sums(m: &RealMatrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        out.iter_mut().zip(m.row(r)).for_each(|(o, v)| *o += v);
    }
    out
}

impl ToyModel {
    /// Uniform init in `±sqrt(3 / fan_in)` for weights,
    /// zeros for biases, `±0.1` for embeddings.
    pub fn init(model_id: impl Into<String>, arch: Architecture, rng: &mut impl Rng) -> Self {
        assert!(
            arch.n_heads > 0 && arch.d_model % arch.n_heads == 0,
            "n_heads must divide d_model"
        );
        let layout = arch.layout();
        let mut params = vec![0.0; arch.param_count()];
        let (v, d, h) = (arch.vocab_size, arch.d_model, arch.d_mlp);
        let mut fill = |at: usize, len: usize, bound: f64| {
            for p in &mut params[at..at + len] {
                *p = rng.gen_range(-bound..bound);
            }
        };
        fill(layout.tok, v * d, 0.1);
        fill(layout.pos, arch.max_len * d, 0.1);
        let wd = (3.0 / d as f64).sqrt();
        let wh = (3.0 / h as f64).sqrt();
        for b in &layout.blocks {
            for at in [b.wq, b.wk, b.wv] {
                fill(at, d * d, wd);
            }
            // Residual branches start small so the stack begins near identity.
            fill(b.wo, d * d, 0.5 * wd / arch.n_layers as f64);
            fill(b.w1, d * h, wd);
            fill(b.w2, h * d, 0.5 * wh / arch.n_layers as f64);
        }
        fill(layout.w_out, d * v, wd);
        for at in layout.blocks.iter().flat_map(|b| [b.ln1, b.ln2]).chain([layout.ln_f]) {
            params[at..at + d].fill(1.0);
        }
        ToyModel {
            model_id: model_id.into(),
            arch,
            params,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, tokens: &[usize]) -> Forward {
        let a = &self.arch;
        let l = tokens.len();
        assert!(l >= 1 && l <= a.max_len, "sequence length {l} outside 1..={}", a.max_len);
        let layout = a.layout();
        let p = &self.params;
        let d = a.d_model;
        let mut x = RealMatrix::from_fn(l, d, |t, j| {
            let tok = tokens[t];
            assert!(tok < a.vocab_size, "token {tok} out of vocabulary");
            p[layout.tok + tok * d + j] + p[layout.pos + t * d + j]
        });
        let mut states = vec![x.clone()];
        let mut blocks = Vec::with_capacity(a.n_layers);
        for b in &layout.blocks {
            let ln1 = NormCache::new(&x);
            let u = ln1.apply(p, b.ln1);
            let q = u.matmul(&param_view(p, b.wq, d, d));
            let k = u.matmul(&param_view(p, b.wk, d, d));
            let v = u.matmul(&param_view(p, b.wv, d, d));
            let (attn, heads) = attend(&q, &k, &v, a.n_heads);
            let mut x_mid = heads.matmul(&param_view(p, b.wo, d, d));
            x_mid.axpy(1.0, &x);
            let ln2 = NormCache::new(&x_mid);
            let w = ln2.apply(p, b.ln2);
            let mut pre = w.matmul(&param_view(p, b.w1, d, a.d_mlp));
            add_row_bias(&mut pre, &p[b.b1..b.b1 + a.d_mlp]);
            let act = pre.map(|u| u.max(0.0));
            let mut out = act.matmul(&param_view(p, b.w2, a.d_mlp, d));
            add_row_bias(&mut out, &p[b.b2..b.b2 + d]);
            out.axpy(1.0, &x_mid);
            blocks.push(BlockCache {
                ln1,
                ln2,
                q,
                k,
                v,
                attn,
                heads,
                pre,
                act,
            });
            x = out;
            states.push(x.clone());
        }
        let ln_f = NormCache::new(&x);
        let mut logits = ln_f
            .apply(p, layout.ln_f)
            .matmul(&param_view(p, layout.w_out, d, a.vocab_size));
        add_row_bias(&mut logits, &p[layout.b_out..layout.b_out + a.vocab_size]);
        Forward {
            states,
            logits,
            blocks,
            ln_f,
            tokens: tokens.to_vec(),
        }
    }

    /// Accumulates parameter gradients into `grad` given the loss gradient
    /// with respect to the logits and, optionally, the last hidden state.
    pub fn backward(
        &self,
        fwd: &Forward,
        d_logits: &RealMatrix,
        d_hidden: Option<&RealMatrix>,
        grad: &mut [f64],
    ) {
        let a = &self.arch;
        let layout = a.layout();
        let p = &self.params;
        let (d, h, v) = (a.d_model, a.d_mlp, a.vocab_size);
        assert_eq!(grad.len(), p.len());

        let z = fwd.ln_f.apply(p, layout.ln_f);
        add_into(grad, layout.w_out, &z.t_matmul(d_logits));
        let db = col_sums(d_logits);
        grad[layout.b_out..layout.b_out + v]
            .iter_mut()
            .zip(&db)
            .for_each(|(g, x)| *g += x);
        let dz = d_logits.matmul(&param_view(p, layout.w_out, d, v).transpose());
        let mut dx = fwd.ln_f.backward(p, layout.ln_f, &dz, grad);
        if let Some(dh) = d_hidden {
            dx.axpy(1.0, dh);
        }

        for (b, c) in layout.blocks.iter().zip(&fwd.blocks).rev() {
            // MLP branch.
            let d_out = &dx;
            add_into(grad, b.w2, &c.act.t_matmul(d_out));
            let db2 = col_sums(d_out);
            grad[b.b2..b.b2 + d].iter_mut().zip(&db2).for_each(|(g, x)| *g += x);
            let mut d_pre = d_out.matmul(&param_view(p, b.w2, h, d).transpose());
            for (g, u) in d_pre.as_mut_slice().iter_mut().zip(c.pre.as_slice()) {
                if *u <= 0.0 {
                    *g = 0.0;
                }
            }
            add_into(grad, b.w1, &c.ln2.apply(p, b.ln2).t_matmul(&d_pre));
            let db1 = col_sums(&d_pre);
            grad[b.b1..b.b1 + h].iter_mut().zip(&db1).for_each(|(g, x)| *g += x);
            let d_w = d_pre.matmul(&param_view(p, b.w1, d, h).transpose());
            let mut d_mid = c.ln2.backward(p, b.ln2, &d_w, grad);
            d_mid.axpy(1.0, d_out);

            // Attention branch.
            add_into(grad, b.wo, &c.heads.t_matmul(&d_mid));
            let d_heads = d_mid.matmul(&param_view(p, b.wo, d, d).transpose());
            let (d_q, d_k, d_v) = attend_backward(c, &d_heads, a.n_heads);
            let u = c.ln1.apply(p, b.ln1);
            add_into(grad, b.wq, &u.t_matmul(&d_q));
            add_into(grad, b.wk, &u.t_matmul(&d_k));
            add_into(grad, b.wv, &u.t_matmul(&d_v));
            let mut d_u = d_q.matmul(&param_view(p, b.wq, d, d).transpose());
            d_u.axpy(1.0, &d_k.matmul(&param_view(p, b.wk, d, d).transpose()));
            d_u.axpy(1.0, &d_v.matmul(&param_view(p, b.wv, d, d).transpose()));
            let mut d_x = c.ln1.backward(p, b.ln1, &d_u, grad);
            d_x.axpy(1.0, &d_mid);
            dx = d_x;
        }

        for (t, &tok) in fwd.tokens.iter().enumerate() {
            for j in 0..d {
                grad[layout.tok + tok * d + j] += dx.get(t, j);
                grad[layout.pos + t * d + j] += dx.get(t, j);
            }
        }
    }
}

/// Mean token cross-entropy over `targets` (`(position, next_token)` pairs)
/// and its gradient with respect to the logits.
pub fn cross_entropy(logits: &RealMatrix, targets: &[(usize, usize)]) -> (f64, RealMatrix) {
    let mut grad = RealMatrix::zeros(logits.rows(), logits.cols());
    if targets.is_empty() {
        return (0.0, grad);
    }
    let n = targets.len() as f64;
    let mut loss = 0.0;
    for &(pos, tok) in targets {
        let row = logits.row(pos);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
        loss += (z.ln() + m - row[tok]) / n;
        let g = grad.row_mut(pos);
        for (gi, x) in g.iter_mut().zip(row) {
            *gi += (x - m).exp() / z / n;
        }
        g[tok] -= 1.0 / n;
    }
    (loss, grad)
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}
