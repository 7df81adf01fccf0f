//! Pre-norm transformer encoder over `frames × dim` matrices.

use super::layers::{gelu_backward, gelu_forward, softmax_rows, LayerNorm, Linear, NormCache};
use super::params::{Grads, ParamSet};
use super::tensor::{dot, Mat};

#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub heads: usize,
    pub dim: usize,
    ln1: LayerNorm,
    qkv: Linear,
    out: Linear,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    ln1: NormCache,
    h1: Mat,
    qkv: Mat,
    attn: Vec<Mat>,
    ctx: Mat,
    ln2: NormCache,
    h2: Mat,
    f: Mat,
    a: Mat,
}

impl EncoderCache {
    /// Softmax attention weights, one `frames × frames` matrix per head.
    pub fn attention(&self) -> &[Mat] {
        &self.attn
    }
}

impl EncoderLayer {
    pub fn new(ps: &mut ParamSet, path: &str, dim: usize, heads: usize, mlp_ratio: usize) -> Self {
        assert!(dim.is_multiple_of(heads), "{path}: dim {dim} not divisible by {heads} heads");
        Self {
            heads,
            dim,
            ln1: LayerNorm::new(ps, &format!("{path}.ln1"), dim),
            qkv: Linear::new(ps, &format!("{path}.qkv"), dim, 3 * dim, false),
            out: Linear::new(ps, &format!("{path}.out"), dim, dim, false),
            ln2: LayerNorm::new(ps, &format!("{path}.ln2"), dim),
            fc1: Linear::new(ps, &format!("{path}.fc1"), dim, mlp_ratio * dim, false),
            fc2: Linear::new(ps, &format!("{path}.fc2"), mlp_ratio * dim, dim, false),
        }
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> (Mat, EncoderCache) {
        let n = x.rows;
        let d = self.dim;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let (h1, ln1) = self.ln1.forward(ps, x);
        let qkv = self.qkv.forward(ps, &h1);
        let mut ctx = Mat::zeros(n, d);
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            let mut s = Mat::zeros(n, n);
            for i in 0..n {
                let qi = &qkv.row(i)[qo..qo + dh];
                for j in 0..n {
                    s.data[i * n + j] = scale * dot(qi, &qkv.row(j)[ko..ko + dh]);
                }
            }
            softmax_rows(&mut s);
            for i in 0..n {
                let out = &mut ctx.data[i * d + h * dh..i * d + (h + 1) * dh];
                for j in 0..n {
                    let w = s.data[i * n + j];
                    for (o, v) in out.iter_mut().zip(&qkv.row(j)[vo..vo + dh]) {
                        *o += w * v;
                    }
                }
            }
            attn.push(s);
        }
        let mut x1 = self.out.forward(ps, &ctx);
        x1.add_assign(x);
        let (h2, ln2) = self.ln2.forward(ps, &x1);
        let f = self.fc1.forward(ps, &h2);
        let a = gelu_forward(&f);
        let mut y = self.fc2.forward(ps, &a);
        y.add_assign(&x1);
        (y, EncoderCache { ln1, h1, qkv, attn, ctx, ln2, h2, f, a })
    }

    pub fn backward(&self, ps: &ParamSet, c: &EncoderCache, dy: &Mat, g: &mut Grads) -> Mat {
        let n = dy.rows;
        let d = self.dim;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let da = self.fc2.backward(ps, &c.a, dy, g);
        let df = gelu_backward(&c.f, &da);
        let dh2 = self.fc1.backward(ps, &c.h2, &df, g);
        let mut dx1 = self.ln2.backward(ps, &c.ln2, &dh2, g);
        dx1.add_assign(dy);

        let dctx = self.out.backward(ps, &c.ctx, &dx1, g);
        let mut dqkv = Mat::zeros(n, 3 * d);
        for h in 0..self.heads {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            let a = &c.attn[h];
            // dA = dctx_h · V_hᵀ, dV_h = Aᵀ · dctx_h
            let mut ds = Mat::zeros(n, n);
            for i in 0..n {
                let dci = &dctx.row(i)[qo..qo + dh];
                for j in 0..n {
                    ds.data[i * n + j] = dot(dci, &c.qkv.row(j)[vo..vo + dh]);
                    let w = a.data[i * n + j];
                    let dv = &mut dqkv.data[j * 3 * d + vo..j * 3 * d + vo + dh];
                    for (o, v) in dv.iter_mut().zip(dci) {
                        *o += w * v;
                    }
                }
            }
            for i in 0..n {
                let ar = a.row(i);
                let dr = ds.row_mut(i);
                let s: f64 = ar.iter().zip(dr.iter()).map(|(p, q)| p * q).sum();
                for (dv, p) in dr.iter_mut().zip(ar) {
                    *dv = p * (*dv - s) * scale;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let w = ds.data[i * n + j];
                    if w == 0.0 {
                        continue;
                    }
                    for t in 0..dh {
                        dqkv.data[i * 3 * d + qo + t] += w * c.qkv.data[j * 3 * d + ko + t];
                        dqkv.data[j * 3 * d + ko + t] += w * c.qkv.data[i * 3 * d + qo + t];
                    }
                }
            }
        }
        let dh1 = self.qkv.backward(ps, &c.h1, &dqkv, g);
        let mut dx = self.ln1.backward(ps, &c.ln1, &dh1, g);
        dx.add_assign(&dx1);
        dx
    }
}

/// Stack of encoder layers followed by a final layer norm.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub layers: Vec<EncoderLayer>,
    pub norm: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct EncoderStackCache {
    pub layers: Vec<EncoderCache>,
    norm: NormCache,
}

impl Encoder {
    pub fn new(ps: &mut ParamSet, path: &str, dim: usize, heads: usize, mlp_ratio: usize, n_layers: usize) -> Self {
        let layers = (0..n_layers).map(|i| EncoderLayer::new(ps, &format!("{path}.layer{i}"), dim, heads, mlp_ratio)).collect();
        Self { layers, norm: LayerNorm::new(ps, &format!("{path}.norm"), dim) }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> (Mat, EncoderStackCache) {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (y, c) = l.forward(ps, &h);
            caches.push(c);
            h = y;
        }
        let (y, norm) = self.norm.forward(ps, &h);
        (y, EncoderStackCache { layers: caches, norm })
    }

    pub fn backward(&self, ps: &ParamSet, c: &EncoderStackCache, dy: &Mat, g: &mut Grads) -> Mat {
        let mut d = self.norm.backward(ps, &c.norm, dy, g);
        for (l, lc) in self.layers.iter().zip(&c.layers).rev() {
            d = l.backward(ps, lc, &d, g);
        }
        d
    }
}
