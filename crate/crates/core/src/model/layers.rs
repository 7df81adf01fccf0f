//! Differentiable primitives. Each layer exposes `forward` and a `backward`
//! that accumulates parameter gradients into [`Grads`] and returns the
//! gradient with respect to its input.

use super::params::{Grads, Init, ParamId, ParamSet};
use super::tensor::{axpy, dot, Mat};

/// Same-padded, stride-1 1-D convolution over a `channels × time` matrix.
/// Weights are `[out, in, kernel]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub dilation: usize,
}

/// Valid output range `[t0, t1)` for tap offset `s` on a length-`len` axis.
#[inline]
fn tap_range(s: isize, len: usize) -> (usize, usize) {
    let t0 = (-s).max(0) as usize;
    let t1 = (len as isize - s).clamp(0, len as isize) as usize;
    (t0.min(t1), t1)
}

impl Conv1d {
    pub fn new(ps: &mut ParamSet, path: &str, c_in: usize, c_out: usize, kernel: usize, dilation: usize, zero: bool) -> Self {
        assert!(kernel % 2 == 1, "{path}: kernel must be odd");
        let init = if zero { Init::Zeros } else { Init::FanIn(c_in * kernel) };
        let w = ps.add(format!("{path}.weight"), &[c_out, c_in, kernel], init);
        let b = ps.add(format!("{path}.bias"), &[c_out], Init::Zeros);
        Self { w, b, c_in, c_out, kernel, dilation }
    }

    #[inline]
    fn shift(&self, k: usize) -> isize {
        (k * self.dilation) as isize - ((self.kernel - 1) / 2 * self.dilation) as isize
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> Mat {
        debug_assert_eq!(x.rows, self.c_in);
        let len = x.cols;
        let w = ps.get(self.w);
        let b = ps.get(self.b);
        let mut y = Mat::zeros(self.c_out, len);
        for o in 0..self.c_out {
            let yrow = y.row_mut(o);
            yrow.fill(b[o]);
            for i in 0..self.c_in {
                let xrow = x.row(i);
                for k in 0..self.kernel {
                    let s = self.shift(k);
                    let (t0, t1) = tap_range(s, len);
                    let wv = w[(o * self.c_in + i) * self.kernel + k];
                    let xs = (t0 as isize + s) as usize;
                    axpy(&mut yrow[t0..t1], wv, &xrow[xs..xs + (t1 - t0)]);
                }
            }
        }
        y
    }

    pub fn backward(&self, ps: &ParamSet, x: &Mat, dy: &Mat, g: &mut Grads) -> Mat {
        let len = x.cols;
        let w = ps.get(self.w);
        let mut dx = Mat::zeros(self.c_in, len);
        {
            let gb = g.get_mut(self.b);
            for o in 0..self.c_out {
                gb[o] += dy.row(o).iter().sum::<f64>();
            }
        }
        let gw = g.get_mut(self.w);
        for o in 0..self.c_out {
            let dyrow = dy.row(o);
            for i in 0..self.c_in {
                let xrow = x.row(i);
                for k in 0..self.kernel {
                    let s = self.shift(k);
                    let (t0, t1) = tap_range(s, len);
                    let xs = (t0 as isize + s) as usize;
                    let n = t1 - t0;
                    let idx = (o * self.c_in + i) * self.kernel + k;
                    gw[idx] += dot(&dyrow[t0..t1], &xrow[xs..xs + n]);
                    axpy(&mut dx.row_mut(i)[xs..xs + n], w[idx], &dyrow[t0..t1]);
                }
            }
        }
        dx
    }
}

/// Per-channel (depthwise) convolution; weights are `[channels, kernel]`.
#[derive(Debug, Clone)]
pub struct DepthwiseConv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub channels: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl DepthwiseConv1d {
    pub fn new(ps: &mut ParamSet, path: &str, channels: usize, kernel: usize, dilation: usize) -> Self {
        assert!(kernel % 2 == 1, "{path}: kernel must be odd");
        let w = ps.add(format!("{path}.weight"), &[channels, kernel], Init::FanIn(kernel));
        let b = ps.add(format!("{path}.bias"), &[channels], Init::Zeros);
        Self { w, b, channels, kernel, dilation }
    }

    #[inline]
    fn shift(&self, k: usize) -> isize {
        (k * self.dilation) as isize - ((self.kernel - 1) / 2 * self.dilation) as isize
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> Mat {
        let len = x.cols;
        let w = ps.get(self.w);
        let b = ps.get(self.b);
        let mut y = Mat::zeros(self.channels, len);
        for c in 0..self.channels {
            let xrow = x.row(c);
            let yrow = y.row_mut(c);
            yrow.fill(b[c]);
            for k in 0..self.kernel {
                let s = self.shift(k);
                let (t0, t1) = tap_range(s, len);
                let xs = (t0 as isize + s) as usize;
                axpy(&mut yrow[t0..t1], w[c * self.kernel + k], &xrow[xs..xs + (t1 - t0)]);
            }
        }
        y
    }

    pub fn backward(&self, ps: &ParamSet, x: &Mat, dy: &Mat, g: &mut Grads) -> Mat {
        let len = x.cols;
        let w = ps.get(self.w);
        let mut dx = Mat::zeros(self.channels, len);
        {
            let gb = g.get_mut(self.b);
            for c in 0..self.channels {
                gb[c] += dy.row(c).iter().sum::<f64>();
            }
        }
        let gw = g.get_mut(self.w);
        for c in 0..self.channels {
            let dyrow = dy.row(c);
            let xrow = x.row(c);
            for k in 0..self.kernel {
                let s = self.shift(k);
                let (t0, t1) = tap_range(s, len);
                let xs = (t0 as isize + s) as usize;
                let n = t1 - t0;
                gw[c * self.kernel + k] += dot(&dyrow[t0..t1], &xrow[xs..xs + n]);
                axpy(&mut dx.row_mut(c)[xs..xs + n], w[c * self.kernel + k], &dyrow[t0..t1]);
            }
        }
        dx
    }
}

/// Binomial low-pass of length `2·factor − 1`, coefficients `C(2f−2, j) / 2^(2f−2)`.
pub fn binomial_kernel(factor: usize) -> Vec<f64> {
    let n = 2 * factor - 2;
    let mut row = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![1.0; row.len() + 1];
        for j in 1..row.len() {
            next[j] = row[j - 1] + row[j];
        }
        row = next;
    }
    let total = 2f64.powi(n as i32);
    row.iter().map(|v| v / total).collect()
}

/// Fixed anti-aliasing filter followed by decimation. Output length is
/// `ceil(len / factor)`; edges are extended by replication so DC passes
/// through unchanged.
#[derive(Debug, Clone)]
pub struct LowpassDecimate {
    pub factor: usize,
    kernel: Vec<f64>,
}

impl LowpassDecimate {
    pub fn new(factor: usize) -> Self {
        Self { factor, kernel: binomial_kernel(factor) }
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn out_len(&self, len: usize) -> usize {
        len.div_ceil(self.factor)
    }

    #[inline]
    fn src(&self, m: usize, j: usize, len: usize) -> usize {
        let idx = (m * self.factor + j) as isize - (self.factor as isize - 1);
        idx.clamp(0, len as isize - 1) as usize
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let len = x.cols;
        let out_len = self.out_len(len);
        let mut y = Mat::zeros(x.rows, out_len);
        for c in 0..x.rows {
            let xrow = x.row(c);
            let yrow = y.row_mut(c);
            for (m, ym) in yrow.iter_mut().enumerate() {
                *ym = self.kernel.iter().enumerate().map(|(j, h)| h * xrow[self.src(m, j, len)]).sum();
            }
        }
        y
    }

    pub fn backward(&self, dy: &Mat, in_len: usize) -> Mat {
        let mut dx = Mat::zeros(dy.rows, in_len);
        for c in 0..dy.rows {
            let dyrow = dy.row(c);
            let dxrow = dx.row_mut(c);
            for (m, &d) in dyrow.iter().enumerate() {
                for (j, h) in self.kernel.iter().enumerate() {
                    dxrow[self.src(m, j, in_len)] += h * d;
                }
            }
        }
        dx
    }
}

const NORM_EPS: f64 = 1e-5;

/// Layer normalization across channels at every time step of a
/// `channels × time` matrix, with per-channel affine parameters.
#[derive(Debug, Clone)]
pub struct ChannelNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
}

#[derive(Debug, Clone)]
pub struct NormCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

impl ChannelNorm {
    pub fn new(ps: &mut ParamSet, path: &str, channels: usize) -> Self {
        let gamma = ps.add(format!("{path}.gamma"), &[channels], Init::Ones);
        let beta = ps.add(format!("{path}.beta"), &[channels], Init::Zeros);
        Self { gamma, beta, channels }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> (Mat, NormCache) {
        let (c, len) = x.shape();
        let mut mean = vec![0.0; len];
        for r in 0..c {
            axpy(&mut mean, 1.0 / c as f64, x.row(r));
        }
        let mut var = vec![0.0; len];
        for r in 0..c {
            for ((v, &xv), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                let d = xv - m;
                *v += d * d;
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v / c as f64 + NORM_EPS).sqrt()).collect();
        let gamma = ps.get(self.gamma);
        let beta = ps.get(self.beta);
        let mut xhat = Mat::zeros(c, len);
        let mut y = Mat::zeros(c, len);
        for r in 0..c {
            let xr = x.row(r);
            let hr = xhat.row_mut(r);
            for t in 0..len {
                hr[t] = (xr[t] - mean[t]) * inv_std[t];
            }
            let yr = y.row_mut(r);
            for t in 0..len {
                yr[t] = gamma[r] * xhat.data[r * len + t] + beta[r];
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    pub fn backward(&self, ps: &ParamSet, cache: &NormCache, dy: &Mat, g: &mut Grads) -> Mat {
        let (c, len) = dy.shape();
        let gamma = ps.get(self.gamma);
        {
            let gg = g.get_mut(self.gamma);
            for r in 0..c {
                gg[r] += dot(dy.row(r), cache.xhat.row(r));
            }
        }
        {
            let gbeta = g.get_mut(self.beta);
            for r in 0..c {
                gbeta[r] += dy.row(r).iter().sum::<f64>();
            }
        }
        // dx = inv_std · (dxhat − mean(dxhat) − xhat·mean(dxhat·xhat))
        let mut m1 = vec![0.0; len];
        let mut m2 = vec![0.0; len];
        for r in 0..c {
            let dr = dy.row(r);
            let hr = cache.xhat.row(r);
            for t in 0..len {
                let dh = dr[t] * gamma[r];
                m1[t] += dh;
                m2[t] += dh * hr[t];
            }
        }
        let inv_c = 1.0 / c as f64;
        let mut dx = Mat::zeros(c, len);
        for r in 0..c {
            let dr = dy.row(r);
            let hr = cache.xhat.row(r);
            let out = dx.row_mut(r);
            for t in 0..len {
                let dh = dr[t] * gamma[r];
                out[t] = cache.inv_std[t] * (dh - m1[t] * inv_c - hr[t] * m2[t] * inv_c);
            }
        }
        dx
    }
}

/// Layer normalization of each row of a `frames × dim` matrix.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamSet, path: &str, dim: usize) -> Self {
        let gamma = ps.add(format!("{path}.gamma"), &[dim], Init::Ones);
        let beta = ps.add(format!("{path}.beta"), &[dim], Init::Zeros);
        Self { gamma, beta, dim }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> (Mat, NormCache) {
        let (n, d) = x.shape();
        let gamma = ps.get(self.gamma);
        let beta = ps.get(self.beta);
        let mut xhat = Mat::zeros(n, d);
        let mut y = Mat::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        for r in 0..n {
            let xr = x.row(r);
            let mean = xr.iter().sum::<f64>() / d as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            inv_std.push(is);
            let hr = xhat.row_mut(r);
            for j in 0..d {
                hr[j] = (xr[j] - mean) * is;
            }
            for j in 0..d {
                y.data[r * d + j] = gamma[j] * xhat.data[r * d + j] + beta[j];
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    pub fn backward(&self, ps: &ParamSet, cache: &NormCache, dy: &Mat, g: &mut Grads) -> Mat {
        let (n, d) = dy.shape();
        let gamma = ps.get(self.gamma);
        {
            let gg = g.get_mut(self.gamma);
            for r in 0..n {
                for j in 0..d {
                    gg[j] += dy.data[r * d + j] * cache.xhat.data[r * d + j];
                }
            }
        }
        {
            let gb = g.get_mut(self.beta);
            for r in 0..n {
                axpy(gb, 1.0, dy.row(r));
            }
        }
        let mut dx = Mat::zeros(n, d);
        for r in 0..n {
            let dr = dy.row(r);
            let hr = cache.xhat.row(r);
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for j in 0..d {
                let dh = dr[j] * gamma[j];
                m1 += dh;
                m2 += dh * hr[j];
            }
            m1 /= d as f64;
            m2 /= d as f64;
            let is = cache.inv_std[r];
            let out = dx.row_mut(r);
            for j in 0..d {
                out[j] = is * (dr[j] * gamma[j] - m1 - hr[j] * m2);
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn gelu_forward(x: &Mat) -> Mat {
    Mat { rows: x.rows, cols: x.cols, data: x.data.iter().map(|&v| gelu(v)).collect() }
}

pub fn gelu_backward(x: &Mat, dy: &Mat) -> Mat {
    Mat { rows: x.rows, cols: x.cols, data: x.data.iter().zip(&dy.data).map(|(&v, &d)| d * gelu_grad(v)).collect() }
}

/// Affine map applied to every row: `y = x·Wᵀ + b`, `W` is `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, path: &str, d_in: usize, d_out: usize, zero: bool) -> Self {
        let init = if zero { Init::Zeros } else { Init::FanIn(d_in) };
        let w = ps.add(format!("{path}.weight"), &[d_out, d_in], init);
        let b = ps.add(format!("{path}.bias"), &[d_out], Init::Zeros);
        Self { w, b, d_in, d_out }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> Mat {
        debug_assert_eq!(x.cols, self.d_in);
        let w = ps.get(self.w);
        let b = ps.get(self.b);
        let mut y = Mat::zeros(x.rows, self.d_out);
        for r in 0..x.rows {
            let xr = x.row(r);
            let yr = y.row_mut(r);
            for o in 0..self.d_out {
                yr[o] = b[o] + dot(&w[o * self.d_in..(o + 1) * self.d_in], xr);
            }
        }
        y
    }

    pub fn forward_vec(&self, ps: &ParamSet, x: &[f64]) -> Vec<f64> {
        self.forward(ps, &Mat::from_vec(1, x.len(), x.to_vec())).data
    }

    pub fn backward(&self, ps: &ParamSet, x: &Mat, dy: &Mat, g: &mut Grads) -> Mat {
        let w = ps.get(self.w);
        let mut dx = Mat::zeros(x.rows, self.d_in);
        for r in 0..x.rows {
            let dyr = dy.row(r);
            let dxr = dx.row_mut(r);
            for o in 0..self.d_out {
                axpy(dxr, dyr[o], &w[o * self.d_in..(o + 1) * self.d_in]);
            }
        }
        {
            let gw = g.get_mut(self.w);
            for r in 0..x.rows {
                let xr = x.row(r);
                let dyr = dy.row(r);
                for o in 0..self.d_out {
                    axpy(&mut gw[o * self.d_in..(o + 1) * self.d_in], dyr[o], xr);
                }
            }
        }
        let gb = g.get_mut(self.b);
        for r in 0..x.rows {
            axpy(gb, 1.0, dy.row(r));
        }
        dx
    }
}

/// Row-wise softmax.
pub fn softmax_rows(s: &mut Mat) {
    for r in 0..s.rows {
        let row = s.row_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_coefficients() {
        assert_eq!(binomial_kernel(1), vec![1.0]);
        assert_eq!(binomial_kernel(2), vec![0.25, 0.5, 0.25]);
        let k4 = binomial_kernel(4);
        let want: Vec<f64> = [1., 6., 15., 20., 15., 6., 1.].iter().map(|v| v / 64.0).collect();
        assert_eq!(k4, want);
        assert!((k4.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lowpass_passes_dc_and_shows_impulse_response() {
        let lp = LowpassDecimate::new(4);
        let x = Mat::from_vec(2, 37, vec![0.75; 74]);
        let y = lp.forward(&x);
        assert_eq!(y.cols, 10);
        assert!(y.data.iter().all(|v| (v - 0.75).abs() < 1e-15));
        // Impulse at position 3 + 4m lands on output m's taps.
        let mut imp = Mat::zeros(1, 64);
        imp.data[32] = 1.0;
        let resp: Vec<f64> = (0..64)
            .map(|shift| {
                let mut e = Mat::zeros(1, 64);
                e.data[(32 + shift) % 64] = 1.0;
                lp.forward(&e).data[8]
            })
            .collect();
        // Output 8 reads inputs 29..=35.
        let taps: Vec<f64> = (61..64).chain(0..4).map(|s| resp[s]).collect();
        assert_eq!(taps, binomial_kernel(4));
        let _ = imp;
    }

    #[test]
    fn conv_matches_direct_formula() {
        let mut ps = ParamSet::new(3, true);
        let conv = Conv1d::new(&mut ps, "c", 2, 3, 5, 2, false);
        let x = Mat::from_vec(2, 11, (0..22).map(|v| (v as f64 * 0.37).sin()).collect());
        let y = conv.forward(&ps, &x);
        let w = ps.get(conv.w);
        for o in 0..3 {
            for t in 0..11isize {
                let mut acc = 0.0;
                for i in 0..2 {
                    for k in 0..5isize {
                        let src = t + 2 * k - 4;
                        if (0..11).contains(&src) {
                            acc += w[(o * 2 + i) * 5 + k as usize] * x.at(i, src as usize);
                        }
                    }
                }
                assert!((acc - y.at(o, t as usize)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut m = Mat::from_vec(3, 4, (0..12).map(|v| (v as f64 * 1.7).cos() * 30.0).collect());
        softmax_rows(&mut m);
        for r in 0..3 {
            assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
