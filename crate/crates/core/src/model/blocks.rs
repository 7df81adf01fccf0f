//! Convolutional trunk blocks: anti-aliased downsampling and the residual
//! variants used between downsampling stages.

use super::layers::{gelu_backward, gelu_forward, ChannelNorm, Conv1d, DepthwiseConv1d, LowpassDecimate, NormCache};
use super::params::{Grads, ParamSet};
use super::tensor::Mat;

/// Learnable stride-1 convolution, fixed binomial low-pass, decimation.
#[derive(Debug, Clone)]
pub struct DownsampleBlock {
    pub conv: Conv1d,
    pub lowpass: LowpassDecimate,
}

#[derive(Debug, Clone)]
pub struct DownsampleCache {
    x: Mat,
    conv_len: usize,
}

impl DownsampleBlock {
    pub fn new(ps: &mut ParamSet, path: &str, c_in: usize, c_out: usize, kernel: usize, factor: usize) -> Self {
        Self { conv: Conv1d::new(ps, &format!("{path}.conv"), c_in, c_out, kernel, 1, false), lowpass: LowpassDecimate::new(factor) }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> (Mat, DownsampleCache) {
        let h = self.conv.forward(ps, x);
        let y = self.lowpass.forward(&h);
        (y, DownsampleCache { x: x.clone(), conv_len: h.cols })
    }

    pub fn backward(&self, ps: &ParamSet, cache: &DownsampleCache, dy: &Mat, g: &mut Grads) -> Mat {
        let dh = self.lowpass.backward(dy, cache.conv_len);
        self.conv.backward(ps, &cache.x, &dh, g)
    }
}

/// `x + pw2(gelu(pw1(dw(norm(x)))))`.
#[derive(Debug, Clone)]
pub struct ModifiedResidual {
    norm: ChannelNorm,
    dw: DepthwiseConv1d,
    pw1: Conv1d,
    pw2: Conv1d,
}

#[derive(Debug, Clone)]
pub struct ModifiedCache {
    norm: NormCache,
    n: Mat,
    d: Mat,
    h: Mat,
    a: Mat,
}

impl ModifiedResidual {
    pub fn new(ps: &mut ParamSet, path: &str, channels: usize, dw_kernel: usize, expansion: usize, zero_init: bool) -> Self {
        let hidden = channels * expansion;
        Self {
            norm: ChannelNorm::new(ps, &format!("{path}.norm"), channels),
            dw: DepthwiseConv1d::new(ps, &format!("{path}.dw"), channels, dw_kernel, 1),
            pw1: Conv1d::new(ps, &format!("{path}.pw1"), channels, hidden, 1, 1, false),
            pw2: Conv1d::new(ps, &format!("{path}.pw2"), hidden, channels, 1, 1, zero_init),
        }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> (Mat, ModifiedCache) {
        let (n, norm) = self.norm.forward(ps, x);
        let d = self.dw.forward(ps, &n);
        let h = self.pw1.forward(ps, &d);
        let a = gelu_forward(&h);
        let mut y = self.pw2.forward(ps, &a);
        y.add_assign(x);
        (y, ModifiedCache { norm, n, d, h, a })
    }

    pub fn backward(&self, ps: &ParamSet, c: &ModifiedCache, dy: &Mat, g: &mut Grads) -> Mat {
        let da = self.pw2.backward(ps, &c.a, dy, g);
        let dh = gelu_backward(&c.h, &da);
        let dd = self.pw1.backward(ps, &c.d, &dh, g);
        let dn = self.dw.backward(ps, &c.n, &dd, g);
        let mut dx = self.norm.backward(ps, &c.norm, &dn, g);
        dx.add_assign(dy);
        dx
    }
}

/// Ablation baseline: `x + conv2(gelu(conv1(norm(x))))` with kernel-3
/// full convolutions.
#[derive(Debug, Clone)]
pub struct PlainResidual {
    norm: ChannelNorm,
    conv1: Conv1d,
    conv2: Conv1d,
}

#[derive(Debug, Clone)]
pub struct PlainCache {
    norm: NormCache,
    n: Mat,
    h: Mat,
    a: Mat,
}

impl PlainResidual {
    pub fn new(ps: &mut ParamSet, path: &str, channels: usize, zero_init: bool) -> Self {
        Self {
            norm: ChannelNorm::new(ps, &format!("{path}.norm"), channels),
            conv1: Conv1d::new(ps, &format!("{path}.conv1"), channels, channels, 3, 1, false),
            conv2: Conv1d::new(ps, &format!("{path}.conv2"), channels, channels, 3, 1, zero_init),
        }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> (Mat, PlainCache) {
        let (n, norm) = self.norm.forward(ps, x);
        let h = self.conv1.forward(ps, &n);
        let a = gelu_forward(&h);
        let mut y = self.conv2.forward(ps, &a);
        y.add_assign(x);
        (y, PlainCache { norm, n, h, a })
    }

    pub fn backward(&self, ps: &ParamSet, c: &PlainCache, dy: &Mat, g: &mut Grads) -> Mat {
        let da = self.conv2.backward(ps, &c.a, dy, g);
        let dh = gelu_backward(&c.h, &da);
        let dn = self.conv1.backward(ps, &c.n, &dh, g);
        let mut dx = self.norm.backward(ps, &c.norm, &dn, g);
        dx.add_assign(dy);
        dx
    }
}

/// `x + pw(gelu(dconv(norm(x))))` where `dconv` is a dilated full convolution.
#[derive(Debug, Clone)]
pub struct DilatedResidual {
    norm: ChannelNorm,
    conv: Conv1d,
    pw: Conv1d,
}

#[derive(Debug, Clone)]
pub struct DilatedCache {
    norm: NormCache,
    n: Mat,
    h: Mat,
    a: Mat,
}

impl DilatedResidual {
    pub fn new(ps: &mut ParamSet, path: &str, channels: usize, kernel: usize, dilation: usize, zero_init: bool) -> Self {
        Self {
            norm: ChannelNorm::new(ps, &format!("{path}.norm"), channels),
            conv: Conv1d::new(ps, &format!("{path}.conv"), channels, channels, kernel, dilation, false),
            pw: Conv1d::new(ps, &format!("{path}.pw"), channels, channels, 1, 1, zero_init),
        }
    }

    pub fn dilation(&self) -> usize {
        self.conv.dilation
    }

    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> (Mat, DilatedCache) {
        let (n, norm) = self.norm.forward(ps, x);
        let h = self.conv.forward(ps, &n);
        let a = gelu_forward(&h);
        let mut y = self.pw.forward(ps, &a);
        y.add_assign(x);
        (y, DilatedCache { norm, n, h, a })
    }

    pub fn backward(&self, ps: &ParamSet, c: &DilatedCache, dy: &Mat, g: &mut Grads) -> Mat {
        let da = self.pw.backward(ps, &c.a, dy, g);
        let dh = gelu_backward(&c.h, &da);
        let dn = self.conv.backward(ps, &c.n, &dh, g);
        let mut dx = self.norm.backward(ps, &c.norm, &dn, g);
        dx.add_assign(dy);
        dx
    }
}

/// Any block that preserves shape.
#[derive(Debug, Clone)]
pub enum ResidualBlock {
    Modified(ModifiedResidual),
    Plain(PlainResidual),
    Dilated(DilatedResidual),
}

#[derive(Debug, Clone)]
pub enum ResidualCache {
    Modified(ModifiedCache),
    Plain(PlainCache),
    Dilated(DilatedCache),
}

impl ResidualBlock {
    pub fn forward(&self, ps: &ParamSet, x: &Mat) -> (Mat, ResidualCache) {
        match self {
            Self::Modified(b) => {
                let (y, c) = b.forward(ps, x);
                (y, ResidualCache::Modified(c))
            }
            Self::Plain(b) => {
                let (y, c) = b.forward(ps, x);
                (y, ResidualCache::Plain(c))
            }
            Self::Dilated(b) => {
                let (y, c) = b.forward(ps, x);
                (y, ResidualCache::Dilated(c))
            }
        }
    }

    pub fn backward(&self, ps: &ParamSet, cache: &ResidualCache, dy: &Mat, g: &mut Grads) -> Mat {
        match (self, cache) {
            (Self::Modified(b), ResidualCache::Modified(c)) => b.backward(ps, c, dy, g),
            (Self::Plain(b), ResidualCache::Plain(c)) => b.backward(ps, c, dy, g),
            (Self::Dilated(b), ResidualCache::Dilated(c)) => b.backward(ps, c, dy, g),
            _ => unreachable!("cache does not match block kind"),
        }
    }
}
