//! The EAT classifier: anti-aliased downsampling stages with residual
//! blocks, dilated residual stacks on the last stages, a transformer
//! encoder over the resulting frames, mean pooling and a linear head.
//!
//! Everything is double precision. Reverse-mode gradients are written out
//! layer by layer; each `forward` returns a cache that the matching
//! `backward` consumes.

pub mod blocks;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tensor;
pub mod transformer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{self, Execution};
use crate::signal::Waveform;
use crate::train::loss::Loss;

use blocks::{DilatedResidual, DownsampleBlock, DownsampleCache, ModifiedResidual, PlainResidual, ResidualBlock, ResidualCache};
use layers::{gelu_backward, gelu_forward, Conv1d, Linear};
use params::{Grads, Init, ParamId, ParamSet};
use tensor::Mat;
use transformer::{Encoder, EncoderStackCache};

pub use params::Param;

/// Residual block flavour used inside every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Depthwise large-kernel convolution followed by pointwise convolutions.
    Modified,
    /// Two full kernel-3 convolutions.
    Plain,
}

/// How frames are turned into a clip embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Transformer,
    /// Pointwise projection + GELU, then global average pooling.
    ConvPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EatConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    pub stem_kernel: usize,
    pub downsample_factors: Vec<usize>,
    pub down_kernel: usize,
    pub res_blocks_per_stage: usize,
    pub block: BlockKind,
    pub dw_kernel: usize,
    pub expansion: usize,
    /// Number of trailing stages that carry a dilated residual stack.
    pub dilated_stages: usize,
    pub dilations: Vec<usize>,
    pub dilation_kernel: usize,
    /// When false every dilation is replaced by 1.
    pub dilated: bool,
    pub aggregator: Aggregator,
    pub embed_dim: usize,
    pub transformer_layers: usize,
    pub transformer_heads: usize,
    pub mlp_ratio: usize,
    pub max_frames: usize,
    pub positional_embedding: bool,
    pub num_classes: usize,
    pub multi_label: bool,
    pub zero_init_residual: bool,
}

impl Default for EatConfig {
    fn default() -> Self {
        Self::eat_s(50)
    }
}

impl EatConfig {
    /// Small preset, about 5.4M parameters at 50 classes.
    pub fn eat_s(num_classes: usize) -> Self {
        Self {
            in_channels: 1,
            base_channels: 16,
            max_channels: 256,
            stem_kernel: 7,
            downsample_factors: vec![4, 4, 4, 4],
            down_kernel: 15,
            res_blocks_per_stage: 4,
            block: BlockKind::Modified,
            dw_kernel: 15,
            expansion: 4,
            dilated_stages: 2,
            dilations: vec![1, 3, 9],
            dilation_kernel: 3,
            dilated: true,
            aggregator: Aggregator::Transformer,
            embed_dim: 128,
            transformer_layers: 4,
            transformer_heads: 8,
            mlp_ratio: 4,
            max_frames: 1024,
            positional_embedding: true,
            num_classes,
            multi_label: false,
            zero_init_residual: true,
        }
    }

    /// Medium preset, about 23M parameters at 50 classes.
    pub fn eat_m(num_classes: usize) -> Self {
        Self {
            base_channels: 32,
            max_channels: 512,
            embed_dim: 256,
            transformer_layers: 6,
            transformer_heads: 16,
            ..Self::eat_s(num_classes)
        }
    }

    /// Reduced model for 1 s clips at 16 kHz; trains in minutes on a CPU.
    pub fn toy(num_classes: usize) -> Self {
        Self {
            in_channels: 1,
            base_channels: 8,
            max_channels: 32,
            stem_kernel: 5,
            downsample_factors: vec![8, 4, 4, 2],
            down_kernel: 3,
            res_blocks_per_stage: 1,
            block: BlockKind::Modified,
            dw_kernel: 9,
            expansion: 2,
            dilated_stages: 2,
            dilations: vec![1, 3, 9],
            dilation_kernel: 3,
            dilated: true,
            aggregator: Aggregator::Transformer,
            embed_dim: 32,
            transformer_layers: 2,
            transformer_heads: 4,
            mlp_ratio: 2,
            max_frames: 128,
            positional_embedding: true,
            num_classes,
            multi_label: false,
            zero_init_residual: true,
        }
    }

    /// Two stages, one transformer layer; small enough for exhaustive
    /// finite-difference checks on 1000-sample inputs.
    pub fn tiny(num_classes: usize) -> Self {
        Self {
            in_channels: 1,
            base_channels: 3,
            max_channels: 6,
            stem_kernel: 5,
            downsample_factors: vec![4, 4],
            down_kernel: 3,
            res_blocks_per_stage: 1,
            block: BlockKind::Modified,
            dw_kernel: 5,
            expansion: 2,
            dilated_stages: 1,
            dilations: vec![1, 3],
            dilation_kernel: 3,
            dilated: true,
            aggregator: Aggregator::Transformer,
            embed_dim: 8,
            transformer_layers: 1,
            transformer_heads: 2,
            mlp_ratio: 2,
            max_frames: 128,
            positional_embedding: true,
            num_classes,
            multi_label: false,
            zero_init_residual: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModelConfig(m));
        let positive = [
            ("in_channels", self.in_channels),
            ("base_channels", self.base_channels),
            ("max_channels", self.max_channels),
            ("stem_kernel", self.stem_kernel),
            ("down_kernel", self.down_kernel),
            ("dw_kernel", self.dw_kernel),
            ("expansion", self.expansion),
            ("dilation_kernel", self.dilation_kernel),
            ("embed_dim", self.embed_dim),
            ("transformer_heads", self.transformer_heads),
            ("mlp_ratio", self.mlp_ratio),
            ("max_frames", self.max_frames),
        ];
        for (name, v) in positive {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, k) in [
            ("stem_kernel", self.stem_kernel),
            ("down_kernel", self.down_kernel),
            ("dw_kernel", self.dw_kernel),
            ("dilation_kernel", self.dilation_kernel),
        ] {
            if k % 2 == 0 {
                return bad(format!("{name} must be odd, got {k}"));
            }
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if self.downsample_factors.is_empty() || self.downsample_factors.contains(&0) {
            return bad("downsample_factors must be a non-empty list of positive integers".into());
        }
        if self.dilated_stages > self.downsample_factors.len() {
            return bad(format!("dilated_stages {} exceeds the number of stages {}", self.dilated_stages, self.downsample_factors.len()));
        }
        if self.dilated_stages > 0 && (self.dilations.is_empty() || self.dilations.contains(&0)) {
            return bad("dilations must be a non-empty list of positive integers".into());
        }
        if self.aggregator == Aggregator::Transformer && !self.embed_dim.is_multiple_of(self.transformer_heads) {
            return bad(format!("embed_dim {} is not divisible by transformer_heads {}", self.embed_dim, self.transformer_heads));
        }
        Ok(())
    }

    /// Total time decimation `∏ dᵢ`.
    pub fn total_factor(&self) -> usize {
        self.downsample_factors.iter().product()
    }

    /// Output channels of each stage: doubling from `base_channels`, capped.
    pub fn stage_channels(&self) -> Vec<usize> {
        let mut c = self.base_channels;
        self.downsample_factors
            .iter()
            .map(|_| {
                c = (c * 2).min(self.max_channels);
                c
            })
            .collect()
    }

    /// Frames produced for an input of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        self.downsample_factors.iter().fold(len, |l, &d| l.div_ceil(d))
    }

    /// Dilations actually used by the dilated stacks.
    pub fn effective_dilations(&self) -> Vec<usize> {
        if self.dilated {
            self.dilations.clone()
        } else {
            vec![1; self.dilations.len()]
        }
    }

    /// Receptive field, in input samples, of the downsampling path alone
    /// (stem, learnable downsampling convolutions and the fixed filters).
    /// Shorter inputs are rejected.
    pub fn min_input_len(&self) -> usize {
        let mut rf = self.stem_kernel;
        let mut jump = 1;
        for &d in &self.downsample_factors {
            rf += (self.down_kernel - 1) * jump;
            rf += (2 * d - 2) * jump;
            jump *= d;
        }
        rf
    }

    /// Receptive field of one output frame in input samples, including every
    /// residual and dilated block.
    pub fn receptive_field(&self) -> usize {
        let mut rf = self.stem_kernel;
        let mut jump = 1;
        let n = self.downsample_factors.len();
        for (i, &d) in self.downsample_factors.iter().enumerate() {
            rf += (self.down_kernel - 1) * jump;
            rf += (2 * d - 2) * jump;
            jump *= d;
            let k = match self.block {
                BlockKind::Modified => self.dw_kernel,
                BlockKind::Plain => 5,
            };
            rf += self.res_blocks_per_stage * (k - 1) * jump;
            if i >= n - self.dilated_stages {
                rf += self.effective_dilations().iter().map(|dl| (self.dilation_kernel - 1) * dl).sum::<usize>() * jump;
            }
        }
        rf
    }

    /// Parameter count without allocating any parameters.
    pub fn param_count(&self) -> Result<usize> {
        self.validate()?;
        let mut ps = ParamSet::new(0, false);
        Network::build(self, &mut ps);
        Ok(ps.count())
    }
}

#[derive(Debug, Clone)]
struct Stage {
    down: DownsampleBlock,
    blocks: Vec<ResidualBlock>,
}

#[derive(Debug, Clone)]
enum AggregatorNet {
    Transformer(Encoder),
    ConvPool(Linear),
}

#[derive(Debug, Clone)]
struct Network {
    stem: Conv1d,
    stages: Vec<Stage>,
    proj: Conv1d,
    pos: Option<ParamId>,
    agg: AggregatorNet,
    head: Linear,
}

impl Network {
    fn build(cfg: &EatConfig, ps: &mut ParamSet) -> Self {
        let zero = cfg.zero_init_residual;
        let stem = Conv1d::new(ps, "stem", cfg.in_channels, cfg.base_channels, cfg.stem_kernel, 1, false);
        let chans = cfg.stage_channels();
        let n = chans.len();
        let mut c_prev = cfg.base_channels;
        let mut stages = Vec::with_capacity(n);
        for (i, (&c, &d)) in chans.iter().zip(&cfg.downsample_factors).enumerate() {
            let path = format!("stage{i}");
            let down = DownsampleBlock::new(ps, &format!("{path}.down"), c_prev, c, cfg.down_kernel, d);
            let mut blocks = Vec::new();
            for r in 0..cfg.res_blocks_per_stage {
                let bp = format!("{path}.res{r}");
                blocks.push(match cfg.block {
                    BlockKind::Modified => ResidualBlock::Modified(ModifiedResidual::new(ps, &bp, c, cfg.dw_kernel, cfg.expansion, zero)),
                    BlockKind::Plain => ResidualBlock::Plain(PlainResidual::new(ps, &bp, c, zero)),
                });
            }
            if i >= n - cfg.dilated_stages {
                for (j, &dl) in cfg.effective_dilations().iter().enumerate() {
                    let bp = format!("{path}.dil{j}");
                    blocks.push(ResidualBlock::Dilated(DilatedResidual::new(ps, &bp, c, cfg.dilation_kernel, dl, zero)));
                }
            }
            stages.push(Stage { down, blocks });
            c_prev = c;
        }
        let proj = Conv1d::new(ps, "proj", c_prev, cfg.embed_dim, 1, 1, false);
        let (pos, agg) = match cfg.aggregator {
            Aggregator::Transformer => {
                let pos = cfg.positional_embedding.then(|| ps.add("pos_embed", &[cfg.max_frames, cfg.embed_dim], Init::Normal(0.02)));
                let enc = Encoder::new(ps, "encoder", cfg.embed_dim, cfg.transformer_heads, cfg.mlp_ratio, cfg.transformer_layers);
                (pos, AggregatorNet::Transformer(enc))
            }
            Aggregator::ConvPool => (None, AggregatorNet::ConvPool(Linear::new(ps, "pool_proj", cfg.embed_dim, cfg.embed_dim, false))),
        };
        let head = Linear::new(ps, "head", cfg.embed_dim, cfg.num_classes, false);
        Self { stem, stages, proj, pos, agg, head }
    }
}

/// Per-example activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Mat,
    stem_pre: Mat,
    stages: Vec<(DownsampleCache, Vec<ResidualCache>)>,
    trunk_out: Mat,
    agg: AggCache,
    pooled: Mat,
}

#[derive(Debug, Clone)]
enum AggCache {
    Transformer(EncoderStackCache),
    ConvPool { frames: Mat, pre: Mat },
}

impl ForwardCache {
    /// Attention weights of each encoder layer (empty for the conv-pool
    /// aggregator).
    pub fn attention(&self) -> Vec<&[Mat]> {
        match &self.agg {
            AggCache::Transformer(c) => c.layers.iter().map(|l| l.attention()).collect(),
            AggCache::ConvPool { .. } => Vec::new(),
        }
    }
}

/// Scalar loss and one gradient tensor per parameter.
#[derive(Debug, Clone)]
pub struct ValueWithGrad {
    pub loss: f64,
    pub grads: Grads,
}

/// Samples per gradient accumulation chunk. Chunk boundaries are fixed, so
/// the reduction order and therefore the result do not depend on the
/// number of threads.
pub const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone)]
pub struct EatModel {
    cfg: EatConfig,
    params: ParamSet,
    net: Network,
}

impl EatModel {
    pub fn build(cfg: &EatConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new(seed, true);
        let net = Network::build(cfg, &mut params);
        Ok(Self { cfg: cfg.clone(), params, net })
    }

    pub fn config(&self) -> &EatConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Checks that a batch is rectangular, long enough and finite.
    pub fn check_batch(&self, inputs: &[Mat]) -> Result<()> {
        let first = inputs.first().ok_or(Error::EmptyInput)?;
        let len = first.cols;
        for x in inputs {
            if x.rows != self.cfg.in_channels {
                return Err(Error::Shape(format!("model expects {} input channels, got {}", self.cfg.in_channels, x.rows)));
            }
            if x.cols != len {
                return Err(Error::LengthMismatch(len, x.cols));
            }
            if let Some(i) = x.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(i));
            }
        }
        let min = self.cfg.min_input_len();
        if len < min {
            return Err(Error::InputTooShort { len, min });
        }
        let frames = self.cfg.frames_for(len);
        if self.net.pos.is_some() && frames > self.cfg.max_frames {
            return Err(Error::Shape(format!("{frames} frames exceed max_frames {} of the positional embedding", self.cfg.max_frames)));
        }
        Ok(())
    }

    /// Conv trunk only: `embed_dim × frames`.
    fn trunk(&self, x: &Mat) -> (Mat, Mat, Vec<(DownsampleCache, Vec<ResidualCache>)>) {
        let ps = &self.params;
        let stem_pre = self.net.stem.forward(ps, x);
        let mut h = gelu_forward(&stem_pre);
        let mut caches = Vec::with_capacity(self.net.stages.len());
        for st in &self.net.stages {
            let (y, dc) = st.down.forward(ps, &h);
            h = y;
            let mut rc = Vec::with_capacity(st.blocks.len());
            for b in &st.blocks {
                let (y, c) = b.forward(ps, &h);
                rc.push(c);
                h = y;
            }
            caches.push((dc, rc));
        }
        (stem_pre, h, caches)
    }

    fn forward_cached(&self, x: &Mat) -> (Vec<f64>, ForwardCache) {
        let ps = &self.params;
        let (stem_pre, h, stages) = self.trunk(x);
        let trunk_out = h.clone();
        let e = self.net.proj.forward(ps, &h);
        let mut frames = e.transpose();
        let n = frames.rows;
        let (out, agg) = match &self.net.agg {
            AggregatorNet::Transformer(enc) => {
                if let Some(pos) = self.net.pos {
                    let p = ps.get(pos);
                    tensor::axpy(&mut frames.data, 1.0, &p[..n * self.cfg.embed_dim]);
                }
                let (y, c) = enc.forward(ps, &frames);
                (y, AggCache::Transformer(c))
            }
            AggregatorNet::ConvPool(lin) => {
                let pre = lin.forward(ps, &frames);
                let y = gelu_forward(&pre);
                (y, AggCache::ConvPool { frames, pre })
            }
        };
        let d = self.cfg.embed_dim;
        let mut pooled = Mat::zeros(1, d);
        for r in 0..n {
            tensor::axpy(&mut pooled.data, 1.0 / n as f64, out.row(r));
        }
        let logits = self.net.head.forward(ps, &pooled).data;
        (logits, ForwardCache { input: x.clone(), stem_pre, stages, trunk_out, agg, pooled })
    }

    fn backward_cached(&self, c: &ForwardCache, dlogits: &[f64], g: &mut Grads) {
        let ps = &self.params;
        let d = self.cfg.embed_dim;
        let dl = Mat::from_vec(1, dlogits.len(), dlogits.to_vec());
        let dpooled = self.net.head.backward(ps, &c.pooled, &dl, g);
        let n = self.cfg.frames_for(c.input.cols);
        let mut dout = Mat::zeros(n, d);
        for r in 0..n {
            tensor::axpy(dout.row_mut(r), 1.0 / n as f64, &dpooled.data);
        }
        let dframes = match (&self.net.agg, &c.agg) {
            (AggregatorNet::Transformer(enc), AggCache::Transformer(ec)) => {
                let df = enc.backward(ps, ec, &dout, g);
                if let Some(pos) = self.net.pos {
                    tensor::axpy(&mut g.get_mut(pos)[..n * d], 1.0, &df.data);
                }
                df
            }
            (AggregatorNet::ConvPool(lin), AggCache::ConvPool { frames, pre }) => {
                let dpre = gelu_backward(pre, &dout);
                lin.backward(ps, frames, &dpre, g)
            }
            _ => unreachable!("aggregator cache mismatch"),
        };
        let de = dframes.transpose();
        let mut dh = self.net.proj.backward(ps, &c.trunk_out, &de, g);
        for (st, (dc, rc)) in self.net.stages.iter().zip(&c.stages).rev() {
            for (b, bc) in st.blocks.iter().zip(rc).rev() {
                dh = b.backward(ps, bc, &dh, g);
            }
            dh = st.down.backward(ps, dc, &dh, g);
        }
        let dstem = gelu_backward(&c.stem_pre, &dh);
        self.net.stem.backward(ps, &c.input, &dstem, g);
    }

    /// Logits for one `in_channels × len` input.
    pub fn forward_one(&self, x: &Mat) -> Result<Vec<f64>> {
        self.check_batch(std::slice::from_ref(x))?;
        Ok(self.forward_cached(x).0)
    }

    /// Logits plus every intermediate activation, for introspection.
    pub fn forward_with_cache(&self, x: &Mat) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_batch(std::slice::from_ref(x))?;
        Ok(self.forward_cached(x))
    }

    /// `B × C` logits.
    pub fn forward(&self, inputs: &[Mat], exec: Execution) -> Result<Mat> {
        self.check_batch(inputs)?;
        let rows = parallel::map(exec, inputs.len(), |i| self.forward_cached(&inputs[i]).0);
        let c = self.cfg.num_classes;
        Ok(Mat::from_vec(rows.len(), c, rows.concat()))
    }

    /// Frame sequence seen by the aggregator, `frames × embed_dim`, with the
    /// positional embedding added when enabled.
    pub fn frames(&self, x: &Mat) -> Result<Mat> {
        self.check_batch(std::slice::from_ref(x))?;
        let (_, h, _) = self.trunk(x);
        let mut f = self.net.proj.forward(&self.params, &h).transpose();
        if let Some(pos) = self.net.pos {
            let n = f.rows;
            tensor::axpy(&mut f.data, 1.0, &self.params.get(pos)[..n * self.cfg.embed_dim]);
        }
        Ok(f)
    }

    /// Mean loss over the batch and its exact gradient.
    pub fn value_and_grad(&self, inputs: &[Mat], targets: &[Vec<f64>], loss: Loss, exec: Execution) -> Result<ValueWithGrad> {
        self.check_batch(inputs)?;
        if targets.len() != inputs.len() {
            return Err(Error::LengthMismatch(inputs.len(), targets.len()));
        }
        for t in targets {
            if t.len() != self.cfg.num_classes {
                return Err(Error::Shape(format!("target has {} classes, model has {}", t.len(), self.cfg.num_classes)));
            }
        }
        let b = inputs.len();
        let n_chunks = b.div_ceil(GRAD_CHUNK);
        let parts = parallel::try_map(exec, n_chunks, |ci| -> Result<(f64, Grads)> {
            let mut g = Grads::zeros_like(&self.params);
            let mut total = 0.0;
            for i in ci * GRAD_CHUNK..((ci + 1) * GRAD_CHUNK).min(b) {
                let (logits, cache) = self.forward_cached(&inputs[i]);
                let (l, mut dz) = loss.value_grad(&logits, &targets[i])?;
                dz.iter_mut().for_each(|v| *v /= b as f64);
                total += l;
                self.backward_cached(&cache, &dz, &mut g);
            }
            Ok((total, g))
        })?;
        let mut iter = parts.into_iter();
        let (mut total, mut grads) = iter.next().expect("non-empty batch");
        for (l, g) in iter {
            total += l;
            grads.add_assign(&g);
        }
        let value = total / b as f64;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        Ok(ValueWithGrad { loss: value, grads })
    }
}

/// Stacks mono waveforms as `1 × len` inputs.
pub fn mono_inputs(batch: &[Waveform]) -> Vec<Mat> {
    batch.iter().map(|w| Mat::from_vec(1, w.len(), w.samples.clone())).collect()
}
