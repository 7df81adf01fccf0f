//! Training-time augmentation pipeline.
//!
//! Each batch element passes through three stages in a fixed order:
//!
//! 1. `preserve`: the configured label-preserving transforms, each applied
//!    with its own probability;
//! 2. `noise`: at most one noise type, drawn uniformly from the enabled kinds;
//! 3. `mix`: at most one mixing strategy, drawn uniformly from the enabled
//!    kinds, pairing the element with another element of the batch.
//!
//! Every stage draws from its own stream derived from `(seed, element,
//! stage)`, so enabling or disabling one stage never changes what another
//! stage draws. Every random choice is recorded in an [`ElementTrace`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentSpec, Realized, TransformKind};
use crate::error::{Error, Result};
use crate::mix::{self, LabeledSample, MixKind, MixParams};
use crate::noise::NoiseKind;
use crate::parallel::{self, Execution};
use crate::rng::{derive, rng_from};
use crate::signal::StftConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseStage {
    pub probability: f64,
    pub kinds: Vec<NoiseKind>,
    pub snr_db: [f64; 2],
}

impl Default for NoiseStage {
    fn default() -> Self {
        Self { probability: 0.5, kinds: NoiseKind::ALL.to_vec(), snr_db: [10.0, 40.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixStage {
    pub probability: f64,
    pub kinds: Vec<MixKind>,
    /// Fixes λ instead of drawing it.
    pub lambda: Option<f64>,
}

impl Default for MixStage {
    fn default() -> Self {
        Self { probability: 0.5, kinds: MixKind::ALL.to_vec(), lambda: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub transforms: Vec<AugmentSpec>,
    pub noise: NoiseStage,
    pub mix: MixStage,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            transforms: TransformKind::ALL.iter().map(|&k| AugmentSpec::default_for(k)).collect(),
            noise: NoiseStage::default(),
            mix: MixStage::default(),
        }
    }
}

impl PipelineConfig {
    /// No transform, no noise, no mixing.
    pub fn disabled() -> Self {
        Self {
            transforms: Vec::new(),
            noise: NoiseStage { probability: 0.0, kinds: Vec::new(), ..NoiseStage::default() },
            mix: MixStage { probability: 0.0, kinds: Vec::new(), lambda: None },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.transforms {
            t.validate()?;
        }
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} probability {p} outside [0, 1]")))
            }
        };
        prob("noise", self.noise.probability)?;
        prob("mix", self.mix.probability)?;
        let [lo, hi] = self.noise.snr_db;
        if !(0.0..=60.0).contains(&lo) || !(0.0..=60.0).contains(&hi) || lo > hi {
            return Err(Error::InvalidParameter(format!("noise SNR range [{lo}, {hi}] outside [0, 60]")));
        }
        if let Some(l) = self.mix.lambda {
            for k in &self.mix.kinds {
                MixParams { kind: *k, lambda: l, p: 0.0 }.validate()?;
            }
        }
        Ok(())
    }
}

/// Pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Preserve,
    Noise,
    Mix,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Preserve, Stage::Noise, Stage::Mix];

    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub kind: NoiseKind,
    pub snr_db: f64,
    pub realized_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixRecord {
    pub params: MixParams,
    pub partner: usize,
    pub label_weight: f64,
}

/// Everything the pipeline decided for one batch element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementTrace {
    pub index: usize,
    pub seed: u64,
    pub preserve: Vec<Realized>,
    pub noise: Option<NoiseRecord>,
    pub mix: Option<MixRecord>,
}

impl ElementTrace {
    /// Stages whose record differs between two traces of the same element.
    pub fn differing_stages(&self, other: &ElementTrace) -> Vec<Stage> {
        let mut out = Vec::new();
        if self.preserve != other.preserve {
            out.push(Stage::Preserve);
        }
        if self.noise != other.noise {
            out.push(Stage::Noise);
        }
        if self.mix != other.mix {
            out.push(Stage::Mix);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedBatch {
    pub samples: Vec<LabeledSample>,
    pub traces: Vec<ElementTrace>,
}

impl AugmentedBatch {
    /// True when at least one element was mixed, which switches the batch to
    /// the multi-label objective.
    pub fn any_mixed(&self) -> bool {
        self.traces.iter().any(|t| t.mix.is_some())
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    stft: StftConfig,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, stft: StftConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, stft })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn preserve_and_noise(&self, x: &LabeledSample, seed: u64) -> Result<(LabeledSample, Vec<Realized>, Option<NoiseRecord>)> {
        let mut w = x.waveform.clone();
        let mut rng = rng_from(seed, &[Stage::Preserve.stream()]);
        let mut realized = Vec::new();
        for spec in &self.cfg.transforms {
            if rng.random_bool(spec.probability) {
                let r = spec.draw(w.len(), w.sample_rate, &mut rng)?;
                w = r.apply(&w)?;
                realized.push(r);
            }
        }
        let mut rng = rng_from(seed, &[Stage::Noise.stream()]);
        let n = &self.cfg.noise;
        let mut record = None;
        if !n.kinds.is_empty() && rng.random_bool(n.probability) {
            let kind = n.kinds[rng.random_range(0..n.kinds.len())];
            let snr_db = rng.random_range(n.snr_db[0]..=n.snr_db[1]);
            let noise_seed = rng.random();
            let out = augment::add_noise_at(&w, kind, snr_db, noise_seed, &self.stft)?;
            w = out.waveform;
            record = Some(NoiseRecord { kind, snr_db, realized_snr_db: out.realized_snr_db });
        }
        Ok((LabeledSample { waveform: w, label: x.label.clone() }, realized, record))
    }

    fn mix(&self, stage1: &[LabeledSample], i: usize, seed: u64) -> Result<(LabeledSample, Option<MixRecord>)> {
        let m = &self.cfg.mix;
        let n = stage1.len();
        let mut rng = rng_from(seed, &[Stage::Mix.stream()]);
        if m.kinds.is_empty() || n < 2 || !rng.random_bool(m.probability) {
            return Ok((stage1[i].clone(), None));
        }
        let kind = m.kinds[rng.random_range(0..m.kinds.len())];
        let mut params = MixParams::draw(kind, &mut rng);
        if let Some(l) = m.lambda {
            params.lambda = l;
        }
        let partner = (i + 1 + rng.random_range(0..n - 1)) % n;
        let out = mix::apply(&params, &stage1[i], &stage1[partner], &self.stft, &mut rng)?;
        let record = MixRecord { params, partner, label_weight: params.label_weight() };
        Ok((out, Some(record)))
    }

    /// Augments a batch. `seed` identifies the batch; element `i` uses the
    /// streams derived from `(seed, i)`.
    pub fn run(&self, batch: &[LabeledSample], seed: u64, exec: Execution) -> Result<AugmentedBatch> {
        let seeds: Vec<u64> = (0..batch.len()).map(|i| derive(seed, &[i as u64])).collect();
        let stage1 = parallel::try_map(exec, batch.len(), |i| self.preserve_and_noise(&batch[i], seeds[i]))?;
        let (samples1, partial): (Vec<_>, Vec<_>) = stage1.into_iter().map(|(s, r, nz)| (s, (r, nz))).unzip();
        let mixed = parallel::try_map(exec, batch.len(), |i| self.mix(&samples1, i, seeds[i]))?;
        let mut samples = Vec::with_capacity(batch.len());
        let mut traces = Vec::with_capacity(batch.len());
        for (i, ((s, mix), (preserve, noise))) in mixed.into_iter().zip(partial).enumerate() {
            let trace = ElementTrace { index: i, seed: seeds[i], preserve, noise, mix };
            log::debug!("pipeline: {}", serde_json::to_string(&trace).unwrap_or_default());
            samples.push(s);
            traces.push(trace);
        }
        Ok(AugmentedBatch { samples, traces })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Waveform;

    fn batch(n: usize) -> Vec<LabeledSample> {
        (0..n)
            .map(|i| {
                let w = Waveform::new((0..4000).map(|t| (0.01 * (i + 1) as f64 * t as f64).sin() * 0.5).collect(), 16000).unwrap();
                LabeledSample::one_hot(w, i % 3, 3).unwrap()
            })
            .collect()
    }

    #[test]
    fn disabled_pipeline_is_identity() {
        let p = Pipeline::new(PipelineConfig::disabled(), StftConfig::default()).unwrap();
        let b = batch(5);
        let out = p.run(&b, 9, Execution::Sequential).unwrap();
        assert_eq!(out.samples, b);
        assert!(!out.any_mixed());
    }

    #[test]
    fn forced_unit_lambda_keeps_first_sample() {
        let mut cfg = PipelineConfig::disabled();
        cfg.mix = MixStage { probability: 1.0, kinds: vec![MixKind::Mixup, MixKind::Timemix], lambda: Some(1.0) };
        let p = Pipeline::new(cfg, StftConfig::default()).unwrap();
        let b = batch(4);
        let out = p.run(&b, 1, Execution::Sequential).unwrap();
        assert!(out.any_mixed());
        assert_eq!(out.samples, b);
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let p = Pipeline::new(PipelineConfig::default(), StftConfig::default()).unwrap();
        let b = batch(6);
        let a = p.run(&b, 42, Execution::Sequential).unwrap();
        let c = p.run(&b, 42, Execution::Parallel).unwrap();
        assert_eq!(a.samples, c.samples);
        assert_eq!(a.traces, c.traces);
        for s in &a.samples {
            assert_eq!(s.waveform.len(), 4000);
            assert!((s.label.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.noise.snr_db = [-5.0, 10.0];
        assert!(Pipeline::new(cfg, StftConfig::default()).is_err());
        let mut cfg = PipelineConfig::default();
        cfg.mix.lambda = Some(0.2);
        assert!(Pipeline::new(cfg, StftConfig::default()).is_err());
    }
}
