//! Label-mixing augmentations: gain-normalized mixup, timemix, FreqMix and
//! PhaseMix. All take two [`LabeledSample`]s of equal length and rate and
//! return one sample whose label is a convex combination of the inputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::signal::{self, ComplexSpectrogram, RealSpectrogram, StftConfig, Waveform};
use crate::{Error, Result};

/// A waveform with a label distribution over `C` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub waveform: Waveform,
    pub label: Vec<f64>,
}

impl LabeledSample {
    pub fn new(waveform: Waveform, label: Vec<f64>) -> Result<Self> {
        if label.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("label entries must lie in [0, 1]".into()));
        }
        Ok(Self { waveform, label })
    }

    /// One-hot label for class `class` of `num_classes`.
    pub fn one_hot(waveform: Waveform, class: usize, num_classes: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::InvalidParameter(format!("class {class} >= {num_classes}")));
        }
        let mut label = vec![0.0; num_classes];
        label[class] = 1.0;
        Ok(Self { waveform, label })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixKind {
    Mixup,
    Timemix,
    Freqmix,
    Phasemix,
}

impl MixKind {
    pub const ALL: [MixKind; 4] = [MixKind::Mixup, MixKind::Timemix, MixKind::Freqmix, MixKind::Phasemix];

    pub fn name(self) -> &'static str {
        match self {
            MixKind::Mixup => "mixup",
            MixKind::Timemix => "timemix",
            MixKind::Freqmix => "freqmix",
            MixKind::Phasemix => "phasemix",
        }
    }

    /// Admissible mixing ratios.
    pub fn lambda_range(self) -> (f64, f64) {
        match self {
            MixKind::Freqmix => (0.5, 1.0),
            _ => (0.0, 1.0),
        }
    }
}

impl std::str::FromStr for MixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MixKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::InvalidParameter(format!("unknown mixing kind `{s}`")))
    }
}

/// Realized mixing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    pub kind: MixKind,
    pub lambda: f64,
    /// Band-order coin of FreqMix; ignored by the other kinds.
    pub p: f64,
}

impl MixParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.kind.lambda_range();
        if !(lo..=hi).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("{}: lambda {} outside [{lo}, {hi}]", self.kind.name(), self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!("p {} outside [0, 1]", self.p)));
        }
        Ok(())
    }

    /// λ ~ U[range of kind], p ~ U[0, 1].
    pub fn draw<R: Rng + ?Sized>(kind: MixKind, rng: &mut R) -> Self {
        let (lo, hi) = kind.lambda_range();
        let lambda = rng.random_range(lo..=hi);
        let p = rng.random_range(0.0..=1.0);
        Self { kind, lambda, p }
    }

    /// Weight that the mixed label puts on the first sample.
    pub fn label_weight(&self) -> f64 {
        match self.kind {
            MixKind::Phasemix => 0.5 * self.lambda + 0.5,
            _ => self.lambda,
        }
    }
}

fn check_pair(a: &LabeledSample, b: &LabeledSample) -> Result<()> {
    if a.waveform.len() != b.waveform.len() {
        return Err(Error::LengthMismatch(a.waveform.len(), b.waveform.len()));
    }
    if a.waveform.sample_rate != b.waveform.sample_rate {
        return Err(Error::RateMismatch(a.waveform.sample_rate, b.waveform.sample_rate));
    }
    if a.label.len() != b.label.len() {
        return Err(Error::Shape(format!("label sizes {} vs {}", a.label.len(), b.label.len())));
    }
    Ok(())
}

fn unit_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// `w·y1 + (1 − w)·y2`.
pub fn mix_labels(y1: &[f64], y2: &[f64], w: f64) -> Vec<f64> {
    y1.iter().zip(y2).map(|(a, b)| w * a + (1.0 - w) * b).collect()
}

/// Effective first-sample weight of gain-normalized mixup:
/// `q = 1 / (1 + 10^((G1 − G2)/20) · (1 − λ)/λ)`.
pub fn mixup_weight(lambda: f64, gain1_db: f64, gain2_db: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    1.0 / (1.0 + 10f64.powf((gain1_db - gain2_db) / 20.0) * (1.0 - lambda) / lambda)
}

/// Amplitude mixing with the ratio corrected for the two samples' gains and
/// the result renormalized by `sqrt(q² + (1 − q)²)`.
pub fn mixup(a: &LabeledSample, b: &LabeledSample, lambda: f64) -> Result<LabeledSample> {
    check_pair(a, b)?;
    unit_lambda(lambda)?;
    let q = mixup_weight(lambda, signal::gain_db(&a.waveform), signal::gain_db(&b.waveform));
    let norm = (q * q + (1.0 - q) * (1.0 - q)).sqrt();
    let samples = a.waveform.samples.iter().zip(&b.waveform.samples).map(|(x1, x2)| (q * x1 + (1.0 - q) * x2) / norm).collect();
    Ok(LabeledSample { waveform: a.waveform.with_samples(samples), label: mix_labels(&a.label, &b.label, lambda) })
}

/// Replaces `[start, start + len)` of the first sample by the second.
pub fn timemix_at(a: &LabeledSample, b: &LabeledSample, lambda: f64, start: usize) -> Result<LabeledSample> {
    check_pair(a, b)?;
    unit_lambda(lambda)?;
    let n = a.waveform.len();
    let seg = timemix_segment_len(n, lambda);
    if start + seg > n {
        return Err(Error::InvalidParameter(format!("segment {start}+{seg} exceeds {n}")));
    }
    let mut samples = a.waveform.samples.clone();
    samples[start..start + seg].copy_from_slice(&b.waveform.samples[start..start + seg]);
    Ok(LabeledSample { waveform: a.waveform.with_samples(samples), label: mix_labels(&a.label, &b.label, lambda) })
}

pub fn timemix_segment_len(len: usize, lambda: f64) -> usize {
    (((1.0 - lambda) * len as f64).round() as usize).min(len)
}

/// 1-D cutmix: a segment of `round((1 − λ)·len)` samples at a uniform
/// position comes from the second sample.
pub fn timemix<R: Rng + ?Sized>(a: &LabeledSample, b: &LabeledSample, lambda: f64, rng: &mut R) -> Result<LabeledSample> {
    unit_lambda(lambda)?;
    let n = a.waveform.len();
    let seg = timemix_segment_len(n, lambda);
    let start = rng.random_range(0..=n - seg);
    timemix_at(a, b, lambda, start)
}

/// FreqMix before resynthesis: the spliced spectrogram and which bins came
/// from each source.
#[derive(Debug, Clone)]
pub struct FreqMixParts {
    pub spectrogram: ComplexSpectrogram,
    pub cutoff_bins: usize,
    pub first_bins: std::ops::Range<usize>,
    pub second_bins: std::ops::Range<usize>,
}

/// `k_c = floor(λ · n_bins)`; the first sample always contributes `k_c` bins.
pub fn freqmix_cutoff(lambda: f64, n_bins: usize) -> usize {
    ((lambda * n_bins as f64).floor() as usize).min(n_bins)
}

/// Splices the one-sided spectra. For `p ≤ 0.5` the first sample supplies the
/// low band `[0, k_c)`; otherwise it supplies the high band `[n_bins − k_c, n_bins)`.
pub fn freqmix_spectrogram(x1: &Waveform, x2: &Waveform, lambda: f64, p: f64, cfg: &StftConfig) -> Result<FreqMixParts> {
    if x1.len() != x2.len() {
        return Err(Error::LengthMismatch(x1.len(), x2.len()));
    }
    MixParams { kind: MixKind::Freqmix, lambda, p }.validate()?;
    let s1 = signal::stft(x1, cfg)?;
    let s2 = signal::stft(x2, cfg)?;
    let n_bins = cfg.n_bins();
    let k_c = freqmix_cutoff(lambda, n_bins);
    let (first, second) = if p <= 0.5 { (0..k_c, k_c..n_bins) } else { (n_bins - k_c..n_bins, 0..n_bins - k_c) };
    let mut mixed = s2.clone();
    for l in 0..mixed.n_frames() {
        mixed.frame_mut(l)[first.clone()].copy_from_slice(&s1.frame(l)[first.clone()]);
    }
    Ok(FreqMixParts { spectrogram: mixed, cutoff_bins: k_c, first_bins: first, second_bins: second })
}

pub fn freqmix(a: &LabeledSample, b: &LabeledSample, lambda: f64, p: f64, cfg: &StftConfig) -> Result<LabeledSample> {
    check_pair(a, b)?;
    let parts = freqmix_spectrogram(&a.waveform, &b.waveform, lambda, p, cfg)?;
    Ok(LabeledSample {
        waveform: signal::istft(&parts.spectrogram, a.waveform.sample_rate)?,
        label: mix_labels(&a.label, &b.label, lambda),
    })
}

/// A spectrogram held as separate magnitude and phase fields.
#[derive(Debug, Clone)]
pub struct PolarSpectrogram {
    pub magnitude: RealSpectrogram,
    pub phase: RealSpectrogram,
    pub layout: ComplexSpectrogram,
}

impl PolarSpectrogram {
    pub fn to_complex(&self) -> Result<ComplexSpectrogram> {
        ComplexSpectrogram::from_polar(&self.magnitude, &self.phase, &self.layout)
    }
}

/// PhaseMix before resynthesis: `|X1|` with phases `λ·φ1 + (1 − λ)·φ2`,
/// interpolated linearly on principal values.
pub fn phasemix_polar(x1: &Waveform, x2: &Waveform, lambda: f64, cfg: &StftConfig) -> Result<PolarSpectrogram> {
    if x1.len() != x2.len() {
        return Err(Error::LengthMismatch(x1.len(), x2.len()));
    }
    unit_lambda(lambda)?;
    let s1 = signal::stft(x1, cfg)?;
    let s2 = signal::stft(x2, cfg)?;
    let magnitude = signal::magnitude(&s1);
    let mut phase = signal::phase(&s1);
    let phi2 = signal::phase(&s2);
    for (p, q) in phase.data.iter_mut().zip(&phi2.data) {
        *p = lambda * *p + (1.0 - lambda) * q;
    }
    Ok(PolarSpectrogram { magnitude, phase, layout: s1 })
}

pub fn phasemix(a: &LabeledSample, b: &LabeledSample, lambda: f64, cfg: &StftConfig) -> Result<LabeledSample> {
    check_pair(a, b)?;
    let polar = phasemix_polar(&a.waveform, &b.waveform, lambda, cfg)?;
    let spec = if lambda == 1.0 { polar.layout.clone() } else { polar.to_complex()? };
    let weight = 0.5 * lambda + 0.5;
    Ok(LabeledSample { waveform: signal::istft(&spec, a.waveform.sample_rate)?, label: mix_labels(&a.label, &b.label, weight) })
}

/// Applies realized parameters. `rng` only positions the timemix segment.
pub fn apply<R: Rng + ?Sized>(
    params: &MixParams,
    a: &LabeledSample,
    b: &LabeledSample,
    cfg: &StftConfig,
    rng: &mut R,
) -> Result<LabeledSample> {
    params.validate()?;
    match params.kind {
        MixKind::Mixup => mixup(a, b, params.lambda),
        MixKind::Timemix => timemix(a, b, params.lambda, rng),
        MixKind::Freqmix => freqmix(a, b, params.lambda, params.p, cfg),
        MixKind::Phasemix => phasemix(a, b, params.lambda, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::SeedableRng;

    fn sample(len: usize, seed: u64, class: usize, amp: f64) -> LabeledSample {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let w = Waveform::new((0..len).map(|_| amp * rng.random_range(-1.0..1.0)).collect(), 16000).unwrap();
        LabeledSample::one_hot(w, class, 3).unwrap()
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn mixup_weight_closed_form() {
        assert_eq!(mixup_weight(1.0, -3.0, -10.0), 1.0);
        assert_eq!(mixup_weight(0.5, -7.0, -7.0), 0.5);
        assert!((mixup_weight(0.5, 0.0, -20.0) - 1.0 / 11.0).abs() < 1e-12);
        assert_eq!(mixup_weight(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn mixup_endpoints_and_midpoint() {
        let a = sample(800, 1, 0, 0.5);
        let b = sample(800, 2, 2, 0.5);
        let m = mixup(&a, &b, 1.0).unwrap();
        assert_eq!(m.waveform, a.waveform);
        assert_eq!(m.label, a.label);
        let m = mixup(&a, &b, 0.0).unwrap();
        assert_eq!(m.waveform, b.waveform);
        // Equal gains: (x1 + x2)/√2.
        let b_same = LabeledSample { waveform: a.waveform.with_samples(a.waveform.samples.iter().rev().copied().collect()), ..b.clone() };
        let m = mixup(&a, &b_same, 0.5).unwrap();
        let want: Vec<f64> = a.waveform.samples.iter().zip(&b_same.waveform.samples).map(|(x, y)| (x + y) / 2f64.sqrt()).collect();
        assert!(max_err(&m.waveform.samples, &want) < 1e-15);
        assert_eq!(m.label, vec![0.5, 0.0, 0.5]);
        assert!(mixup(&a, &sample(700, 3, 1, 1.0), 0.5).is_err());
    }

    #[test]
    fn timemix_cases() {
        let a = sample(1000, 1, 0, 1.0);
        let b = sample(1000, 2, 1, 1.0);
        let mut rng = rng_from(5, &[]);
        assert_eq!(timemix(&a, &b, 1.0, &mut rng).unwrap().waveform, a.waveform);
        assert_eq!(timemix(&a, &b, 0.0, &mut rng).unwrap().waveform, b.waveform);
        let m = timemix(&a, &b, 0.7, &mut rng).unwrap();
        assert!((m.label[0] - 0.7).abs() < 1e-15 && (m.label[1] - 0.3).abs() < 1e-15);
        let from_b = (0..1000).filter(|&i| m.waveform.samples[i] == b.waveform.samples[i]).count();
        assert_eq!(from_b, 300);
    }

    #[test]
    fn freqmix_partition_and_energy() {
        let cfg = StftConfig::default();
        let a = sample(20000, 1, 0, 1.0);
        let b = sample(20000, 2, 1, 1.0);
        let s1 = signal::stft(&a.waveform, &cfg).unwrap();
        let s2 = signal::stft(&b.waveform, &cfg).unwrap();
        for p in [0.2, 0.8] {
            let parts = freqmix_spectrogram(&a.waveform, &b.waveform, 0.8, p, &cfg).unwrap();
            let k_c = parts.cutoff_bins;
            assert_eq!(k_c, (0.8 * 513.0f64).floor() as usize);
            assert_eq!(parts.first_bins.len(), k_c);
            assert_eq!(parts.first_bins.len() + parts.second_bins.len(), 513);
            let e1 = s1.band_energy(parts.first_bins.clone());
            let e2 = s2.band_energy(parts.second_bins.clone());
            assert!((parts.spectrogram.band_energy(parts.first_bins.clone()) - e1).abs() <= 1e-3 * e1);
            assert!((parts.spectrogram.band_energy(parts.second_bins.clone()) - e2).abs() <= 1e-3 * e2);
        }
        let half = freqmix_spectrogram(&a.waveform, &b.waveform, 0.5, 0.1, &cfg).unwrap();
        assert!((half.first_bins.len() as isize - half.second_bins.len() as isize).abs() <= 1);
        assert!(freqmix(&a, &b, 0.4, 0.1, &cfg).is_err());
    }

    #[test]
    fn freqmix_endpoint_recovers_first() {
        let cfg = StftConfig::default();
        let a = sample(5000, 1, 0, 1.0);
        let b = sample(5000, 2, 1, 1.0);
        let m = freqmix(&a, &b, 1.0, 0.3, &cfg).unwrap();
        assert!(max_err(&m.waveform.samples, &a.waveform.samples) < 1e-9);
        assert_eq!(m.label, a.label);
    }

    #[test]
    fn phasemix_magnitude_and_labels() {
        let cfg = StftConfig::default();
        let a = sample(5000, 1, 0, 1.0);
        let b = sample(5000, 2, 1, 1.0);
        let polar = phasemix_polar(&a.waveform, &b.waveform, 0.3, &cfg).unwrap();
        let mag1 = signal::magnitude(&signal::stft(&a.waveform, &cfg).unwrap());
        assert_eq!(polar.magnitude, mag1);
        let m = phasemix(&a, &b, 1.0, &cfg).unwrap();
        assert!(max_err(&m.waveform.samples, &a.waveform.samples) < 1e-9);
        assert_eq!(m.label, a.label);
        let m = phasemix(&a, &b, 0.0, &cfg).unwrap();
        assert_eq!(m.label, vec![0.5, 0.5, 0.0]);
        // λ = 0 keeps x1's magnitudes with x2's phases.
        let s2 = signal::stft(&b.waveform, &cfg).unwrap();
        let polar = phasemix_polar(&a.waveform, &b.waveform, 0.0, &cfg).unwrap();
        assert_eq!(polar.phase, signal::phase(&s2));
    }

    #[test]
    fn label_weights() {
        assert_eq!(MixParams { kind: MixKind::Phasemix, lambda: 0.0, p: 0.0 }.label_weight(), 0.5);
        assert_eq!(MixParams { kind: MixKind::Freqmix, lambda: 0.7, p: 0.0 }.label_weight(), 0.7);
        let mut rng = rng_from(1, &[]);
        for _ in 0..100 {
            let p = MixParams::draw(MixKind::Freqmix, &mut rng);
            assert!(p.lambda >= 0.5 && p.validate().is_ok());
        }
    }
}
