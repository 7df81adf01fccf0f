//! Seeded noise generators: five power-law colors shaped in the frequency
//! domain, amplitude-uniform noise, and STFT phase noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from;
use crate::signal::{self, ComplexSpectrogram, StftConfig, Waveform};
use crate::{Error, Result};

/// Shortest signal that colored noise can be shaped for.
pub const MIN_COLORED_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    Blue,
    Pink,
    Violet,
    Red,
    Uniform,
    Phase,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 7] =
        [NoiseKind::White, NoiseKind::Blue, NoiseKind::Pink, NoiseKind::Violet, NoiseKind::Red, NoiseKind::Uniform, NoiseKind::Phase];

    /// Power spectral density exponent α (PSD ∝ f^α) for the colored kinds.
    pub fn spectral_exponent(self) -> Option<f64> {
        match self {
            NoiseKind::White => Some(0.0),
            NoiseKind::Blue => Some(1.0),
            NoiseKind::Pink => Some(-1.0),
            NoiseKind::Violet => Some(2.0),
            NoiseKind::Red => Some(-2.0),
            NoiseKind::Uniform | NoiseKind::Phase => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Blue => "blue",
            NoiseKind::Pink => "pink",
            NoiseKind::Violet => "violet",
            NoiseKind::Red => "red",
            NoiseKind::Uniform => "uniform",
            NoiseKind::Phase => "phase",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::InvalidParameter(format!("unknown noise kind `{s}`")))
    }
}

fn normalize_rms(x: &mut [f64]) {
    let r = signal::rms(x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v /= r);
    }
}

/// Zero-mean, unit-RMS noise with PSD ∝ f^α, made by scaling the spectrum of
/// white Gaussian noise by f^(α/2) with the DC bin removed.
pub fn colored_noise(kind: NoiseKind, length: usize, sample_rate: u32, seed: u64) -> Result<Waveform> {
    let alpha =
        kind.spectral_exponent().ok_or_else(|| Error::InvalidParameter(format!("{} noise has no spectral exponent", kind.name())))?;
    if length < MIN_COLORED_LEN {
        return Err(Error::InvalidParameter(format!("colored noise needs at least {MIN_COLORED_LEN} samples, got {length}")));
    }
    let mut rng = rng_from(seed, &[0x636f_6c6f, alpha.to_bits()]);
    let mut buf: Vec<Complex64> = (0..length).map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(length).process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for k in 1..length {
        let f = k.min(length - k) as f64;
        buf[k] *= f.powf(alpha / 2.0);
    }
    planner.plan_fft_inverse(length).process(&mut buf);
    let mut samples: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = samples.iter().sum::<f64>() / length as f64;
    samples.iter_mut().for_each(|v| *v -= mean);
    normalize_rms(&mut samples);
    Waveform::new(samples, sample_rate)
}

/// I.i.d. uniform samples on [−1, 1], rescaled to unit RMS.
pub fn uniform_noise(length: usize, sample_rate: u32, seed: u64) -> Result<Waveform> {
    if length == 0 {
        return Err(Error::InvalidParameter("noise length must be positive".into()));
    }
    let mut rng = rng_from(seed, &[0x756e_6966]);
    let mut samples: Vec<f64> = (0..length).map(|_| rng.random_range(-1.0..=1.0)).collect();
    normalize_rms(&mut samples);
    Waveform::new(samples, sample_rate)
}

/// Any additive noise kind except [`NoiseKind::Phase`], which is not additive.
pub fn generate(kind: NoiseKind, length: usize, sample_rate: u32, seed: u64) -> Result<Waveform> {
    match kind {
        NoiseKind::Uniform => uniform_noise(length, sample_rate, seed),
        NoiseKind::Phase => Err(Error::InvalidParameter("phase noise perturbs a signal; use phase_noise".into())),
        _ => colored_noise(kind, length, sample_rate, seed),
    }
}

/// `|X|·e^{j(φ+ε)}` with ε ~ N(0, strength²) drawn independently per bin.
pub fn phase_noise_spectrogram(x: &Waveform, strength: f64, seed: u64, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if !(strength >= 0.0) || !strength.is_finite() {
        return Err(Error::InvalidParameter(format!("phase noise strength {strength} must be >= 0")));
    }
    let mut spec = signal::stft(x, cfg)?;
    if strength == 0.0 {
        return Ok(spec);
    }
    let mut rng = rng_from(seed, &[0x7068_6173]);
    for c in spec.as_mut_slice() {
        let eps: f64 = StandardNormal.sample(&mut rng);
        *c = Complex64::from_polar(c.norm(), signal::phase_of(*c) + strength * eps);
    }
    Ok(spec)
}

/// Phase-perturbed resynthesis of `x`; same length and rate.
pub fn phase_noise(x: &Waveform, strength: f64, seed: u64, cfg: &StftConfig) -> Result<Waveform> {
    let spec = phase_noise_spectrogram(x, strength, seed, cfg)?;
    signal::istft(&spec, x.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Welch PSD (Hann, 50% overlap) followed by a least-squares fit of
    /// log10 PSD against log10 frequency. Independent of the generator.
    pub(crate) fn welch_slope(x: &[f64], seg: usize) -> f64 {
        let w = signal::hann(seg);
        let mut psd = vec![0.0; seg / 2 + 1];
        let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
        let mut start = 0;
        while start + seg <= x.len() {
            let mut buf: Vec<Complex64> = (0..seg).map(|i| Complex64::new(x[start + i] * w[i], 0.0)).collect();
            fft.process(&mut buf);
            for (p, c) in psd.iter_mut().zip(&buf) {
                *p += c.norm_sqr();
            }
            start += seg / 2;
        }
        let pts: Vec<(f64, f64)> = (4..seg / 2).map(|k| ((k as f64).log10(), psd[k].log10())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn colored_slopes() {
        for (kind, want) in [(NoiseKind::White, 0.0), (NoiseKind::Pink, -1.0), (NoiseKind::Violet, 2.0)] {
            let x = colored_noise(kind, 65536, 22050, 11).unwrap();
            let slope = welch_slope(&x.samples, 4096);
            assert!((slope - want).abs() < 0.3, "{kind:?}: slope {slope}");
        }
    }

    #[test]
    fn colored_is_unit_rms_zero_mean_and_deterministic() {
        for kind in [NoiseKind::White, NoiseKind::Blue, NoiseKind::Pink, NoiseKind::Violet, NoiseKind::Red] {
            let a = colored_noise(kind, 4096, 16000, 5).unwrap();
            let b = colored_noise(kind, 4096, 16000, 5).unwrap();
            assert_eq!(a, b);
            assert!((a.rms() - 1.0).abs() < 1e-12);
            assert!(a.samples.iter().sum::<f64>().abs() < 1e-9);
            assert_ne!(a, colored_noise(kind, 4096, 16000, 6).unwrap());
        }
        assert!(colored_noise(NoiseKind::Pink, 255, 16000, 0).is_err());
        assert!(colored_noise(NoiseKind::Uniform, 1024, 16000, 0).is_err());
    }

    #[test]
    fn uniform_statistics() {
        let x = uniform_noise(65536, 16000, 3).unwrap();
        let mean = x.samples.iter().sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.02);
        assert!((x.rms() - 1.0).abs() < 1e-6);
        assert!(x.samples.iter().all(|v| v.abs() <= 3f64.sqrt() * 1.01));
        assert_eq!(x, uniform_noise(65536, 16000, 3).unwrap());
        assert!(uniform_noise(0, 16000, 3).is_err());
    }

    fn tone(len: usize, f: f64, rate: u32) -> Waveform {
        Waveform::new((0..len).map(|i| (2.0 * PI * f * i as f64 / rate as f64).sin()).collect(), rate).unwrap()
    }

    #[test]
    fn zero_strength_is_plain_round_trip() {
        let cfg = StftConfig::default();
        let x = tone(8000, 440.0, 22050);
        let y = phase_noise(&x, 0.0, 1, &cfg).unwrap();
        let rt = signal::istft(&signal::stft(&x, &cfg).unwrap(), 22050).unwrap();
        assert_eq!(y, rt);
    }

    #[test]
    fn magnitude_is_untouched_before_resynthesis() {
        let cfg = StftConfig::default();
        let x = tone(8000, 440.0, 22050);
        let clean = signal::stft(&x, &cfg).unwrap();
        let noisy = phase_noise_spectrogram(&x, 1.3, 2, &cfg).unwrap();
        for (a, b) in clean.as_slice().iter().zip(noisy.as_slice()) {
            assert!((a.norm() - b.norm()).abs() <= 1e-12 * a.norm().max(1e-300));
        }
        let y = phase_noise(&x, 1.3, 2, &cfg).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(phase_noise(&x, -0.1, 2, &cfg).is_err());
    }

    /// With near-uniform random phases each frame becomes incoherent with
    /// its neighbours, so Hann² overlap-add keeps roughly mean(w²)/Σw² of the
    /// power: (3/8)/(3/2) = 1/4 for 75% overlap. Measured across seeds.
    #[test]
    fn strength_pi_energy_after_overlap_add() {
        let cfg = StftConfig::default();
        let x = tone(44100, 440.0, 22050);
        let e_in: f64 = x.samples.iter().map(|v| v * v).sum();
        let mut ratios = Vec::new();
        for seed in 0..6 {
            let y = phase_noise(&x, PI, seed, &cfg).unwrap();
            ratios.push(y.samples.iter().map(|v| v * v).sum::<f64>() / e_in);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 0.25).abs() < 0.05, "mean energy ratio {mean}, {ratios:?}");
        // Small strength keeps most of the coherent energy.
        let y = phase_noise(&x, 0.1, 0, &cfg).unwrap();
        let r = y.samples.iter().map(|v| v * v).sum::<f64>() / e_in;
        assert!(r > 0.95 && r < 1.05, "ratio {r}");
    }

    #[test]
    fn kind_parsing() {
        for k in NoiseKind::ALL {
            assert_eq!(k.name().parse::<NoiseKind>().unwrap(), k);
        }
        assert!("brown".parse::<NoiseKind>().is_err());
    }
}
