//! Label-preserving waveform transforms.
//!
//! Each transform has a deterministic form taking fully realized parameters
//! and a `random_*`/`draw` form that samples those parameters from an
//! [`AugmentSpec`]-style range. Every transform keeps length and sample rate.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::noise::{self, NoiseKind};
use crate::signal::{self, kaiser, sinc, StftConfig, Waveform};
use crate::{Error, Result};

/// Number of taps of the fractional-delay interpolator.
pub const FRACTIONAL_TAPS: usize = 32;
/// Length of the low/high-pass FIR.
pub const FILTER_TAPS: usize = 101;
/// μ for μ-law companding.
pub const MU: f64 = 255.0;
/// Phase-noise standard deviation used when phase noise is drawn as the
/// pipeline's noise type.
pub const DEFAULT_PHASE_NOISE_STD: f64 = 0.4;

// ---------------------------------------------------------------------------
// Amplitude

/// Scales the whole signal, or `fragment = Some((start, len))`, by `gain_db`.
pub fn apply_gain(x: &Waveform, gain_db: f64, fragment: Option<(usize, usize)>) -> Result<Waveform> {
    let g = 10f64.powf(gain_db / 20.0);
    let (start, len) = fragment.unwrap_or((0, x.len()));
    if start + len > x.len() {
        return Err(Error::InvalidParameter(format!("fragment {start}+{len} exceeds {}", x.len())));
    }
    let mut out = x.samples.clone();
    out[start..start + len].iter_mut().for_each(|v| *v *= g);
    Ok(x.with_samples(out))
}

/// Gain drawn uniformly in dB from `gain_range_db`; when `fragment` is set a
/// contiguous region covering 10–50% of the signal is chosen uniformly.
pub fn random_amplitude<R: Rng + ?Sized>(x: &Waveform, gain_range_db: [f64; 2], fragment: bool, rng: &mut R) -> Result<Waveform> {
    let (gain, frag) = draw_amplitude(x.len(), gain_range_db, fragment, rng)?;
    apply_gain(x, gain, frag)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

fn draw_amplitude<R: Rng + ?Sized>(
    len: usize,
    gain_range_db: [f64; 2],
    fragment: bool,
    rng: &mut R,
) -> Result<(f64, Option<(usize, usize)>)> {
    check_range("gain_db", gain_range_db, -30.0, 30.0)?;
    let gain = uniform(rng, gain_range_db);
    let frag = if fragment && len > 0 {
        let frac = rng.random_range(0.1..=0.5);
        let flen = ((frac * len as f64).round() as usize).clamp(1, len);
        let start = rng.random_range(0..=len - flen);
        Some((start, flen))
    } else {
        None
    };
    Ok((gain, frag))
}

fn check_range(name: &str, r: [f64; 2], lo: f64, hi: f64) -> Result<()> {
    if !(r[0] <= r[1]) || r[0] < lo || r[1] > hi {
        return Err(Error::InvalidParameter(format!("{name} range {r:?} must be ordered within [{lo}, {hi}]")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Time shift

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// Vacated samples are zero.
    Linear,
    /// Samples wrap around.
    Cyclic,
}

fn fractional_kernel(frac: f64) -> [f64; FRACTIONAL_TAPS] {
    // Taps m = -15..=16 around a delay of `frac` samples.
    let half = (FRACTIONAL_TAPS / 2) as f64;
    let mut h = [0.0; FRACTIONAL_TAPS];
    for (j, hj) in h.iter_mut().enumerate() {
        let m = j as f64 - (half - 1.0);
        let d = m - frac;
        *hj = sinc(d) * kaiser(d / (half + 0.5), 8.0);
    }
    h
}

/// Delays `x` by `shift` samples (negative advances). The integer part moves
/// samples by index; the fractional part is a 32-tap Kaiser-windowed sinc.
/// Cyclic shifts are taken modulo the length; linear shifts must satisfy
/// `|shift| < len`.
pub fn time_shift(x: &Waveform, shift: f64, mode: ShiftMode) -> Result<Waveform> {
    let len = x.len();
    if !shift.is_finite() {
        return Err(Error::InvalidParameter("shift must be finite".into()));
    }
    if len == 0 {
        return Ok(x.clone());
    }
    let shift = match mode {
        ShiftMode::Linear => {
            if shift.abs() >= len as f64 {
                return Err(Error::InvalidParameter(format!("|shift| {shift} must be < length {len}")));
            }
            shift
        }
        ShiftMode::Cyclic => shift.rem_euclid(len as f64),
    };
    let whole = shift.floor();
    let frac = shift - whole;
    let whole = whole as isize;
    let n = len as isize;
    let fetch = |i: isize| -> f64 {
        match mode {
            ShiftMode::Linear => {
                if (0..n).contains(&i) {
                    x.samples[i as usize]
                } else {
                    0.0
                }
            }
            ShiftMode::Cyclic => x.samples[i.rem_euclid(n) as usize],
        }
    };
    let out: Vec<f64> = if frac == 0.0 {
        (0..n).map(|i| fetch(i - whole)).collect()
    } else {
        let h = fractional_kernel(frac);
        let offset = (FRACTIONAL_TAPS / 2) as isize - 1;
        (0..n).map(|i| h.iter().enumerate().map(|(j, hj)| hj * fetch(i - whole - (j as isize - offset))).sum()).collect()
    };
    Ok(x.with_samples(out))
}

// ---------------------------------------------------------------------------
// Filtering

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    LowPass,
    HighPass,
}

/// Linear-phase FIR: Hamming-windowed sinc with unit DC gain for low-pass;
/// high-pass is the complementary `δ − h_lp`.
pub fn design_fir(kind: FilterKind, cutoff_hz: f64, sample_rate: u32) -> Result<Vec<f64>> {
    let nyq = sample_rate as f64 / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyq) {
        return Err(Error::InvalidParameter(format!("cutoff {cutoff_hz} Hz outside (0, {nyq})")));
    }
    let fc = cutoff_hz / sample_rate as f64;
    let mid = (FILTER_TAPS / 2) as f64;
    let mut h: Vec<f64> = (0..FILTER_TAPS)
        .map(|n| {
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (FILTER_TAPS - 1) as f64).cos();
            2.0 * fc * sinc(2.0 * fc * (n as f64 - mid)) * w
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    if kind == FilterKind::HighPass {
        h.iter_mut().for_each(|v| *v = -*v);
        h[FILTER_TAPS / 2] += 1.0;
    }
    Ok(h)
}

/// Applies the FIR with its group delay removed so output aligns with input.
pub fn filter(x: &Waveform, kind: FilterKind, cutoff_hz: f64) -> Result<Waveform> {
    let h = design_fir(kind, cutoff_hz, x.sample_rate)?;
    let delay = (FILTER_TAPS / 2) as isize;
    let n = x.len() as isize;
    let out = (0..n)
        .map(|i| {
            h.iter()
                .enumerate()
                .filter_map(|(j, hj)| {
                    let idx = i + delay - j as isize;
                    (0..n).contains(&idx).then(|| hj * x.samples[idx as usize])
                })
                .sum()
        })
        .collect();
    Ok(x.with_samples(out))
}

/// Filter with a cutoff drawn uniformly from `cutoff_range_hz`.
pub fn random_filter<R: Rng + ?Sized>(x: &Waveform, kind: FilterKind, cutoff_range_hz: [f64; 2], rng: &mut R) -> Result<Waveform> {
    let cutoff = uniform(rng, cutoff_range_hz);
    filter(x, kind, cutoff)
}

// ---------------------------------------------------------------------------
// Polarity, masking, quantization

pub fn invert_polarity(x: &Waveform) -> Waveform {
    x.with_samples(x.samples.iter().map(|v| -v).collect())
}

/// Zeroes `round(fraction·len)` contiguous samples starting at `start`.
pub fn apply_time_mask(x: &Waveform, start: usize, len: usize) -> Result<Waveform> {
    if start + len > x.len() {
        return Err(Error::InvalidParameter(format!("mask {start}+{len} exceeds {}", x.len())));
    }
    let mut out = x.samples.clone();
    out[start..start + len].iter_mut().for_each(|v| *v = 0.0);
    Ok(x.with_samples(out))
}

fn mask_extent<R: Rng + ?Sized>(len: usize, fraction: f64, rng: &mut R) -> Result<(usize, usize)> {
    if !(0.0..=0.5).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("mask fraction {fraction} outside [0, 0.5]")));
    }
    let mlen = (fraction * len as f64).round() as usize;
    let start = if mlen >= len { 0 } else { rng.random_range(0..=len - mlen) };
    Ok((start, mlen))
}

pub fn time_mask<R: Rng + ?Sized>(x: &Waveform, mask_fraction: f64, rng: &mut R) -> Result<Waveform> {
    let (start, len) = mask_extent(x.len(), mask_fraction, rng)?;
    apply_time_mask(x, start, len)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizeMode {
    MuLaw,
    Linear,
}

/// μ-law compressor, μ = 255.
pub fn mu_compress(x: f64) -> f64 {
    x.signum() * (1.0 + MU * x.abs()).ln() / (1.0 + MU).ln()
}

pub fn mu_expand(y: f64) -> f64 {
    y.signum() * ((1.0 + MU).powf(y.abs()) - 1.0) / MU
}

/// Mid-rise uniform quantizer on [−1, 1]: cell centers are −1 + (i + ½)·Δ.
fn quantize_uniform(v: f64, levels: usize) -> f64 {
    let delta = 2.0 / levels as f64;
    let idx = (((v + 1.0) / delta).floor() as isize).clamp(0, levels as isize - 1);
    -1.0 + (idx as f64 + 0.5) * delta
}

/// Quantizes to `levels` cells, either uniformly in amplitude or in the
/// μ-law companded domain. Inputs are clipped to [−1, 1] first.
pub fn quantize(x: &Waveform, mode: QuantizeMode, levels: usize) -> Result<Waveform> {
    if levels < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 levels, got {levels}")));
    }
    let out = x
        .samples
        .iter()
        .map(|&v| {
            let v = v.clamp(-1.0, 1.0);
            match mode {
                QuantizeMode::Linear => quantize_uniform(v, levels),
                QuantizeMode::MuLaw => mu_expand(quantize_uniform(mu_compress(v), levels)),
            }
        })
        .collect();
    Ok(x.with_samples(out))
}

// ---------------------------------------------------------------------------
// Additive noise

/// Result of [`add_noise`]. `realized_snr_db` is `None` when the input was
/// silent and returned unchanged.
#[derive(Debug, Clone)]
pub struct NoisyWaveform {
    pub waveform: Waveform,
    pub realized_snr_db: Option<f64>,
}

/// Adds unit-RMS noise of `kind` scaled to hit `snr_db` exactly. Phase noise
/// is not additive: it perturbs STFT phases with [`DEFAULT_PHASE_NOISE_STD`].
pub fn add_noise_at(x: &Waveform, kind: NoiseKind, snr_db: f64, seed: u64, stft: &StftConfig) -> Result<NoisyWaveform> {
    if !(0.0..=60.0).contains(&snr_db) {
        return Err(Error::InvalidParameter(format!("SNR {snr_db} dB outside [0, 60]")));
    }
    let level = x.rms();
    if level == 0.0 {
        log::warn!("add_noise: silent input, SNR undefined; returning input unchanged");
        return Ok(NoisyWaveform { waveform: x.clone(), realized_snr_db: None });
    }
    if kind == NoiseKind::Phase {
        let y = noise::phase_noise(x, DEFAULT_PHASE_NOISE_STD, seed, stft)?;
        return Ok(NoisyWaveform { waveform: y, realized_snr_db: None });
    }
    let len = x.len().max(noise::MIN_COLORED_LEN);
    let n = noise::generate(kind, len, x.sample_rate, seed)?;
    // Truncation can move the RMS slightly; renormalize on the used span.
    let used = &n.samples[..x.len()];
    let n_rms = signal::rms(used);
    let scale = level / 10f64.powf(snr_db / 20.0) / n_rms;
    let out: Vec<f64> = x.samples.iter().zip(used).map(|(a, b)| a + scale * b).collect();
    let realized = 20.0 * (level / (scale * n_rms)).log10();
    Ok(NoisyWaveform { waveform: x.with_samples(out), realized_snr_db: Some(realized) })
}

/// SNR drawn uniformly from `snr_db_range`.
pub fn add_noise<R: Rng + ?Sized>(x: &Waveform, kind: NoiseKind, snr_db_range: [f64; 2], rng: &mut R) -> Result<NoisyWaveform> {
    check_range("snr_db", snr_db_range, 0.0, 60.0)?;
    let snr = uniform(rng, snr_db_range);
    let seed = rng.random();
    add_noise_at(x, kind, snr, seed, &StftConfig::default())
}

// ---------------------------------------------------------------------------
// Specs and realized parameters

/// Names of the label-preserving transforms, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Amplitude,
    TimeShift,
    Filter,
    InvertPolarity,
    TimeMask,
    Quantize,
}

impl TransformKind {
    pub const ALL: [TransformKind; 6] = [
        TransformKind::Amplitude,
        TransformKind::TimeShift,
        TransformKind::Filter,
        TransformKind::InvertPolarity,
        TransformKind::TimeMask,
        TransformKind::Quantize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Amplitude => "amplitude",
            TransformKind::TimeShift => "time_shift",
            TransformKind::Filter => "filter",
            TransformKind::InvertPolarity => "invert_polarity",
            TransformKind::TimeMask => "time_mask",
            TransformKind::Quantize => "quantize",
        }
    }
}

/// Application probability and parameter ranges of one transform.
///
/// Ranges are two-element `[lo, hi]` arrays; which ones are read depends on
/// the transform. `variant_probability` selects the alternative form: fragment
/// vs whole (amplitude), cyclic vs linear (shift), high- vs low-pass
/// (filter), μ-law vs linear (quantize).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    pub name: TransformKind,
    pub probability: f64,
    #[serde(default)]
    pub range: [f64; 2],
    #[serde(default)]
    pub variant_probability: f64,
}

impl AugmentSpec {
    /// Defaults: probability 0.5 for every transform; amplitude ±6 dB; shift
    /// up to 10% of the length; cutoff 300 Hz – 6 kHz; mask 5–20%; 16–256
    /// quantization levels.
    pub fn default_for(name: TransformKind) -> Self {
        let (range, variant) = match name {
            TransformKind::Amplitude => ([-6.0, 6.0], 0.5),
            TransformKind::TimeShift => ([-0.1, 0.1], 0.5),
            TransformKind::Filter => ([300.0, 6000.0], 0.5),
            TransformKind::InvertPolarity => ([0.0, 0.0], 0.0),
            TransformKind::TimeMask => ([0.05, 0.2], 0.0),
            TransformKind::Quantize => ([16.0, 256.0], 0.5),
        };
        Self { name, probability: 0.5, range, variant_probability: variant }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) || !(0.0..=1.0).contains(&self.variant_probability) {
            return Err(Error::InvalidParameter(format!("{}: probabilities must lie in [0, 1]", self.name.name())));
        }
        let (lo, hi) = match self.name {
            TransformKind::Amplitude => (-30.0, 30.0),
            TransformKind::TimeShift => (-0.99, 0.99),
            TransformKind::Filter => (1.0, 1e6),
            TransformKind::InvertPolarity => (f64::NEG_INFINITY, f64::INFINITY),
            TransformKind::TimeMask => (0.0, 0.5),
            TransformKind::Quantize => (2.0, 65536.0),
        };
        check_range(self.name.name(), self.range, lo, hi)
    }

    /// Samples concrete parameters for a signal of `len` samples at `rate`.
    pub fn draw<R: Rng + ?Sized>(&self, len: usize, rate: u32, rng: &mut R) -> Result<Realized> {
        self.validate()?;
        let variant = rng.random_bool(self.variant_probability);
        Ok(match self.name {
            TransformKind::Amplitude => {
                let (gain_db, fragment) = draw_amplitude(len, self.range, variant, rng)?;
                Realized::Amplitude { gain_db, fragment }
            }
            TransformKind::TimeShift => Realized::TimeShift {
                shift: uniform(rng, self.range) * len as f64,
                mode: if variant { ShiftMode::Cyclic } else { ShiftMode::Linear },
            },
            TransformKind::Filter => {
                let nyq_guard = 0.45 * rate as f64;
                let hi = self.range[1].min(nyq_guard);
                let lo = self.range[0].min(hi);
                Realized::Filter {
                    kind: if variant { FilterKind::HighPass } else { FilterKind::LowPass },
                    cutoff_hz: uniform(rng, [lo, hi]),
                }
            }
            TransformKind::InvertPolarity => Realized::InvertPolarity,
            TransformKind::TimeMask => {
                let (start, len) = mask_extent(len, uniform(rng, self.range), rng)?;
                Realized::TimeMask { start, len }
            }
            TransformKind::Quantize => Realized::Quantize {
                mode: if variant { QuantizeMode::MuLaw } else { QuantizeMode::Linear },
                levels: uniform(rng, self.range).round() as usize,
            },
        })
    }
}

/// A transform with every random choice fixed; applying it is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Realized {
    Amplitude { gain_db: f64, fragment: Option<(usize, usize)> },
    TimeShift { shift: f64, mode: ShiftMode },
    Filter { kind: FilterKind, cutoff_hz: f64 },
    InvertPolarity,
    TimeMask { start: usize, len: usize },
    Quantize { mode: QuantizeMode, levels: usize },
}

impl Realized {
    pub fn apply(&self, x: &Waveform) -> Result<Waveform> {
        match *self {
            Realized::Amplitude { gain_db, fragment } => apply_gain(x, gain_db, fragment),
            Realized::TimeShift { shift, mode } => time_shift(x, shift, mode),
            Realized::Filter { kind, cutoff_hz } => filter(x, kind, cutoff_hz),
            Realized::InvertPolarity => Ok(invert_polarity(x)),
            Realized::TimeMask { start, len } => apply_time_mask(x, start, len),
            Realized::Quantize { mode, levels } => quantize(x, mode, levels),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::SeedableRng;

    fn tone(len: usize, f: f64, rate: u32) -> Waveform {
        Waveform::new((0..len).map(|i| (2.0 * PI * f * i as f64 / rate as f64).sin()).collect(), rate).unwrap()
    }

    fn noise_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.random_range(-0.9..0.9)).collect(), 16000).unwrap()
    }

    #[test]
    fn amplitude_cases() {
        let x = noise_wave(1000, 1);
        let mut rng = rng_from(0, &[]);
        assert_eq!(random_amplitude(&x, [0.0, 0.0], false, &mut rng).unwrap(), x);
        let doubled = apply_gain(&x, 20.0 * 2f64.log10(), None).unwrap();
        for (a, b) in doubled.samples.iter().zip(&x.samples) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
        let y = random_amplitude(&x, [3.0, 3.0], true, &mut rng).unwrap();
        let changed: Vec<usize> = (0..x.len()).filter(|&i| y.samples[i] != x.samples[i]).collect();
        let (first, last) = (changed[0], *changed.last().unwrap());
        assert!(last - first + 1 >= 100 && last - first < 500);
        for i in (0..first).chain(last + 1..x.len()) {
            assert_eq!(y.samples[i].to_bits(), x.samples[i].to_bits());
        }
        assert!(random_amplitude(&x, [-40.0, 0.0], false, &mut rng).is_err());
    }

    #[test]
    fn shift_integer_and_cyclic() {
        let x = noise_wave(64, 2);
        assert_eq!(time_shift(&x, 0.0, ShiftMode::Linear).unwrap(), x);
        assert_eq!(time_shift(&x, 64.0, ShiftMode::Cyclic).unwrap(), x);
        assert_eq!(time_shift(&x, 60.0, ShiftMode::Cyclic).unwrap(), time_shift(&x, -4.0, ShiftMode::Cyclic).unwrap());
        let y = time_shift(&x, 3.0, ShiftMode::Linear).unwrap();
        assert_eq!(&y.samples[..3], &[0.0; 3]);
        assert_eq!(&y.samples[3..], &x.samples[..61]);
        let z = time_shift(&x, -2.0, ShiftMode::Linear).unwrap();
        assert_eq!(&z.samples[..62], &x.samples[2..]);
        assert!(time_shift(&x, 64.0, ShiftMode::Linear).is_err());
        assert!(time_shift(&x, -64.5, ShiftMode::Linear).is_err());
    }

    /// Lag maximizing the cross-correlation, refined by a parabola through
    /// the peak and its neighbours.
    fn xcorr_lag(x: &[f64], y: &[f64], max_lag: isize) -> f64 {
        let n = x.len() as isize;
        let c = |lag: isize| -> f64 { (max_lag..n - max_lag).map(|i| x[i as usize] * y[(i + lag) as usize]).sum() };
        let (best, _) = (-max_lag + 1..max_lag).map(|l| (l, c(l))).max_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap();
        let (a, b, cc) = (c(best - 1), c(best), c(best + 1));
        best as f64 + 0.5 * (a - cc) / (a - 2.0 * b + cc)
    }

    #[test]
    fn fractional_shift_moves_half_sample() {
        // Band-limited: a few tones well below Nyquist.
        let rate = 16000;
        let x = Waveform::new(
            (0..4000)
                .map(|i| {
                    let t = i as f64 / rate as f64;
                    (2.0 * PI * 440.0 * t).sin() + 0.5 * (2.0 * PI * 1230.0 * t + 0.3).sin()
                })
                .collect(),
            rate,
        )
        .unwrap();
        let y = time_shift(&x, 0.5, ShiftMode::Cyclic).unwrap();
        let lag = xcorr_lag(&x.samples, &y.samples, 8);
        assert!((lag - 0.5).abs() < 0.05, "lag {lag}");
        let y = time_shift(&x, 7.25, ShiftMode::Linear).unwrap();
        let lag = xcorr_lag(&x.samples, &y.samples, 16);
        assert!((lag - 7.25).abs() < 0.05, "lag {lag}");
    }

    /// Magnitude response of an FIR at frequency `f` by direct summation.
    fn response(h: &[f64], f: f64, rate: f64) -> f64 {
        let w = 2.0 * PI * f / rate;
        let (re, im) =
            h.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &c)| (re + c * (w * n as f64).cos(), im - c * (w * n as f64).sin()));
        (re * re + im * im).sqrt()
    }

    #[test]
    fn filters_attenuate_and_pass() {
        let rate = 22050;
        let lp = design_fir(FilterKind::LowPass, 2000.0, rate).unwrap();
        assert!(response(&lp, 6000.0, rate as f64) < 0.05);
        assert!((response(&lp, 0.0, rate as f64) - 1.0).abs() < 1e-12);
        let x = tone(22050, 6000.0, rate);
        let interior = |w: &Waveform| signal::rms(&w.samples[200..w.len() - 200]);
        let low = filter(&x, FilterKind::LowPass, 2000.0).unwrap();
        assert!(interior(&low) < 0.05 * interior(&x));
        let high = filter(&x, FilterKind::HighPass, 2000.0).unwrap();
        assert!(interior(&high) > 0.9 * interior(&x));
        let sum: Vec<f64> = low.samples.iter().zip(&high.samples).map(|(a, b)| a + b).collect();
        let err: Vec<f64> = sum.iter().zip(&x.samples).map(|(a, b)| a - b).collect();
        assert!(signal::rms(&err) < 0.01 * x.rms());
        assert!(filter(&x, FilterKind::LowPass, 12000.0).is_err());
        assert!(filter(&x, FilterKind::HighPass, 0.0).is_err());
    }

    #[test]
    fn polarity_cases() {
        let x = noise_wave(100, 3);
        assert_eq!(invert_polarity(&invert_polarity(&x)), x);
        assert_eq!(invert_polarity(&Waveform::zeros(5, 8000)).samples, vec![-0.0; 5]);
        assert_eq!(invert_polarity(&x).rms(), x.rms());
    }

    #[test]
    fn mask_cases() {
        let x = Waveform::new(vec![1.0; 1000], 8000).unwrap();
        let mut rng = rng_from(4, &[]);
        assert_eq!(time_mask(&x, 0.0, &mut rng).unwrap(), x);
        let y = time_mask(&x, 0.25, &mut rng).unwrap();
        let zeros: Vec<usize> = (0..1000).filter(|&i| y.samples[i] == 0.0).collect();
        assert_eq!(zeros.len(), 250);
        assert_eq!(zeros.last().unwrap() - zeros[0], 249);
        assert!(time_mask(&x, 0.6, &mut rng).is_err());
    }

    #[test]
    fn mu_law_closed_form() {
        assert_eq!(mu_compress(0.0), 0.0);
        assert!((mu_compress(1.0) - 1.0).abs() < 1e-15);
        assert!((mu_compress(-1.0) + 1.0).abs() < 1e-15);
        let want = 26.5f64.ln() / 256f64.ln();
        assert!((mu_compress(0.1) - want).abs() < 1e-15);
        assert!((mu_compress(0.1) - 0.590_990).abs() < 1e-6);
        for v in [-0.7, -0.01, 0.0, 0.3, 1.0] {
            assert!((mu_expand(mu_compress(v)) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn quantize_levels() {
        let x = noise_wave(500, 5);
        let q = quantize(&x, QuantizeMode::Linear, 2).unwrap();
        let mut distinct: Vec<f64> = q.samples.clone();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        assert_eq!(distinct, vec![-0.5, 0.5]);
        let q = quantize(&x, QuantizeMode::MuLaw, 256).unwrap();
        for (a, b) in q.samples.iter().zip(&x.samples) {
            assert!((a - b).abs() < 0.05);
        }
        assert!(quantize(&x, QuantizeMode::Linear, 1).is_err());
    }

    #[test]
    fn noise_at_exact_snr() {
        let x = tone(8000, 300.0, 16000);
        let cfg = StftConfig::default();
        for (kind, snr) in [(NoiseKind::White, 60.0), (NoiseKind::Pink, 0.0), (NoiseKind::Uniform, 17.3)] {
            let out = add_noise_at(&x, kind, snr, 9, &cfg).unwrap();
            let diff: Vec<f64> = out.waveform.samples.iter().zip(&x.samples).map(|(a, b)| a - b).collect();
            let realized = 20.0 * (x.rms() / signal::rms(&diff)).log10();
            assert!((realized - snr).abs() < 0.01, "{kind:?}: {realized}");
            assert!((out.realized_snr_db.unwrap() - snr).abs() < 1e-9);
        }
        let out = add_noise_at(&x, NoiseKind::White, 60.0, 1, &cfg).unwrap();
        let diff: Vec<f64> = out.waveform.samples.iter().zip(&x.samples).map(|(a, b)| a - b).collect();
        assert!((signal::rms(&diff) - x.rms() * 1e-3).abs() < 1e-9);
        let silent = Waveform::zeros(1000, 16000);
        let out = add_noise_at(&silent, NoiseKind::White, 20.0, 1, &cfg).unwrap();
        assert_eq!(out.waveform, silent);
        assert!(out.realized_snr_db.is_none());
        assert!(add_noise_at(&x, NoiseKind::White, 70.0, 1, &cfg).is_err());
    }

    #[test]
    fn every_transform_preserves_length_and_rate() {
        let x = noise_wave(3000, 6);
        let mut rng = rng_from(7, &[]);
        for kind in TransformKind::ALL {
            let spec = AugmentSpec { probability: 1.0, variant_probability: 0.5, ..AugmentSpec::default_for(kind) };
            for _ in 0..5 {
                let r = spec.draw(x.len(), x.sample_rate, &mut rng).unwrap();
                let y = r.apply(&x).unwrap();
                assert_eq!(y.len(), x.len(), "{r:?}");
                assert_eq!(y.sample_rate, x.sample_rate);
                assert!(y.samples.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn drawing_is_deterministic() {
        let spec = AugmentSpec::default_for(TransformKind::Filter);
        let a = spec.draw(1000, 16000, &mut rng_from(3, &[1])).unwrap();
        let b = spec.draw(1000, 16000, &mut rng_from(3, &[1])).unwrap();
        assert_eq!(a, b);
        let bad = AugmentSpec { probability: 1.5, ..spec };
        assert!(bad.validate().is_err());
    }
}
