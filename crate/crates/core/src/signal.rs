//! Foundational DSP: waveforms, STFT/ISTFT with a Hann window, polar
//! decomposition, band-limited resampling, padding and gain measurement.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A uniformly sampled mono signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    /// Builds a waveform, rejecting a zero rate or non-finite samples.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self { samples, sample_rate: self.sample_rate }
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Hann,
}

/// STFT analysis parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawStftConfig")]
pub struct StftConfig {
    n_fft: usize,
    hop: usize,
    window: WindowKind,
    centered: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStftConfig {
    #[serde(default = "default_n_fft")]
    n_fft: usize,
    /// Defaults to `n_fft / 4`.
    hop: Option<usize>,
    #[serde(default)]
    window: WindowKind,
    #[serde(default = "default_centered")]
    centered: bool,
}

fn default_n_fft() -> usize {
    1024
}

fn default_centered() -> bool {
    true
}

impl TryFrom<RawStftConfig> for StftConfig {
    type Error = Error;

    fn try_from(raw: RawStftConfig) -> Result<Self> {
        let mut cfg = StftConfig::new(raw.n_fft, raw.hop.unwrap_or((raw.n_fft / 4).max(1)), raw.centered)?;
        cfg.window = raw.window;
        Ok(cfg)
    }
}

impl Default for StftConfig {
    /// 1024-point Hann, hop 256 (75% overlap), centered.
    fn default() -> Self {
        Self { n_fft: 1024, hop: 256, window: WindowKind::Hann, centered: true }
    }
}

impl StftConfig {
    /// Validates `n_fft` (power of two) and `hop`. Centered configurations must
    /// also satisfy the Hann COLA condition: `hop` divides `n_fft` with at least
    /// two frames overlapping every sample.
    pub fn new(n_fft: usize, hop: usize, centered: bool) -> Result<Self> {
        if n_fft < 2 || !n_fft.is_power_of_two() {
            return Err(Error::InvalidStft(format!("n_fft = {n_fft} is not a power of two >= 2")));
        }
        if hop == 0 || hop > n_fft {
            return Err(Error::InvalidStft(format!("hop = {hop} must be in 1..={n_fft}")));
        }
        if centered && (!n_fft.is_multiple_of(hop) || n_fft / hop < 2) {
            return Err(Error::InvalidStft(format!("hop {hop} does not satisfy the Hann COLA condition for n_fft {n_fft}")));
        }
        Ok(Self { n_fft, hop, window: WindowKind::Hann, centered })
    }

    /// `n_fft` with the default hop of `n_fft / 4`.
    pub fn with_n_fft(n_fft: usize) -> Result<Self> {
        Self::new(n_fft, (n_fft / 4).max(1), true)
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    pub fn window_kind(&self) -> WindowKind {
        self.window
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        if self.centered {
            len / self.hop + 1
        } else if len < self.n_fft {
            0
        } else {
            (len - self.n_fft) / self.hop + 1
        }
    }

    /// Periodic window of length `n_fft`.
    pub fn window(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Hann => hann(self.n_fft),
        }
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// One-sided STFT. Stored frame-major: frame `l` occupies
/// `data[l * n_bins .. (l + 1) * n_bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    data: Vec<Complex64>,
    n_frames: usize,
    config: StftConfig,
    origin_length: usize,
}

impl ComplexSpectrogram {
    pub fn from_frames(data: Vec<Complex64>, n_frames: usize, config: StftConfig, origin_length: usize) -> Result<Self> {
        if data.len() != n_frames * config.n_bins() {
            return Err(Error::Shape(format!("{} entries for {} frames x {} bins", data.len(), n_frames, config.n_bins())));
        }
        Ok(Self { data, n_frames, config, origin_length })
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self { data: vec![Complex64::new(0.0, 0.0); other.data.len()], ..other.clone() }
    }

    /// Rebuilds `|X|·e^{jφ}` from separate magnitude and phase fields.
    pub fn from_polar(magnitude: &RealSpectrogram, phase: &RealSpectrogram, like: &Self) -> Result<Self> {
        if magnitude.data.len() != like.data.len() || phase.data.len() != like.data.len() {
            return Err(Error::Shape("polar fields do not match spectrogram".into()));
        }
        let data = magnitude.data.iter().zip(&phase.data).map(|(&m, &p)| Complex64::from_polar(m, p)).collect();
        Ok(Self { data, ..like.clone() })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn n_bins(&self) -> usize {
        self.config.n_bins()
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn origin_length(&self) -> usize {
        self.origin_length
    }

    pub fn get(&self, bin: usize, frame: usize) -> Complex64 {
        self.data[frame * self.n_bins() + bin]
    }

    pub fn set(&mut self, bin: usize, frame: usize, v: Complex64) {
        let nb = self.n_bins();
        self.data[frame * nb + bin] = v;
    }

    pub fn frame(&self, l: usize) -> &[Complex64] {
        let nb = self.n_bins();
        &self.data[l * nb..(l + 1) * nb]
    }

    pub fn frame_mut(&mut self, l: usize) -> &mut [Complex64] {
        let nb = self.n_bins();
        &mut self.data[l * nb..(l + 1) * nb]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Sum of `|X[k,l]|²` over bins `bins` and all frames.
    pub fn band_energy(&self, bins: std::ops::Range<usize>) -> f64 {
        (0..self.n_frames).map(|l| self.frame(l)[bins.clone()].iter().map(|c| c.norm_sqr()).sum::<f64>()).sum()
    }
}

/// A real field with the same layout as a [`ComplexSpectrogram`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealSpectrogram {
    pub data: Vec<f64>,
    pub n_bins: usize,
    pub n_frames: usize,
}

impl RealSpectrogram {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.data[frame * self.n_bins + bin]
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Short-time Fourier transform of a real waveform.
pub fn stft(x: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    stft_samples(&x.samples, cfg)
}

pub fn stft_samples(x: &[f64], cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_finite(x)?;
    let n_fft = cfg.n_fft;
    let n_frames = cfg.n_frames(x.len());
    if n_frames == 0 {
        return Err(Error::InvalidStft(format!("uncentered STFT needs at least {n_fft} samples, got {}", x.len())));
    }
    let pad = if cfg.centered { n_fft / 2 } else { 0 };
    let window = cfg.window();
    let n_bins = cfg.n_bins();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(n_frames * n_bins);
    for l in 0..n_frames {
        let start = (l * cfg.hop) as isize - pad as isize;
        for (n, slot) in buf.iter_mut().enumerate() {
            let idx = start + n as isize;
            let v = if idx >= 0 && (idx as usize) < x.len() { x[idx as usize] } else { 0.0 };
            *slot = Complex64::new(v * window[n], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend_from_slice(&buf[..n_bins]);
    }
    Ok(ComplexSpectrogram { data, n_frames, config: *cfg, origin_length: x.len() })
}

/// Inverse STFT by weighted overlap-add, normalized per sample by the summed
/// squared window. Returns exactly `origin_length` samples.
pub fn istft(spec: &ComplexSpectrogram, sample_rate: u32) -> Result<Waveform> {
    let samples = istft_samples(spec)?;
    Ok(Waveform { samples, sample_rate })
}

pub fn istft_samples(spec: &ComplexSpectrogram) -> Result<Vec<f64>> {
    let cfg = &spec.config;
    let n_fft = cfg.n_fft;
    let n_bins = cfg.n_bins();
    let pad = if cfg.centered { n_fft / 2 } else { 0 };
    let out_len = spec.origin_length;
    if spec.n_frames == 0 {
        return Err(Error::EmptyInput);
    }
    let total = n_fft + cfg.hop * (spec.n_frames - 1);
    let window = cfg.window();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n_fft);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let scale = 1.0 / n_fft as f64;
    for l in 0..spec.n_frames {
        let frame = spec.frame(l);
        buf[..n_bins].copy_from_slice(frame);
        for k in n_bins..n_fft {
            buf[k] = frame[n_fft - k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let off = l * cfg.hop;
        for n in 0..n_fft {
            acc[off + n] += buf[n].re * scale * window[n];
            norm[off + n] += window[n] * window[n];
        }
    }
    let mut out = vec![0.0; out_len];
    for (i, o) in out.iter_mut().enumerate() {
        let j = i + pad;
        if j >= total || norm[j] < 1e-11 {
            return Err(Error::ZeroNormalization(i));
        }
        *o = acc[j] / norm[j];
    }
    Ok(out)
}

/// Elementwise `|X|`.
pub fn magnitude(spec: &ComplexSpectrogram) -> RealSpectrogram {
    RealSpectrogram { data: spec.data.iter().map(|c| c.norm()).collect(), n_bins: spec.n_bins(), n_frames: spec.n_frames }
}

/// Principal-value phase in `(−π, π]`; a zero entry has phase 0.
pub fn phase_of(c: Complex64) -> f64 {
    if c.re == 0.0 && c.im == 0.0 {
        return 0.0;
    }
    let p = c.im.atan2(c.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// Elementwise principal-value phase; see [`phase_of`].
pub fn phase(spec: &ComplexSpectrogram) -> RealSpectrogram {
    RealSpectrogram { data: spec.data.iter().map(|&c| phase_of(c)).collect(), n_bins: spec.n_bins(), n_frames: spec.n_frames }
}

/// Zeroth-order modified Bessel function of the first kind.
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let y = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= y / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser window evaluated at a normalized position `u ∈ [−1, 1]`.
pub(crate) fn kaiser(u: f64, beta: f64) -> f64 {
    if u.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - u * u).sqrt()) / bessel_i0(beta)
}

pub(crate) fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

const RESAMPLE_BETA: f64 = 8.0;
const RESAMPLE_ZEROS: usize = 64;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Band-limited resampling by Kaiser-windowed sinc interpolation
/// (β = 8, 64 zero crossings per side). The rational rate ratio is reduced and
/// one filter phase is precomputed per distinct fractional offset.
pub fn resample(x: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 || x.sample_rate == 0 {
        return Err(Error::InvalidParameter("sample rates must be positive".into()));
    }
    if target_rate == x.sample_rate {
        return Ok(x.clone());
    }
    let src = x.sample_rate as u64;
    let dst = target_rate as u64;
    let g = gcd(src, dst);
    let up = dst / g;
    let down = src / g;
    let out_len = ((x.len() as f64) * dst as f64 / src as f64).round() as usize;
    let cutoff = (dst as f64 / src as f64).min(1.0);
    // Half-width in input samples.
    let half = (RESAMPLE_ZEROS as f64 / cutoff).ceil() as isize;
    let taps = (2 * half + 1) as usize;
    let phases = up as usize;
    let mut table = vec![0.0; phases * taps];
    for p in 0..phases {
        let frac = p as f64 / up as f64;
        for j in 0..taps {
            // Distance from the output instant to input sample base + j - half.
            let d = (j as isize - half) as f64 - frac;
            table[p * taps + j] = cutoff * sinc(cutoff * d) * kaiser(d / (half as f64 + 1.0), RESAMPLE_BETA);
        }
    }
    let n_in = x.len() as isize;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let num = n * down;
        let base = (num / up) as isize;
        let p = (num % up) as usize;
        let row = &table[p * taps..(p + 1) * taps];
        let mut acc = 0.0;
        for (j, &h) in row.iter().enumerate() {
            let idx = base + j as isize - half;
            if idx >= 0 && idx < n_in {
                acc += h * x.samples[idx as usize];
            }
        }
        out.push(acc);
    }
    Ok(Waveform { samples: out, sample_rate: target_rate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    /// Zero-pad or truncate at the end.
    ZeroPadEnd,
    /// Pad symmetrically or crop around the center.
    Center,
}

/// Forces `x` to exactly `target_len` samples.
pub fn pad_or_trim(x: &Waveform, target_len: usize, mode: PadMode) -> Result<Waveform> {
    if target_len == 0 {
        return Err(Error::InvalidParameter("target length must be positive".into()));
    }
    let len = x.len();
    let samples = match mode {
        PadMode::ZeroPadEnd => {
            let mut s: Vec<f64> = x.samples.iter().copied().take(target_len).collect();
            s.resize(target_len, 0.0);
            s
        }
        PadMode::Center => {
            if len >= target_len {
                let start = (len - target_len) / 2;
                x.samples[start..start + target_len].to_vec()
            } else {
                let left = (target_len - len) / 2;
                let mut s = vec![0.0; target_len];
                s[left..left + len].copy_from_slice(&x.samples);
                s
            }
        }
    };
    Ok(x.with_samples(samples))
}

/// RMS level in dB; silence is floored at an RMS of 1e−8 (−160 dB).
pub fn gain_db(x: &Waveform) -> f64 {
    20.0 * x.rms().max(1e-8).log10()
}
