//! A three-class synthetic sound set for smoke training: a 440 Hz tone, a
//! linear chirp and pink noise, each with random level and phase.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;

use crate::data::wav::{write_wav, WavFormat};
use crate::error::Result;
use crate::mix::LabeledSample;
use crate::noise::{self, NoiseKind};
use crate::rng::{derive, rng_from};
use crate::signal::Waveform;

/// Class names in index order (sorted, as a manifest would assign them).
pub const CLASSES: [&str; 3] = ["chirp", "pink_noise", "tone"];

pub const TONE_HZ: f64 = 440.0;

/// One clip of class `class`, fully determined by `seed`.
pub fn clip(class: usize, len: usize, rate: u32, seed: u64) -> Result<Waveform> {
    let mut rng = rng_from(seed, &[class as u64]);
    let amp = rng.random_range(0.2..0.8);
    let fs = rate as f64;
    let mut x: Vec<f64> = match CLASSES[class] {
        "tone" => {
            let ph = rng.random_range(0.0..2.0 * PI);
            (0..len).map(|n| (2.0 * PI * TONE_HZ * n as f64 / fs + ph).sin()).collect()
        }
        "chirp" => {
            let f0 = rng.random_range(300.0..600.0);
            let f1 = rng.random_range(2000.0..4000.0);
            let dur = len as f64 / fs;
            let k = (f1 - f0) / dur;
            let ph = rng.random_range(0.0..2.0 * PI);
            (0..len)
                .map(|n| {
                    let t = n as f64 / fs;
                    (2.0 * PI * (f0 * t + 0.5 * k * t * t) + ph).sin()
                })
                .collect()
        }
        _ => noise::colored_noise(NoiseKind::Pink, len.max(noise::MIN_COLORED_LEN), rate, rng.random())?.samples[..len].to_vec(),
    };
    let r = crate::signal::rms(&x).max(1e-12);
    x.iter_mut().for_each(|v| *v *= amp * std::f64::consts::FRAC_1_SQRT_2 / r);
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.99 {
        x.iter_mut().for_each(|v| *v *= 0.99 / peak);
    }
    Waveform::new(x, rate)
}

/// `per_class` clips of each class, interleaved in class order.
pub fn dataset(per_class: usize, duration_s: f64, rate: u32, seed: u64) -> Result<Vec<LabeledSample>> {
    let len = crate::data::clip_len(duration_s, rate)?;
    let mut out = Vec::with_capacity(3 * per_class);
    for i in 0..per_class {
        for c in 0..CLASSES.len() {
            let w = clip(c, len, rate, derive(seed, &[i as u64]))?;
            out.push(LabeledSample::one_hot(w, c, CLASSES.len())?);
        }
    }
    Ok(out)
}

/// Writes `dataset(..)` as float WAV files plus a `manifest.csv` with folds
/// `1..=folds` assigned round-robin per class.
pub fn write_dataset(dir: &Path, per_class: usize, duration_s: f64, rate: u32, folds: u32, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let data = dataset(per_class, duration_s, rate, seed)?;
    let mut csv = String::from("filename,fold,category\n");
    for (k, s) in data.iter().enumerate() {
        let c = k % CLASSES.len();
        let i = k / CLASSES.len();
        let name = format!("{}_{i:04}.wav", CLASSES[c]);
        write_wav(&dir.join(&name), &s.waveform, WavFormat::Float32)?;
        csv.push_str(&format!("{name},{},{}\n", i as u32 % folds.max(1) + 1, CLASSES[c]));
    }
    std::fs::write(dir.join("manifest.csv"), csv)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, StftConfig};

    #[test]
    fn classes_have_expected_spectra() {
        let cfg = StftConfig::default();
        let bin_hz = 16000.0 / 1024.0;
        let tone = clip(2, 16000, 16000, 3).unwrap();
        let spec = stft(&tone, &cfg).unwrap();
        let energy: Vec<f64> = (0..spec.n_bins()).map(|k| spec.band_energy(k..k + 1)).collect();
        let peak = (0..energy.len()).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        assert!((peak as f64 * bin_hz - TONE_HZ).abs() <= bin_hz);

        let data = dataset(4, 1.0, 16000, 7).unwrap();
        assert_eq!(data.len(), 12);
        assert!(data.iter().all(|s| s.waveform.len() == 16000 && s.waveform.samples.iter().all(|v| v.abs() <= 1.0)));
        assert_eq!(data[1].label, vec![0.0, 1.0, 0.0]);
        assert_eq!(dataset(4, 1.0, 16000, 7).unwrap(), data);
    }
}
