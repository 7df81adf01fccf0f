//! Phase-only and magnitude-only resynthesis, and an experiment comparing a
//! classifier trained on each input mode.

use std::io::Write;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mix::LabeledSample;
use crate::model::tensor::Mat;
use crate::model::{EatConfig, EatModel};
use crate::parallel::{self, Execution};
use crate::signal::{self, StftConfig, Waveform};
use crate::train::{evaluate, Examples, TrainConfig, Trainer};

/// `istft(|X|)`: the magnitude treated as a zero-phase spectrogram.
pub fn magnitude_waveform(x: &Waveform, cfg: &StftConfig) -> Result<Waveform> {
    let mut spec = signal::stft(x, cfg)?;
    spec.as_mut_slice().iter_mut().for_each(|c| *c = Complex64::new(c.norm(), 0.0));
    signal::istft(&spec, x.sample_rate)
}

/// `istft(e^{jφ})`: every bin set to unit magnitude. Zero bins have phase 0
/// and become `1 + 0j`.
pub fn phase_waveform(x: &Waveform, cfg: &StftConfig) -> Result<Waveform> {
    let mut spec = signal::stft(x, cfg)?;
    spec.as_mut_slice().iter_mut().for_each(|c| *c = Complex64::from_polar(1.0, signal::phase_of(*c)));
    signal::istft(&spec, x.sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Original,
    Phase,
    Magnitude,
    /// Phase and magnitude waveforms stacked as two channels.
    PhasePlusMagnitude,
}

impl InputMode {
    pub const ALL: [InputMode; 4] = [InputMode::Original, InputMode::Phase, InputMode::Magnitude, InputMode::PhasePlusMagnitude];

    pub fn name(self) -> &'static str {
        match self {
            InputMode::Original => "original",
            InputMode::Phase => "phase",
            InputMode::Magnitude => "magnitude",
            InputMode::PhasePlusMagnitude => "phase_plus_magnitude",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            InputMode::PhasePlusMagnitude => 2,
            _ => 1,
        }
    }
}

impl std::str::FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InputMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::InvalidParameter(format!("unknown input mode `{s}`")))
    }
}

fn unit_rms(mut v: Vec<f64>) -> Vec<f64> {
    let r = signal::rms(&v);
    if r > 0.0 {
        v.iter_mut().for_each(|s| *s /= r);
    }
    v
}

/// Model input for `mode`; each channel is scaled to unit RMS.
pub fn prepare_input(x: &Waveform, mode: InputMode, cfg: &StftConfig) -> Result<Mat> {
    let rows: Vec<Vec<f64>> = match mode {
        InputMode::Original => vec![x.samples.clone()],
        InputMode::Phase => vec![phase_waveform(x, cfg)?.samples],
        InputMode::Magnitude => vec![magnitude_waveform(x, cfg)?.samples],
        InputMode::PhasePlusMagnitude => vec![phase_waveform(x, cfg)?.samples, magnitude_waveform(x, cfg)?.samples],
    };
    let rows: Vec<Vec<f64>> = rows.into_iter().map(unit_rms).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Ok(Mat::from_rows(&refs))
}

pub fn prepare_examples(data: &[LabeledSample], mode: InputMode, cfg: &StftConfig, exec: Execution) -> Result<Examples> {
    let inputs = parallel::try_map(exec, data.len(), |i| prepare_input(&data[i].waveform, mode, cfg))?;
    Ok(Examples { inputs, targets: data.iter().map(|s| s.label.clone()).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub mode: InputMode,
    pub seed: u64,
    pub accuracy: f64,
}

/// Settings of [`run_phase_experiment`].
#[derive(Debug, Clone)]
pub struct PhaseExperiment {
    pub model: EatConfig,
    pub train: TrainConfig,
    pub stft: StftConfig,
    pub modes: Vec<InputMode>,
    pub seeds: Vec<u64>,
    pub exec: Execution,
}

/// Trains one model per (mode, seed) without augmentation and reports the
/// test accuracy of its EMA weights. Modes run sequentially.
pub fn run_phase_experiment(train: &[LabeledSample], test: &[LabeledSample], exp: &PhaseExperiment) -> Result<Vec<PhaseResult>> {
    let classes = train.first().map_or(0, |s| s.label.len());
    if classes < 2 {
        return Err(Error::InvalidParameter("phase experiment needs at least two classes".into()));
    }
    let mut out = Vec::new();
    for &mode in &exp.modes {
        let tr = prepare_examples(train, mode, &exp.stft, exp.exec)?;
        let te = prepare_examples(test, mode, &exp.stft, exp.exec)?;
        for &seed in &exp.seeds {
            let cfg = EatConfig { in_channels: mode.channels(), num_classes: classes, ..exp.model.clone() };
            let model = EatModel::build(&cfg, seed)?;
            let tcfg = TrainConfig { seed, ..exp.train.clone() };
            let mut trainer = Trainer::new(model, tcfg, tr.len(), exp.exec)?;
            for epoch in 0..trainer.cfg.epochs {
                let rec = trainer.train_epoch_examples(&tr, epoch)?;
                log::info!("phase-lab {} seed {seed} epoch {epoch}: loss {:.4}", mode.name(), rec.loss);
            }
            let m = evaluate(&trainer.ema_model(), &te, trainer.cfg.label_smoothing, exp.exec)?;
            out.push(PhaseResult { mode, seed, accuracy: m.accuracy.unwrap_or(f64::NAN) });
        }
    }
    Ok(out)
}

/// CSV report with columns `mode,seed,accuracy`.
pub fn write_report<W: Write>(results: &[PhaseResult], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    wr.write_record(["mode", "seed", "accuracy"]).map_err(io)?;
    for r in results {
        wr.write_record([r.mode.name().to_string(), r.seed.to_string(), format!("{:.6}", r.accuracy)]).map_err(io)?;
    }
    wr.flush()?;
    Ok(())
}
