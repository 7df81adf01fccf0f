use std::path::{Path, PathBuf};

use clap::ValueEnum;
use eat_core::augment::{self, AugmentSpec, TransformKind};
use eat_core::data::{read_wav, write_wav};
use eat_core::mix::{self, LabeledSample, MixKind, MixParams};
use eat_core::noise::NoiseKind;
use eat_core::rng::{derive, rng_from};
use eat_core::signal::{pad_or_trim, resample, PadMode};
use eat_core::StftConfig;
use serde_json::{json, Value};

use crate::synth::Format;
use crate::{CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Op {
    Amplitude,
    TimeShift,
    Filter,
    InvertPolarity,
    TimeMask,
    Quantize,
    Noise,
    Mixup,
    Timemix,
    Freqmix,
    Phasemix,
}

impl Op {
    fn transform(self) -> Option<TransformKind> {
        Some(match self {
            Op::Amplitude => TransformKind::Amplitude,
            Op::TimeShift => TransformKind::TimeShift,
            Op::Filter => TransformKind::Filter,
            Op::InvertPolarity => TransformKind::InvertPolarity,
            Op::TimeMask => TransformKind::TimeMask,
            Op::Quantize => TransformKind::Quantize,
            _ => return None,
        })
    }

    fn mix(self) -> Option<MixKind> {
        Some(match self {
            Op::Mixup => MixKind::Mixup,
            Op::Timemix => MixKind::Timemix,
            Op::Freqmix => MixKind::Freqmix,
            Op::Phasemix => MixKind::Phasemix,
            _ => return None,
        })
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Operation, applied in the order given. Repeatable; a mixing operation
    /// must come last and needs a second input.
    #[arg(long = "op", required = true)]
    ops: Vec<Op>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mixing ratio; drawn from the strategy's range when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    /// FreqMix band selector; drawn uniformly when omitted.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value = "white")]
    noise_kind: String,
    /// Target SNR of `noise`; drawn from [10, 40] dB when omitted.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 1024)]
    n_fft: usize,
    #[arg(long, value_enum, default_value = "float32")]
    format: Format,
    /// INPUT [SECOND] OUTPUT. A sidecar `OUTPUT.json` records every realized
    /// parameter and the label weights.
    #[arg(num_args = 2..=3, required = true, value_name = "WAV")]
    files: Vec<PathBuf>,
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn run(a: Args) -> CliResult {
    let (input, second, output) = match a.files.as_slice() {
        [i, o] => (i, None, o),
        [i, s, o] => (i, Some(s), o),
        _ => unreachable!("clap enforces 2..=3 files"),
    };
    let mix_pos: Vec<usize> = a.ops.iter().enumerate().filter(|(_, o)| o.mix().is_some()).map(|(i, _)| i).collect();
    if mix_pos.len() > 1 || mix_pos.first().is_some_and(|&i| i + 1 != a.ops.len()) {
        return Err(Failure::invalid("at most one mixing operation, and it must be last"));
    }
    match (mix_pos.is_empty(), second.is_some()) {
        (false, false) => return Err(Failure::invalid("mixing needs a second input: INPUT SECOND OUTPUT")),
        (true, true) => return Err(Failure::invalid("a second input is only used by a mixing operation")),
        _ => {}
    }
    let noise_kind: NoiseKind = serde_json::from_value(Value::String(a.noise_kind.clone()))
        .map_err(|_| Failure::invalid(format!("unknown noise kind `{}`", a.noise_kind)))?;
    let stft = StftConfig::new(a.n_fft, a.n_fft / 4, true)?;

    let mut x = read_wav(input)?;
    let mut records = Vec::new();
    let mut label_weights = vec![1.0];
    for (i, &op) in a.ops.iter().enumerate() {
        let mut rng = rng_from(a.seed, &[i as u64]);
        if let Some(kind) = op.transform() {
            let r = AugmentSpec { probability: 1.0, ..AugmentSpec::default_for(kind) }.draw(x.len(), x.sample_rate, &mut rng)?;
            x = r.apply(&x)?;
            records.push(serde_json::to_value(&r).expect("serializable"));
        } else if op == Op::Noise {
            let snr = match a.snr_db {
                Some(s) => s,
                None => rand::Rng::random_range(&mut rng, 10.0..=40.0),
            };
            let out = augment::add_noise_at(&x, noise_kind, snr, derive(a.seed, &[i as u64, 1]), &stft)?;
            x = out.waveform;
            records.push(json!({"op": "noise", "kind": noise_kind, "snr_db": snr, "realized_snr_db": out.realized_snr_db}));
        } else if let Some(kind) = op.mix() {
            let second = second.expect("checked above");
            let mut y = read_wav(second)?;
            if y.sample_rate != x.sample_rate {
                y = resample(&y, x.sample_rate)?;
            }
            if y.len() != x.len() {
                log::info!("fitting {} to {} samples", second.display(), x.len());
                y = pad_or_trim(&y, x.len(), PadMode::ZeroPadEnd)?;
            }
            let mut params = MixParams::draw(kind, &mut rng);
            if let Some(l) = a.lambda {
                params.lambda = l;
            }
            if let Some(p) = a.p {
                params.p = p;
            }
            params.validate()?;
            let first = LabeledSample::one_hot(x.clone(), 0, 2)?;
            let other = LabeledSample::one_hot(y, 1, 2)?;
            let out = mix::apply(&params, &first, &other, &stft, &mut rng)?;
            x = out.waveform;
            label_weights = out.label.clone();
            records.push(json!({
                "op": kind.name(),
                "lambda": params.lambda,
                "p": params.p,
                "label_weight": params.label_weight(),
            }));
        }
    }
    write_wav(output, &x, a.format.into())?;
    let sidecar = json!({
        "input": input,
        "second": second,
        "output": output,
        "seed": a.seed,
        "ops": records,
        "label_weights": label_weights,
    });
    let text = serde_json::to_string_pretty(&sidecar).expect("serializable");
    std::fs::write(sidecar_path(output), text + "\n")?;
    Ok(())
}
