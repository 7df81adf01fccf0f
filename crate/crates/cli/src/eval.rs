use std::path::PathBuf;

use eat_core::data::{load_manifest, make_batch};
use eat_core::model::checkpoint::Checkpoint;
use eat_core::parallel::Execution;
use eat_core::train::{evaluate, Examples};
use serde_json::json;

use crate::{CliResult, ConfigArgs, Failure};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Run configuration for clip length and sample rate. Defaults to the
    /// `config.toml` beside the checkpoint when present.
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    audio_root: Option<PathBuf>,
    /// Evaluate only this fold; every record when omitted.
    #[arg(long)]
    fold: Option<u32>,
}

pub fn run(mut a: Args, exec: Execution) -> CliResult {
    if a.config.config.is_none() {
        let beside = a.checkpoint.with_file_name("config.toml");
        if beside.exists() {
            a.config.config = Some(beside);
        }
    }
    let cfg = a.config.load()?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.to_model()?;
    if a.config.config.is_some() && *model.config() != cfg.model {
        return Err(Failure::invalid("checkpoint model does not match the configured model"));
    }
    let m = load_manifest(&a.manifest, a.audio_root.as_deref().or(cfg.data.audio_root.as_deref()))?;
    if m.num_classes() != model.config().num_classes {
        return Err(Failure::invalid(format!(
            "manifest has {} classes, checkpoint expects {}",
            m.num_classes(),
            model.config().num_classes
        )));
    }
    if m.multi_label != model.config().multi_label {
        return Err(Failure::invalid("manifest and checkpoint disagree on multi-label"));
    }
    let idx: Vec<usize> = m.records.iter().enumerate().filter(|(_, r)| a.fold.is_none_or(|f| r.fold == f)).map(|(i, _)| i).collect();
    if idx.is_empty() {
        return Err(Failure::invalid("no records to evaluate"));
    }
    let data = make_batch(&m, &idx, cfg.data.duration_s, cfg.data.sample_rate, exec).map_err(|e| Failure::io(e.to_string()))?;
    let e = evaluate(&model, &Examples::from_mono(&data), cfg.train.label_smoothing, exec)?;
    let mut out = json!({ "n": idx.len(), "loss": e.loss, "param_count": model.param_count() });
    if let Some(acc) = e.accuracy {
        out["accuracy"] = json!(acc);
    }
    if let Some(map) = e.map {
        out["mAP"] = json!(map);
    }
    if let Some(f) = a.fold {
        out["fold"] = json!(f);
    }
    println!("{out}");
    Ok(())
}
