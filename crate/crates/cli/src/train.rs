use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use eat_core::config::RunConfig;
use eat_core::data::{load_manifest, make_batch, Manifest};
use eat_core::mix::LabeledSample;
use eat_core::model::checkpoint::Checkpoint;
use eat_core::model::EatModel;
use eat_core::parallel::Execution;
use eat_core::pipeline::Pipeline;
use eat_core::rng::derive;
use eat_core::synthetic::write_dataset;
use eat_core::train::{evaluate, fold_partition, steps_per_epoch, Examples, FoldResult, MetricsRecord, Trainer};
use serde_json::json;

use crate::{CliResult, ConfigArgs, Failure};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(flatten)]
    config: ConfigArgs,
    /// CSV manifest; overrides `data.manifest`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Audio directory; overrides `data.audio_root` and `$EAT_DATA_ROOT`.
    #[arg(long)]
    audio_root: Option<PathBuf>,
    /// Generate a synthetic 3-class set with this many clips per class into
    /// `OUT/data` and train on it.
    #[arg(long, value_name = "PER_CLASS", conflicts_with = "manifest")]
    synthetic: Option<usize>,
    /// Number of folds of the synthetic set.
    #[arg(long, default_value_t = 5, requires = "synthetic")]
    synthetic_folds: u32,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Continue from the state checkpoints in OUT.
    #[arg(long)]
    resume: bool,
    /// Stop after this many epochs in total (across folds) and exit.
    #[arg(long, value_name = "EPOCHS")]
    stop_after: Option<usize>,
}

struct Metrics(BufWriter<File>);

impl Metrics {
    fn open(path: &Path, append: bool) -> CliResult<Self> {
        let f = OpenOptions::new().create(true).write(true).append(append).truncate(!append).open(path)?;
        Ok(Self(BufWriter::new(f)))
    }

    fn write(&mut self, rec: &MetricsRecord, repeat: usize) -> CliResult {
        let mut v = serde_json::to_value(rec).expect("serializable");
        v["repeat"] = json!(repeat);
        writeln!(self.0, "{v}")?;
        self.0.flush()?;
        Ok(())
    }
}

fn resolve(a: &Args) -> CliResult<RunConfig> {
    let mut cfg = a.config.load()?;
    if a.resume {
        let saved = a.out.join("config.toml");
        if a.config.config.is_none() && saved.exists() {
            let file_cfg = ConfigArgs { config: Some(saved), ..a.config.clone() };
            cfg = file_cfg.load()?;
        }
    }
    if let Some(n) = a.synthetic {
        if n == 0 {
            return Err(Failure::invalid("--synthetic needs at least one clip per class"));
        }
        let dir = a.out.join("data");
        if !(a.resume && dir.join("manifest.csv").exists()) {
            write_dataset(&dir, n, cfg.data.duration_s, cfg.data.sample_rate, a.synthetic_folds, cfg.train.seed)?;
        }
        cfg.data.manifest = Some(dir.join("manifest.csv"));
    }
    if let Some(m) = &a.manifest {
        cfg.data.manifest = Some(m.clone());
    }
    if let Some(r) = &a.audio_root {
        cfg.data.audio_root = Some(r.clone());
    }
    Ok(cfg)
}

fn load_data(cfg: &mut RunConfig, exec: Execution) -> CliResult<(Manifest, Vec<LabeledSample>)> {
    let path =
        cfg.data.manifest.clone().ok_or_else(|| Failure::invalid("no manifest: pass --manifest, --synthetic or set data.manifest"))?;
    let m = load_manifest(&path, cfg.data.audio_root.as_deref())?;
    cfg.model.num_classes = m.num_classes();
    cfg.model.multi_label = m.multi_label;
    cfg.validate()?;
    let all: Vec<usize> = (0..m.records.len()).collect();
    let data = make_batch(&m, &all, cfg.data.duration_s, cfg.data.sample_rate, exec).map_err(|e| Failure::io(e.to_string()))?;
    Ok((m, data))
}

pub fn run(a: Args, exec: Execution) -> CliResult {
    let mut cfg = resolve(&a)?;
    let (m, data) = load_data(&mut cfg, exec)?;
    let min = cfg.model.min_input_len();
    if data[0].waveform.len() < min {
        return Err(Failure::invalid(format!(
            "clips of {} samples are shorter than the model's minimum input of {min}",
            data[0].waveform.len()
        )));
    }
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("config.toml"), cfg.to_toml()?)?;
    let pipeline = Pipeline::new(cfg.augment.clone(), cfg.stft)?;
    let folds: Vec<u32> = m.records.iter().map(|r| r.fold).collect();
    let parts = fold_partition(&folds)?;
    if parts.len() < 2 {
        return Err(Failure::invalid("k-fold training needs at least two folds in the manifest"));
    }
    for f in &cfg.data.eval_folds {
        if !parts.iter().any(|(g, _)| g == f) {
            return Err(Failure::invalid(format!("data.eval_folds: fold {f} has no samples")));
        }
    }
    let mut metrics = Metrics::open(&a.out.join("metrics.jsonl"), a.resume)?;
    let mut budget = a.stop_after;
    let mut results = Vec::new();
    for repeat in 0..cfg.data.repeats.max(1) {
        for (fold, eval_idx) in &parts {
            if !cfg.data.eval_folds.is_empty() && !cfg.data.eval_folds.contains(fold) {
                continue;
            }
            let train: Vec<LabeledSample> = folds.iter().enumerate().filter(|&(_, g)| g != fold).map(|(i, _)| data[i].clone()).collect();
            let eval = Examples::from_mono(&eval_idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>());
            let mut tcfg = cfg.train.clone();
            tcfg.seed = derive(cfg.train.seed, &[repeat as u64, *fold as u64]);
            let state_path = a.out.join(format!("fold{fold}_r{repeat}.state.ckpt"));
            let mut trainer = if a.resume && state_path.exists() {
                let ck = Checkpoint::load(&state_path)?;
                if ck.model_config()? != cfg.model {
                    return Err(Failure::invalid(format!("{} was written for a different model", state_path.display())));
                }
                Trainer::resume(&ck, tcfg, exec)?
            } else {
                Trainer::new(EatModel::build(&cfg.model, tcfg.seed)?, tcfg, train.len(), exec)?
            };
            let spe = steps_per_epoch(train.len(), trainer.cfg.batch_size);
            if trainer.state.total_steps != spe * trainer.cfg.epochs as u64 {
                return Err(Failure::invalid(format!("{} does not match the configured schedule", state_path.display())));
            }
            let start = (trainer.state.step / spe) as usize;
            if start > 0 {
                log::info!("fold {fold} repeat {repeat}: resuming at step {}", trainer.state.step);
            }
            for epoch in start..trainer.cfg.epochs {
                if budget == Some(0) {
                    log::info!("stopping early; rerun with --resume to continue");
                    return Ok(());
                }
                let mut rec = trainer.train_epoch(&train, &pipeline, epoch).map_err(|e| Failure::io(e.to_string()))?;
                rec.fold = Some(*fold);
                metrics.write(&rec, repeat)?;
                let e = evaluate(&trainer.ema_model(), &eval, trainer.cfg.label_smoothing, exec)?;
                let rec = MetricsRecord { split: "eval".into(), loss: e.loss, accuracy: e.accuracy, map: e.map, ..rec };
                metrics.write(&rec, repeat)?;
                log::info!("fold {fold} epoch {epoch}: train loss {:.4}, eval {:.4}", rec.loss, e.headline());
                trainer.checkpoint()?.save(&state_path)?;
                budget = budget.map(|b| b - 1);
            }
            trainer.ema_checkpoint()?.save(&a.out.join(format!("fold{fold}_r{repeat}.ckpt")))?;
            let m = evaluate(&trainer.ema_model(), &eval, trainer.cfg.label_smoothing, exec)?;
            results.push(FoldResult { fold: *fold, repeat, n_eval: eval.len(), metrics: m });
        }
    }
    let mean = results.iter().map(|r| r.metrics.headline()).sum::<f64>() / results.len() as f64;
    let summary = json!({ "folds": results, "mean": mean });
    std::fs::write(a.out.join("summary.json"), serde_json::to_string_pretty(&summary).expect("serializable") + "\n")?;
    println!("{summary}");
    Ok(())
}
