//! Training loop: AdamW with a one-cycle schedule, EMA shadow weights for
//! evaluation, label-smoothed cross-entropy (BCE whenever a batch contains a
//! mixed element or the task is multi-label), and a k-fold harness.

pub mod loss;
pub mod metrics;
pub mod optim;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mix::LabeledSample;
use crate::model::checkpoint::{Checkpoint, Record};
use crate::model::tensor::Mat;
use crate::model::{EatConfig, EatModel};
use crate::parallel::Execution;
use crate::pipeline::Pipeline;
use crate::rng::{derive, rng_from};

use loss::{Loss, LossKind};
use metrics::{accuracy, argmax, mean_average_precision};
use optim::{adamw_step, check_finite, ema_update, one_cycle_lr, ADAM_EPS, BETA1, BETA2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_lr: f64,
    pub weight_decay: f64,
    pub ema_decay: f64,
    pub label_smoothing: f64,
    pub warmup_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss_kind: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_lr: 5e-4,
            weight_decay: 1e-5,
            ema_decay: 0.995,
            label_smoothing: 0.1,
            warmup_fraction: 0.3,
            epochs: 20,
            batch_size: 16,
            seed: 0,
            loss_kind: LossKind::SmoothedCe,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return bad(format!("max_lr must be positive, got {}", self.max_lr));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad(format!("ema_decay {} outside (0, 1)", self.ema_decay));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label_smoothing {} outside [0, 1)", self.label_smoothing));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction {} outside [0, 1]", self.warmup_fraction));
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        Ok(())
    }

    fn base_loss(&self, multi_label: bool) -> Loss {
        match (self.loss_kind, multi_label) {
            (LossKind::Bce, _) | (_, true) => Loss::Bce,
            (LossKind::SmoothedCe, false) => Loss::SmoothedCe { smoothing: self.label_smoothing },
        }
    }
}

/// Optimizer moments, EMA shadow and schedule position.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub ema: Vec<Vec<f64>>,
    pub step: u64,
    pub total_steps: u64,
}

impl TrainState {
    pub fn new(model: &EatModel, total_steps: u64) -> Self {
        let zeros: Vec<Vec<f64>> = model.params().params().iter().map(|p| vec![0.0; p.numel()]).collect();
        Self { m: zeros.clone(), v: zeros, ema: model.params().values(), step: 0, total_steps }
    }

    /// Records appended to a checkpoint: `state/m/<path>`, `state/v/<path>`,
    /// `state/ema/<path>`.
    pub fn to_records(&self, model: &EatModel) -> Vec<Record> {
        let mut out = Vec::new();
        for (name, bufs) in [("m", &self.m), ("v", &self.v), ("ema", &self.ema)] {
            for (p, b) in model.params().params().iter().zip(bufs) {
                out.push(Record { path: format!("state/{name}/{}", p.path), shape: p.shape.clone(), data: b.clone() });
            }
        }
        out
    }

    pub fn to_table(&self) -> toml::Table {
        let mut t = toml::Table::new();
        t.insert("step".into(), toml::Value::Integer(self.step as i64));
        t.insert("total_steps".into(), toml::Value::Integer(self.total_steps as i64));
        t
    }

    pub fn from_checkpoint(ck: &Checkpoint, model: &EatModel) -> Result<Self> {
        let table = ck.state()?.ok_or_else(|| Error::Checkpoint("no [state] table".into()))?;
        let int = |k: &str| {
            table
                .get(k)
                .and_then(|v| v.as_integer())
                .and_then(|v| u64::try_from(v).ok())
                .ok_or_else(|| Error::Checkpoint(format!("state.{k} missing")))
        };
        let mut bufs = Vec::new();
        for name in ["m", "v", "ema"] {
            let mut b = Vec::new();
            for p in model.params().params() {
                let key = format!("state/{name}/{}", p.path);
                let r = ck.find(&key).ok_or_else(|| Error::Checkpoint(format!("missing `{key}`")))?;
                if r.shape != p.shape {
                    return Err(Error::Checkpoint(format!("`{key}` shape mismatch")));
                }
                b.push(r.data.clone());
            }
            bufs.push(b);
        }
        let ema = bufs.pop().expect("three buffers");
        let v = bufs.pop().expect("three buffers");
        let m = bufs.pop().expect("three buffers");
        Ok(Self { m, v, ema, step: int("step")?, total_steps: int("total_steps")? })
    }
}

/// One JSON-lines metrics record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "mAP")]
    pub map: Option<f64>,
    pub lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<u32>,
}

/// Evaluation outcome on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub map: Option<f64>,
}

impl EvalMetrics {
    /// Accuracy for single-label tasks, mAP for multi-label.
    pub fn headline(&self) -> f64 {
        self.accuracy.or(self.map).unwrap_or(f64::NAN)
    }
}

/// Model inputs: one `channels × len` matrix per example plus its target.
#[derive(Debug, Clone)]
pub struct Examples {
    pub inputs: Vec<Mat>,
    pub targets: Vec<Vec<f64>>,
}

impl Examples {
    pub fn from_mono(samples: &[LabeledSample]) -> Self {
        Self {
            inputs: samples.iter().map(|s| Mat::from_vec(1, s.waveform.len(), s.waveform.samples.clone())).collect(),
            targets: samples.iter().map(|s| s.label.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const AUGMENT_STREAM: u64 = 0x4155_4745;

pub fn steps_per_epoch(n: usize, batch_size: usize) -> u64 {
    n.div_ceil(batch_size) as u64
}

/// Model plus optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: EatModel,
    pub state: TrainState,
    pub cfg: TrainConfig,
    pub exec: Execution,
}

impl Trainer {
    pub fn new(model: EatModel, cfg: TrainConfig, n_train: usize, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        if n_train == 0 {
            return Err(Error::EmptyInput);
        }
        let total = steps_per_epoch(n_train, cfg.batch_size) * cfg.epochs as u64;
        let state = TrainState::new(&model, total);
        Ok(Self { model, state, cfg, exec })
    }

    pub fn lr(&self) -> Result<f64> {
        one_cycle_lr(self.state.step, self.state.total_steps, self.cfg.max_lr, self.cfg.warmup_fraction)
    }

    /// One optimizer step on a batch; returns the batch loss.
    pub fn step(&mut self, inputs: &[Mat], targets: &[Vec<f64>], loss: Loss) -> Result<f64> {
        let vg = self.model.value_and_grad(inputs, targets, loss, self.exec)?;
        check_finite(&vg.grads.data, self.model.params().params().iter().map(|p| p.path.as_str()))?;
        let lr = self.lr()?;
        let t = self.state.step + 1;
        let wd = self.cfg.weight_decay;
        for (i, p) in self.model.params_mut().params_mut().iter_mut().enumerate() {
            adamw_step(&mut p.data, &vg.grads.data[i], &mut self.state.m[i], &mut self.state.v[i], t, lr, wd, (BETA1, BETA2), ADAM_EPS);
            ema_update(&mut self.state.ema[i], &p.data, self.cfg.ema_decay)?;
        }
        self.state.step = t;
        Ok(vg.loss)
    }

    fn order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng_from(self.cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        idx
    }

    /// One epoch over waveform samples with the augmentation pipeline.
    pub fn train_epoch(&mut self, data: &[LabeledSample], pipeline: &Pipeline, epoch: usize) -> Result<MetricsRecord> {
        if data.is_empty() {
            return Err(Error::EmptyInput);
        }
        let order = self.order(data.len(), epoch);
        let base = self.cfg.base_loss(self.model.config().multi_label);
        let lr0 = self.lr()?;
        let mut total = 0.0;
        let mut count = 0usize;
        for (bi, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let batch: Vec<LabeledSample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let seed = derive(self.cfg.seed, &[AUGMENT_STREAM, epoch as u64, bi as u64]);
            let aug = pipeline.run(&batch, seed, self.exec)?;
            let loss = if aug.any_mixed() { Loss::Bce } else { base };
            let ex = Examples::from_mono(&aug.samples);
            total += self.step(&ex.inputs, &ex.targets, loss)? * chunk.len() as f64;
            count += chunk.len();
        }
        Ok(MetricsRecord { epoch, split: "train".into(), loss: total / count as f64, accuracy: None, map: None, lr: lr0, fold: None })
    }

    /// One epoch over prepared inputs, without augmentation.
    pub fn train_epoch_examples(&mut self, data: &Examples, epoch: usize) -> Result<MetricsRecord> {
        if data.is_empty() {
            return Err(Error::EmptyInput);
        }
        let order = self.order(data.len(), epoch);
        let loss = self.cfg.base_loss(self.model.config().multi_label);
        let lr0 = self.lr()?;
        let mut total = 0.0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let inputs: Vec<Mat> = chunk.iter().map(|&i| data.inputs[i].clone()).collect();
            let targets: Vec<Vec<f64>> = chunk.iter().map(|&i| data.targets[i].clone()).collect();
            total += self.step(&inputs, &targets, loss)? * chunk.len() as f64;
        }
        Ok(MetricsRecord { epoch, split: "train".into(), loss: total / data.len() as f64, accuracy: None, map: None, lr: lr0, fold: None })
    }

    /// Copy of the model carrying the EMA shadow weights.
    pub fn ema_model(&self) -> EatModel {
        let mut m = self.model.clone();
        m.params_mut().set_values(&self.state.ema);
        m
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::from_model(&self.model, self.state.to_records(&self.model), Some(self.state.to_table()))
    }

    /// Checkpoint of the EMA weights only, used for evaluation.
    pub fn ema_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::from_model(&self.ema_model(), Vec::new(), None)
    }

    pub fn resume(ck: &Checkpoint, cfg: TrainConfig, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let model = ck.to_model()?;
        let state = TrainState::from_checkpoint(ck, &model)?;
        Ok(Self { model, state, cfg, exec })
    }
}

/// Loss and accuracy (single-label) or mAP (multi-label) of `model`.
pub fn evaluate(model: &EatModel, data: &Examples, label_smoothing: f64, exec: Execution) -> Result<EvalMetrics> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let logits = model.forward(&data.inputs, exec)?;
    let multi = model.config().multi_label;
    let loss = if multi { Loss::Bce } else { Loss::SmoothedCe { smoothing: label_smoothing } };
    let mut total = 0.0;
    for (r, t) in data.targets.iter().enumerate() {
        total += loss.value(logits.row(r), t)?;
    }
    let loss = total / data.len() as f64;
    if multi {
        Ok(EvalMetrics { loss, accuracy: None, map: Some(mean_average_precision(&logits, &data.targets)?) })
    } else {
        let labels: Vec<usize> = data.targets.iter().map(|t| argmax(t)).collect();
        Ok(EvalMetrics { loss, accuracy: Some(accuracy(&logits, &labels)?), map: None })
    }
}

/// Splits `folds` into the indices of each distinct fold value, ascending.
pub fn fold_partition(folds: &[u32]) -> Result<Vec<(u32, Vec<usize>)>> {
    let mut ids: Vec<u32> = folds.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(ids.into_iter().map(|f| (f, folds.iter().enumerate().filter(|&(_, &g)| g == f).map(|(i, _)| i).collect())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: u32,
    pub repeat: usize,
    pub n_eval: usize,
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldReport {
    pub folds: Vec<FoldResult>,
    /// Mean headline metric per repeat.
    pub repeat_means: Vec<f64>,
    /// Average of `repeat_means`.
    pub mean: f64,
}

/// Progress callbacks of [`kfold_run`].
pub enum KFoldEvent<'a> {
    Metrics(&'a MetricsRecord),
    FoldDone { fold: u32, repeat: usize, trainer: &'a Trainer },
}

/// Settings shared by every fold.
#[derive(Debug, Clone)]
pub struct KFoldSpec<'a> {
    pub model: &'a EatConfig,
    pub train: &'a TrainConfig,
    pub pipeline: &'a Pipeline,
    /// Only these folds are held out; all folds when empty.
    pub eval_folds: Vec<u32>,
    pub repeats: usize,
    pub exec: Execution,
}

/// For each held-out fold (and repeat): trains on the remaining folds and
/// evaluates the EMA weights on the held-out fold.
pub fn kfold_run(
    data: &[LabeledSample],
    folds: &[u32],
    spec: &KFoldSpec<'_>,
    on_event: &mut dyn FnMut(KFoldEvent<'_>) -> Result<()>,
) -> Result<KFoldReport> {
    if data.len() != folds.len() {
        return Err(Error::LengthMismatch(data.len(), folds.len()));
    }
    let parts = fold_partition(folds)?;
    if parts.len() < 2 {
        return Err(Error::InvalidParameter("k-fold needs at least two folds".into()));
    }
    for f in &spec.eval_folds {
        if !parts.iter().any(|(g, _)| g == f) {
            return Err(Error::InvalidParameter(format!("fold {f} has no samples")));
        }
    }
    let mut results = Vec::new();
    let mut repeat_means = Vec::new();
    for repeat in 0..spec.repeats.max(1) {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (fold, eval_idx) in &parts {
            if !spec.eval_folds.is_empty() && !spec.eval_folds.contains(fold) {
                continue;
            }
            let train: Vec<LabeledSample> = folds.iter().enumerate().filter(|&(_, g)| g != fold).map(|(i, _)| data[i].clone()).collect();
            let eval: Vec<LabeledSample> = eval_idx.iter().map(|&i| data[i].clone()).collect();
            let mut cfg = spec.train.clone();
            cfg.seed = derive(spec.train.seed, &[repeat as u64, *fold as u64]);
            let model = EatModel::build(spec.model, cfg.seed)?;
            let mut trainer = Trainer::new(model, cfg, train.len(), spec.exec)?;
            let eval_ex = Examples::from_mono(&eval);
            for epoch in 0..trainer.cfg.epochs {
                let mut rec = trainer.train_epoch(&train, spec.pipeline, epoch)?;
                rec.fold = Some(*fold);
                on_event(KFoldEvent::Metrics(&rec))?;
                let m = evaluate(&trainer.ema_model(), &eval_ex, trainer.cfg.label_smoothing, spec.exec)?;
                let rec = MetricsRecord {
                    epoch,
                    split: "eval".into(),
                    loss: m.loss,
                    accuracy: m.accuracy,
                    map: m.map,
                    lr: rec.lr,
                    fold: Some(*fold),
                };
                on_event(KFoldEvent::Metrics(&rec))?;
            }
            let metrics = evaluate(&trainer.ema_model(), &eval_ex, trainer.cfg.label_smoothing, spec.exec)?;
            on_event(KFoldEvent::FoldDone { fold: *fold, repeat, trainer: &trainer })?;
            sum += metrics.headline();
            n += 1;
            results.push(FoldResult { fold: *fold, repeat, n_eval: eval.len(), metrics });
        }
        repeat_means.push(sum / n as f64);
    }
    let mean = repeat_means.iter().sum::<f64>() / repeat_means.len() as f64;
    Ok(KFoldReport { folds: results, repeat_means, mean })
}

/// Predicted class for every example, in order.
pub fn predict(model: &EatModel, inputs: &[Mat], exec: Execution) -> Result<Vec<usize>> {
    let logits = model.forward(inputs, exec)?;
    Ok((0..logits.rows).map(|r| argmax(logits.row(r))).collect())
}
