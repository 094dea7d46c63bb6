//! Optimization loop, stratified folds and evaluation orchestration.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ParamStore, Tensor2};
use crate::metrics::{self, ClipPrediction, FoldMetrics, MetricsReport};
use crate::model::{clip_forward, clip_gradients, encode_dataset, predict_clip, Checkpoint, EncodedClip, Mode, ModelConfig, ModelParams};
use crate::dataset::Dataset;
use crate::scene_graph::ExtractionConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    /// `total / (2 · count)` per class, from the training labels.
    Auto,
    /// Both classes weigh 1.
    Uniform,
    Explicit([f64; 2]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_clips: usize,
    pub seed: u64,
    pub folds: usize,
    pub class_weights: ClassWeighting,
    /// Epochs without validation improvement before stopping; `None`
    /// disables the validation split and keeps the last epoch.
    pub early_stop_patience: Option<usize>,
    pub validation_fraction: f64,
    pub grad_clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            epochs: 200,
            batch_clips: 1,
            seed: 0,
            folds: 5,
            class_weights: ClassWeighting::Auto,
            early_stop_patience: Some(25),
            validation_fraction: 0.1,
            grad_clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be non-negative, got {}", self.learning_rate)));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.batch_clips == 0 {
            return Err(Error::Config("batch_clips must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in [0, 0.5), got {}",
                self.validation_fraction
            )));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::Config("grad_clip_norm must be positive".into()));
        }
        if let ClassWeighting::Explicit(w) = self.class_weights {
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Config(format!("class weights must be positive, got {w:?}")));
            }
        }
        Ok(())
    }
}

/// `(w0, w1)` with `w_c = total / (2 · count_c)`.
pub fn class_weights_auto(labels: &[u8]) -> Result<[f64; 2]> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Config("class weights need both classes present".into()));
    }
    let total = labels.len() as f64;
    Ok([total / (2.0 * neg as f64), total / (2.0 * pos as f64)])
}

fn resolve_weights(w: &ClassWeighting, labels: &[u8]) -> Result<[f64; 2]> {
    match w {
        ClassWeighting::Auto => class_weights_auto(labels),
        ClassWeighting::Uniform => Ok([1.0, 1.0]),
        ClassWeighting::Explicit(w) => Ok(*w),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffles each class separately, then deals the clips round-robin over
/// the folds with one counter shared by both classes.
pub fn stratified_folds(clips: &[(String, u8)], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Stratification(format!("need at least 2 folds, got {k}")));
    }
    let unique: BTreeSet<&str> = clips.iter().map(|c| c.0.as_str()).collect();
    if unique.len() != clips.len() {
        return Err(Error::Stratification("clip ids are not unique".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut counter = 0;
    for class in [0u8, 1] {
        let mut ids: Vec<&String> = clips.iter().filter(|c| c.1 == class).map(|c| &c.0).collect();
        if ids.len() < k {
            return Err(Error::Stratification(format!(
                "class {class} has {} clips, fewer than {k} folds",
                ids.len()
            )));
        }
        ids.shuffle(&mut rng);
        for id in ids {
            test[counter % k].push(id.clone());
            counter += 1;
        }
    }
    if counter != clips.len() {
        return Err(Error::Stratification("labels must be 0 or 1".into()));
    }
    Ok(test
        .iter()
        .enumerate()
        .map(|(fold, t)| {
            let held: BTreeSet<&String> = t.iter().collect();
            FoldSplit {
                fold,
                train: clips.iter().map(|c| &c.0).filter(|id| !held.contains(id)).cloned().collect(),
                test: t.clone(),
            }
        })
        .collect())
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<Tensor2>,
    v: Vec<Tensor2>,
}

impl Adam {
    pub fn new(store: &ParamStore, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: store.zeros_like(),
            v: store.zeros_like(),
        }
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &[Tensor2]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let p = store.get_mut(id).data_mut();
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (j, &g) in grads[k].data().iter().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                p[j] -= self.learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + self.epsilon);
            }
        }
    }
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor2], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor2::sum_of_squares).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub class_weights: [f64; 2],
    pub validation_ids: Vec<String>,
}

impl TrainOutcome {
    pub fn epochs_run(&self) -> usize {
        self.curve.len()
    }
}

/// Stratified hold-out of `fraction` of each class (at least one clip per
/// class that has two or more).
fn validation_split(clips: &[EncodedClip], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..clips.len()).filter(|&i| clips[i].label == class).collect();
        idx.shuffle(rng);
        let n_val = if fraction > 0.0 && idx.len() >= 2 {
            ((fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn mean_loss(params: &ModelParams, clips: &[&EncodedClip], weights: [f64; 2]) -> Result<f64> {
    let mut total = 0.0;
    for c in clips {
        total += clip_forward(params, c, weights, Mode::Eval)?.loss;
    }
    Ok(total / clips.len().max(1) as f64)
}

/// Trains a fresh model. Deterministic given `train_cfg.seed`.
pub fn train(clips: &[EncodedClip], model_cfg: &ModelConfig, train_cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(clips, model_cfg, train_cfg, |_| {})
}

pub fn train_with_progress(
    clips: &[EncodedClip],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    let vocab = clips
        .first()
        .and_then(|c| c.frames.first())
        .map(|g| g.class_count())
        .ok_or_else(|| Error::Config("training needs at least one non-empty clip".into()))?;
    let labels: Vec<u8> = clips.iter().map(|c| c.label).collect();
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::Config("training data must contain both classes".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut params = ModelParams::init(model_cfg, vocab, rng.next_u64())?;
    let (mut train_idx, val_idx) = match train_cfg.early_stop_patience {
        Some(_) => validation_split(clips, train_cfg.validation_fraction, &mut rng),
        None => ((0..clips.len()).collect(), Vec::new()),
    };
    let train_labels: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
    let weights = resolve_weights(&train_cfg.class_weights, &train_labels)?;
    let val: Vec<&EncodedClip> = val_idx.iter().map(|&i| &clips[i]).collect();

    let mut adam = Adam::new(&params.store, train_cfg.learning_rate);
    let mut curve = Vec::with_capacity(train_cfg.epochs);
    let mut best = (params.clone(), 0, f64::INFINITY);
    let mut since_best = 0;
    for epoch in 1..=train_cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(train_cfg.batch_clips) {
            let mut acc = params.store.zeros_like();
            for &i in batch {
                let clip = &clips[i];
                let (out, grads) = clip_gradients(&params, clip, weights, Mode::Train(&mut rng))?;
                if !out.loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        clip_id: clip.id.clone(),
                    });
                }
                epoch_loss += out.loss;
                for (a, g) in acc.iter_mut().zip(grads.into_dense(&params.store)) {
                    a.add_assign(&g);
                }
            }
            if batch.len() > 1 {
                let s = 1.0 / batch.len() as f64;
                acc.iter_mut().for_each(|a| *a = a.scaled(s));
            }
            clip_global_norm(&mut acc, train_cfg.grad_clip_norm);
            adam.update(&mut params.store, &acc);
        }
        let train_loss = epoch_loss / train_idx.len().max(1) as f64;
        let val_loss = if val.is_empty() { None } else { Some(mean_loss(&params, &val, weights)?) };
        let record = EpochRecord { epoch, train_loss, val_loss };
        progress(&record);
        curve.push(record);
        match (val_loss, train_cfg.early_stop_patience) {
            (Some(v), Some(patience)) => {
                if v < best.2 {
                    best = (params.clone(), epoch, v);
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= patience {
                        break;
                    }
                }
            }
            _ => best = (params.clone(), epoch, val_loss.unwrap_or(train_loss)),
        }
    }
    let (params, best_epoch, best_val_loss) = best;
    Ok(TrainOutcome {
        params,
        curve,
        best_epoch,
        best_val_loss,
        class_weights: weights,
        validation_ids: val_idx.iter().map(|&i| clips[i].id.clone()).collect(),
    })
}

/// Evaluation-mode predictions for every clip, in input order.
pub fn predict_clips(params: &ModelParams, clips: &[EncodedClip], jobs: usize) -> Result<Vec<ClipPrediction>> {
    let one = |c: &EncodedClip| {
        Ok(ClipPrediction {
            clip_id: c.id.clone(),
            label: c.label,
            trace: predict_clip(params, c)?,
        })
    };
    if jobs <= 1 {
        return clips.iter().map(one).collect();
    }
    pool(jobs)?.install(|| clips.par_iter().map(one).collect())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))
}

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub split: FoldSplit,
    pub outcome: TrainOutcome,
    pub predictions: Vec<ClipPrediction>,
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    /// Pooled over all test folds, with one entry per fold.
    pub report: MetricsReport,
    pub folds: Vec<FoldResult>,
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Stratified k-fold cross-validation. Folds run on up to `jobs` threads;
/// results do not depend on `jobs`.
pub fn cross_validate(
    clips: &[EncodedClip],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    jobs: usize,
    per_clip: bool,
) -> Result<CvOutcome> {
    train_cfg.validate()?;
    let ids: Vec<(String, u8)> = clips.iter().map(|c| (c.id.clone(), c.label)).collect();
    let splits = stratified_folds(&ids, train_cfg.folds, train_cfg.seed)?;
    let by_id = |wanted: &[String]| -> Vec<EncodedClip> {
        let set: BTreeSet<&String> = wanted.iter().collect();
        clips.iter().filter(|c| set.contains(&c.id)).cloned().collect()
    };
    let run = |split: &FoldSplit| -> Result<FoldResult> {
        let cfg = TrainConfig {
            seed: fold_seed(train_cfg.seed, split.fold),
            ..train_cfg.clone()
        };
        let outcome = train(&by_id(&split.train), model_cfg, &cfg)?;
        let predictions = predict_clips(&outcome.params, &by_id(&split.test), 1)?;
        Ok(FoldResult {
            split: split.clone(),
            outcome,
            predictions,
        })
    };
    let folds: Vec<FoldResult> = if jobs <= 1 {
        splits.iter().map(run).collect::<Result<_>>()?
    } else {
        pool(jobs)?.install(|| splits.par_iter().map(run).collect::<Result<_>>())?
    };

    let all: Vec<ClipPrediction> = folds.iter().flat_map(|f| f.predictions.iter().cloned()).collect();
    let mut report = metrics::evaluate(&all, per_clip)?;
    for f in &folds {
        let r = metrics::evaluate(&f.predictions, false)?;
        report.folds.push(FoldMetrics {
            fold: f.split.fold,
            accuracy: r.accuracy,
            auc: r.auc,
            mcc: r.mcc,
            confusion: r.confusion,
            atp_ratio: r.atp_ratio(),
            epochs_run: f.outcome.epochs_run(),
            best_epoch: f.outcome.best_epoch,
            best_val_loss: f.outcome.best_val_loss,
        });
    }
    Ok(CvOutcome { report, folds })
}

/// Evaluates a checkpoint on another dataset without touching its weights.
/// The dataset is extracted with the checkpoint's own settings, so classes
/// outside its vocabulary are reported as schema errors.
pub fn transfer_eval(checkpoint: &Checkpoint, dataset: &Dataset, jobs: usize, per_clip: bool) -> Result<MetricsReport> {
    let clips = encode_dataset(dataset, &checkpoint.extraction)?;
    evaluate_clips(&checkpoint.params, &clips, jobs, per_clip)
}

pub fn evaluate_clips(params: &ModelParams, clips: &[EncodedClip], jobs: usize, per_clip: bool) -> Result<MetricsReport> {
    if clips.is_empty() {
        return Err(Error::Metric("no clips to evaluate".into()));
    }
    metrics::evaluate(&predict_clips(params, clips, jobs)?, per_clip)
}

/// Everything needed to reproduce a training or evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub dataset: String,
    pub clips: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub extraction: ExtractionConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub folds: Vec<FoldSplit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<Vec<EpochRecord>>,
    pub report: Option<MetricsReport>,
}

/// Loss curves as CSV: `fold,epoch,train_loss,val_loss`.
pub fn curves_csv(curves: &[Vec<EpochRecord>]) -> String {
    let mut out = String::from("fold,epoch,train_loss,val_loss\n");
    for (fold, curve) in curves.iter().enumerate() {
        for r in curve {
            let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{fold},{},{},{val}", r.epoch, r.train_loss);
        }
    }
    out
}
