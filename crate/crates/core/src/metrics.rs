//! Frame-level classification metrics and time of prediction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PredictionTrace;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(predicted: &[u8], labels: &[u8]) -> Result<Self> {
        if predicted.len() != labels.len() {
            return Err(Error::Metric(format!(
                "{} predictions for {} labels",
                predicted.len(),
                labels.len()
            )));
        }
        let mut c = Self::default();
        for (&p, &y) in predicted.iter().zip(labels) {
            c.record(p, y);
        }
        Ok(c)
    }

    pub fn record(&mut self, predicted: u8, label: u8) {
        match (predicted == 1, label == 1) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    /// Confusion of the predictions with 0 and 1 exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.fn_,
            fp: self.tn,
            tn: self.fp,
            fn_: self.tp,
        }
    }
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(c: &Confusion) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / den.sqrt()
}

pub fn accuracy(c: &Confusion) -> Result<f64> {
    if c.total() == 0 {
        return Err(Error::Metric("accuracy of an empty confusion matrix".into()));
    }
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

/// Area under the ROC curve from the rank-sum statistic. Tied scores
/// receive averaged ranks, so each tied positive/negative pair counts 1/2.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Ranks are doubled so tied groups stay integral.
    let mut pos_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let rank2 = (i + 1 + j + 1) as u128;
        pos_rank_sum2 += rank2 * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        i = j + 1;
    }
    let u2 = pos_rank_sum2 - (n_pos as u128) * (n_pos as u128 + 1);
    Ok(u2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtpSummary {
    /// Mean 1-based index of the first collision prediction.
    pub atp: f64,
    pub avg_seq_len: f64,
    pub ratio: f64,
    /// Share of clips with at least one collision prediction.
    pub detection_fraction: f64,
    pub clips: usize,
}

/// Time of prediction over collision clips. Clips that never predict a
/// collision count with their full length.
pub fn atp(traces: &[&PredictionTrace]) -> Result<AtpSummary> {
    if traces.is_empty() {
        return Err(Error::Metric("ATP over zero collision clips".into()));
    }
    if traces.iter().any(|t| t.is_empty()) {
        return Err(Error::Metric("ATP over a clip without frames".into()));
    }
    let mut first_sum = 0.0;
    let mut len_sum = 0.0;
    let mut detected = 0;
    for t in traces {
        let first = match t.decisions.iter().position(|&d| d == 1) {
            Some(i) => {
                detected += 1;
                i + 1
            }
            None => t.len(),
        };
        first_sum += first as f64;
        len_sum += t.len() as f64;
    }
    let n = traces.len() as f64;
    let (atp, avg_seq_len) = (first_sum / n, len_sum / n);
    Ok(AtpSummary {
        atp,
        avg_seq_len,
        ratio: atp / avg_seq_len,
        detection_fraction: detected as f64 / n,
        clips: traces.len(),
    })
}

/// Predictions for one evaluated clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipPrediction {
    pub clip_id: String,
    pub label: u8,
    pub trace: PredictionTrace,
}

impl ClipPrediction {
    /// Majority vote over frames; an even split votes 0.
    pub fn majority(&self) -> u8 {
        let ones = self.trace.decisions.iter().filter(|&&d| d == 1).count();
        u8::from(2 * ones > self.trace.len())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipLevelMetrics {
    pub accuracy: f64,
    pub mcc: f64,
    /// From the mean collision probability of each clip.
    pub auc: Option<f64>,
    pub confusion: Confusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub mcc: f64,
    pub confusion: Confusion,
    pub atp_ratio: Option<f64>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Frame-level metrics of a set of clips, with optional per-fold entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Absent when only one class occurs.
    pub auc: Option<f64>,
    pub mcc: f64,
    pub confusion: Confusion,
    /// Absent when there are no collision clips.
    pub atp: Option<AtpSummary>,
    pub clips: usize,
    pub frames: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub folds: Vec<FoldMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_level: Option<ClipLevelMetrics>,
}

impl MetricsReport {
    pub fn atp_ratio(&self) -> Option<f64> {
        self.atp.map(|a| a.ratio)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned two-column text table.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        let mut rows: Vec<(String, String)> = vec![
            ("clips".into(), self.clips.to_string()),
            ("frames".into(), self.frames.to_string()),
            ("accuracy".into(), format!("{:.4}", self.accuracy)),
            ("auc".into(), opt(self.auc)),
            ("mcc".into(), format!("{:.4}", self.mcc)),
            (
                "confusion".into(),
                format!(
                    "tp={} fp={} tn={} fn={}",
                    self.confusion.tp, self.confusion.fp, self.confusion.tn, self.confusion.fn_
                ),
            ),
        ];
        if let Some(a) = self.atp {
            rows.push(("atp".into(), format!("{:.2} frames", a.atp)));
            rows.push(("avg_seq_len".into(), format!("{:.2} frames", a.avg_seq_len)));
            rows.push(("atp_ratio".into(), format!("{:.4}", a.ratio)));
            rows.push(("detected".into(), format!("{:.4}", a.detection_fraction)));
        }
        if let Some(c) = &self.clip_level {
            rows.push(("clip_accuracy".into(), format!("{:.4}", c.accuracy)));
            rows.push(("clip_auc".into(), opt(c.auc)));
            rows.push(("clip_mcc".into(), format!("{:.4}", c.mcc)));
        }
        for f in &self.folds {
            rows.push((
                format!("fold {}", f.fold),
                format!("acc={:.4} auc={} mcc={:.4} epochs={}", f.accuracy, opt(f.auc), f.mcc, f.epochs_run),
            ));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}

fn frame_arrays(preds: &[ClipPrediction]) -> (Vec<u8>, Vec<u8>, Vec<f64>) {
    let mut decisions = Vec::new();
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for p in preds {
        decisions.extend_from_slice(&p.trace.decisions);
        labels.extend(std::iter::repeat_n(p.label, p.trace.len()));
        scores.extend(p.trace.positive_scores());
    }
    (decisions, labels, scores)
}

fn optional_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let has = |c| labels.contains(&c);
    (has(0) && has(1)).then(|| auc(scores, labels).ok()).flatten()
}

pub fn clip_level(preds: &[ClipPrediction]) -> Result<ClipLevelMetrics> {
    let labels: Vec<u8> = preds.iter().map(|p| p.label).collect();
    let votes: Vec<u8> = preds.iter().map(ClipPrediction::majority).collect();
    let scores: Vec<f64> = preds
        .iter()
        .map(|p| p.trace.positive_scores().iter().sum::<f64>() / p.trace.len().max(1) as f64)
        .collect();
    let confusion = Confusion::from_predictions(&votes, &labels)?;
    Ok(ClipLevelMetrics {
        accuracy: accuracy(&confusion)?,
        mcc: mcc(&confusion),
        auc: optional_auc(&scores, &labels),
        confusion,
    })
}

/// Frame-level report over clip predictions; ATP uses the collision clips.
pub fn evaluate(preds: &[ClipPrediction], per_clip: bool) -> Result<MetricsReport> {
    let (decisions, labels, scores) = frame_arrays(preds);
    let confusion = Confusion::from_predictions(&decisions, &labels)?;
    let collisions: Vec<&PredictionTrace> = preds.iter().filter(|p| p.label == 1).map(|p| &p.trace).collect();
    Ok(MetricsReport {
        accuracy: accuracy(&confusion)?,
        auc: optional_auc(&scores, &labels),
        mcc: mcc(&confusion),
        confusion,
        atp: if collisions.is_empty() { None } else { Some(atp(&collisions)?) },
        clips: preds.len(),
        frames: decisions.len(),
        folds: Vec::new(),
        clip_level: if per_clip { Some(clip_level(preds)?) } else { None },
    })
}
