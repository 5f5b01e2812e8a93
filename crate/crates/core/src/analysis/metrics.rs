use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with precision, recall and F1. A ratio whose
/// denominator is zero is reported as 0 and listed in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: Vec<String>,
}

impl DetectionMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let mut undefined = Vec::new();
        let mut ratio = |num: usize, den: usize, name: &str| {
            if den == 0 {
                undefined.push(name.to_string());
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp, "precision");
        let recall = ratio(tp, tp + fn_, "recall");
        let f1 = if precision + recall == 0.0 {
            undefined.push("f1".to_string());
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { tp, fp, fn_, tn, precision, recall, f1, undefined }
    }

    /// Sums the confusion counts of several reports and recomputes the ratios.
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a DetectionMetrics>) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for m in parts {
            tp += m.tp;
            fp += m.fp;
            fn_ += m.fn_;
            tn += m.tn;
        }
        Self::from_counts(tp, fp, fn_, tn)
    }
}

pub fn detection_metrics(flags: &[bool], truth: &[bool]) -> Result<DetectionMetrics> {
    if flags.len() != truth.len() {
        return Err(Error::shape("metrics", format!("{} flags vs {} labels", flags.len(), truth.len())));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&f, &t) in flags.iter().zip(truth) {
        match (f, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(DetectionMetrics::from_counts(tp, fp, fn_, tn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub segments: usize,
    pub top1: f64,
    pub top3: f64,
    pub top5: f64,
    /// Set when there were no segments; the accuracies are then 0.
    pub undefined: bool,
}

/// Fraction of segments whose true root is among the first `k` ranked.
pub fn topk_accuracy(rankings: &[Vec<usize>], roots: &[usize], k: usize) -> Result<f64> {
    if rankings.len() != roots.len() {
        return Err(Error::shape("topk", format!("{} rankings vs {} roots", rankings.len(), roots.len())));
    }
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let hits = rankings.iter().zip(roots).filter(|(r, root)| r.iter().take(k).any(|v| v == *root)).count();
    Ok(hits as f64 / rankings.len() as f64)
}

pub fn topk_summary(rankings: &[Vec<usize>], roots: &[usize]) -> Result<TopK> {
    Ok(TopK {
        segments: rankings.len(),
        top1: topk_accuracy(rankings, roots, 1)?,
        top3: topk_accuracy(rankings, roots, 3)?,
        top5: topk_accuracy(rankings, roots, 5)?,
        undefined: rankings.is_empty(),
    })
}

/// Fraction of equal pairs; 0 for empty input.
pub fn accuracy<E: PartialEq>(predicted: &[E], truth: &[E]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::shape("accuracy", format!("{} predictions vs {} labels", predicted.len(), truth.len())));
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    Ok(predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / predicted.len() as f64)
}

/// Area under the ROC curve of `scores` against binary `truth`: the
/// probability that a random positive outscores a random negative, ties
/// counting one half. `None` when either class is empty.
pub fn auroc(scores: &[f64], truth: &[bool]) -> Result<Option<f64>> {
    if scores.len() != truth.len() {
        return Err(Error::shape("auroc", format!("{} scores vs {} labels", scores.len(), truth.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("auroc scores".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks over tie groups.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| truth[k]).count() as f64 * mid;
        i = j + 1;
    }
    let pos = truth.iter().filter(|&&t| t).count() as f64;
    let neg = truth.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Ok(None);
    }
    Ok(Some((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg)))
}
