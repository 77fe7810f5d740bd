//! Binary classification metrics and the confidence-vs-accuracy curve.
//!
//! AUC-ROC is the Mann-Whitney statistic with half credit for ties, computed
//! from integer counts. Average precision is the uninterpolated step sum over
//! descending scores, ties kept in input order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub confidences: Option<Vec<f64>>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Metric(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Metric("labels must be 0 or 1".into()));
        }
        Ok(ScoredSet {
            scores,
            labels,
            confidences: None,
        })
    }

    pub fn with_confidences(mut self, confidences: Vec<f64>) -> Result<Self> {
        if confidences.len() != self.scores.len() {
            return Err(Error::Metric(format!(
                "{} confidences for {} scores",
                confidences.len(),
                self.scores.len()
            )));
        }
        self.confidences = Some(confidences);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(set: &ScoredSet, threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for (&s, &l) in set.scores.iter().zip(&set.labels) {
        match (s >= threshold, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// F1 at `score >= threshold`; 0 when precision and recall are both 0.
pub fn f_score(set: &ScoredSet, threshold: f64) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Metric("f-score of an empty set".into()));
    }
    let c = confusion(set, threshold);
    let denom = 2 * c.tp + c.fp + c.fn_;
    if c.tp == 0 {
        return Ok(0.0);
    }
    Ok((2 * c.tp) as f64 / denom as f64)
}

/// Fraction of positives scored at or above `threshold`.
pub fn recall(set: &ScoredSet, threshold: f64) -> Result<f64> {
    let c = confusion(set, threshold);
    if c.tp + c.fn_ == 0 {
        return Err(Error::Metric("recall needs at least one positive".into()));
    }
    Ok(c.tp as f64 / (c.tp + c.fn_) as f64)
}

/// Fraction of predictions (at `threshold`) that match the label.
pub fn accuracy(set: &ScoredSet, threshold: f64) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Metric("accuracy of an empty set".into()));
    }
    let c = confusion(set, threshold);
    Ok((c.tp + c.tn) as f64 / set.len() as f64)
}

pub fn auc_roc(set: &ScoredSet) -> Result<f64> {
    let n_pos = set.n_positive();
    let n_neg = set.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(format!(
            "AUC needs both classes, have {n_pos} positive and {n_neg} negative"
        )));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));

    // twice (#pos > neg) + #ties, in integers
    let mut doubled: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && set.scores[order[j]] == set.scores[order[i]] {
            if set.labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        doubled += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(doubled as f64 / (2 * n_pos as u128 * n_neg as u128) as f64)
}

pub fn average_precision(set: &ScoredSet) -> Result<f64> {
    let n_pos = set.n_positive();
    if n_pos == 0 {
        return Err(Error::Metric("average precision needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    // stable: equal scores keep input order
    order.sort_by(|&a, &b| set.scores[b].total_cmp(&set.scores[a]));
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if set.labels[i] == 1 {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub percentile: f64,
    pub threshold: f64,
    pub accuracy: Option<f64>,
    pub coverage: f64,
}

pub fn default_percentiles() -> Vec<f64> {
    (0..10).map(|i| f64::from(i) * 10.0).collect()
}

/// Linear interpolation between closest ranks of the sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// For each percentile of the confidence distribution, accuracy (scores
/// thresholded at 0.5) over the items whose confidence reaches it, plus the
/// retained fraction.
pub fn calibration_curve(set: &ScoredSet, percentiles: &[f64]) -> Result<Vec<CalibrationRow>> {
    let confidences = set
        .confidences
        .as_ref()
        .ok_or_else(|| Error::Metric("calibration curve needs confidences".into()))?;
    if set.is_empty() {
        return Err(Error::Metric("calibration curve of an empty set".into()));
    }
    let mut sorted = confidences.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(percentiles
        .iter()
        .map(|&p| {
            let threshold = percentile(&sorted, p);
            let (mut kept, mut correct) = (0usize, 0usize);
            for ((&c, &s), &l) in confidences.iter().zip(&set.scores).zip(&set.labels) {
                if c >= threshold {
                    kept += 1;
                    if u8::from(s >= DEFAULT_THRESHOLD) == l {
                        correct += 1;
                    }
                }
            }
            CalibrationRow {
                percentile: p,
                threshold,
                accuracy: (kept > 0).then(|| correct as f64 / kept as f64),
                coverage: kept as f64 / set.len() as f64,
            }
        })
        .collect())
}
