//! Multiple-instance training logic: class-balanced instance batches,
//! confidence-based attention, the attention-weighted loss and top-instance
//! bag aggregation.

use serde::{Deserialize, Serialize};

use crate::bayes_head::InstancePrediction;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Position of one instance: `(bag index, instance index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InstanceRef {
    pub bag: usize,
    pub instance: usize,
}

/// Anything that exposes bags of instances with a bag-level label.
pub trait BagSource {
    fn n_bags(&self) -> usize;
    fn bag_label(&self, bag: usize) -> u8;
    fn bag_len(&self, bag: usize) -> usize;
}

impl BagSource for [crate::series::Bag] {
    fn n_bags(&self) -> usize {
        self.len()
    }
    fn bag_label(&self, bag: usize) -> u8 {
        self[bag].label
    }
    fn bag_len(&self, bag: usize) -> usize {
        self[bag].len()
    }
}

/// Instances grouped by pseudo label, built once per dataset.
#[derive(Debug, Clone)]
pub struct InstancePool {
    pub negatives: Vec<InstanceRef>,
    pub positives: Vec<InstanceRef>,
}

impl InstancePool {
    pub fn new<S: BagSource + ?Sized>(bags: &S) -> Self {
        let mut negatives = Vec::new();
        let mut positives = Vec::new();
        for b in 0..bags.n_bags() {
            let target = if bags.bag_label(b) == 1 {
                &mut positives
            } else {
                &mut negatives
            };
            target.extend((0..bags.bag_len(b)).map(|instance| InstanceRef { bag: b, instance }));
        }
        InstancePool {
            negatives,
            positives,
        }
    }

    pub fn total(&self) -> usize {
        self.negatives.len() + self.positives.len()
    }
}

/// Draws `n_neg` negative-bag and `n_pos` positive-bag instances uniformly
/// with replacement, then shuffles the batch.
pub fn sample_batch(
    pool: &InstancePool,
    rng: &mut SeededRng,
    n_neg: usize,
    n_pos: usize,
) -> Result<Vec<InstanceRef>> {
    if pool.negatives.is_empty() || pool.positives.is_empty() {
        return Err(Error::Sampling(format!(
            "need instances of both pseudo classes, have {} negative and {} positive",
            pool.negatives.len(),
            pool.positives.len()
        )));
    }
    let mut batch = Vec::with_capacity(n_neg + n_pos);
    for _ in 0..n_neg {
        batch.push(pool.negatives[rng.below(pool.negatives.len())]);
    }
    for _ in 0..n_pos {
        batch.push(pool.positives[rng.below(pool.positives.len())]);
    }
    rng.shuffle(&mut batch);
    Ok(batch)
}

/// Population used for the attention threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MedianScope {
    /// Median over pseudo-positive instances only.
    #[default]
    Positives,
    /// Median over the whole batch.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBatch {
    pub pseudo_labels: Vec<u8>,
    pub predictions: Vec<f64>,
    pub confidences: Vec<f64>,
    pub attention: Vec<f64>,
    pub threshold: f64,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Piecewise attention: pseudo negatives get 1; pseudo positives whose score
/// `c * y` reaches the batch median `beta` keep the score, the rest get 0.
pub fn assign_attention(
    predictions: &[f64],
    confidences: &[f64],
    pseudo_labels: &[u8],
    scope: MedianScope,
) -> Result<AttentionBatch> {
    if predictions.len() != confidences.len() || predictions.len() != pseudo_labels.len() {
        return Err(Error::Shape("attention inputs differ in length".into()));
    }
    let scores: Vec<f64> = predictions.iter().zip(confidences).map(|(y, c)| c * y).collect();
    if !pseudo_labels.contains(&1) {
        return Err(Error::Attention(
            "no pseudo-positive instances in batch; threshold undefined".into(),
        ));
    }
    let mut pool: Vec<f64> = match scope {
        MedianScope::Positives => scores
            .iter()
            .zip(pseudo_labels)
            .filter(|(_, &l)| l == 1)
            .map(|(&s, _)| s)
            .collect(),
        MedianScope::All => scores.clone(),
    };
    let threshold = median(&mut pool).expect("pool is non-empty");
    let attention = scores
        .iter()
        .zip(pseudo_labels)
        .map(|(&s, &l)| match l {
            0 => 1.0,
            _ if s >= threshold => s,
            _ => 0.0,
        })
        .collect();
    Ok(AttentionBatch {
        pseudo_labels: pseudo_labels.to_vec(),
        predictions: predictions.to_vec(),
        confidences: confidences.to_vec(),
        attention,
        threshold,
    })
}

/// `(1 / batch_size) * sum_i a_i * L_i`
pub fn weighted_loss(batch: &AttentionBatch, losses: &[f64]) -> Result<f64> {
    if losses.len() != batch.attention.len() {
        return Err(Error::Shape(format!(
            "{} losses for {} attention weights",
            losses.len(),
            batch.attention.len()
        )));
    }
    if losses.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = batch.attention.iter().zip(losses).map(|(a, l)| a * l).sum();
    Ok(total / losses.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagPrediction {
    pub entity_id: String,
    pub prediction: f64,
    pub confidence: f64,
    pub top_indices: Vec<usize>,
}

/// Default number of top instances: `max(1, ceil(N / 10))`.
pub fn default_top_k(n: usize) -> usize {
    n.div_ceil(10).max(1)
}

/// Mean prediction and confidence of the `min(k, N)` instances with the
/// largest mean prediction; ties go to the lower instance index.
pub fn aggregate_bag(
    entity_id: &str,
    predictions: &[InstancePrediction],
    k: usize,
) -> Result<BagPrediction> {
    if predictions.is_empty() {
        return Err(Error::Aggregation(format!("bag `{entity_id}` has no instances")));
    }
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        predictions[b]
            .mean
            .total_cmp(&predictions[a].mean)
            .then(a.cmp(&b))
    });
    let take = k.max(1).min(predictions.len());
    order.truncate(take);
    let n = take as f64;
    let prediction = order.iter().map(|&i| predictions[i].mean).sum::<f64>() / n;
    let confidence = order.iter().map(|&i| predictions[i].confidence).sum::<f64>() / n;
    Ok(BagPrediction {
        entity_id: entity_id.to_string(),
        prediction,
        confidence,
        top_indices: order,
    })
}
