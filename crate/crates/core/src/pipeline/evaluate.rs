use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayes_head::{predict_batch, InstancePrediction};
use crate::encoder::encode;
use crate::error::{Error, Result};
use crate::fusion::{Modality, ModalityRecord};
use crate::ingest::{Dataset, FeatureRecord};
use crate::metrics::{
    auc_roc, average_precision, calibration_curve, default_percentiles, f_score, CalibrationRow,
    ScoredSet, DEFAULT_THRESHOLD,
};
use crate::mil::aggregate_bag;
use crate::rng::SeededRng;
use crate::series::Bag;

use super::checkpoint::Checkpoint;
use super::train::ModalityKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagReport {
    pub entity_id: String,
    pub label: u8,
    pub prediction: f64,
    pub confidence: f64,
    pub top_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: String,
    pub n_bags: usize,
    pub f_score: f64,
    /// `None` when the data holds a single class.
    pub auc_roc: Option<f64>,
    pub average_precision: Option<f64>,
    pub calibration: Vec<CalibrationRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_auc: Option<f64>,
    pub bags: Vec<BagReport>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Value(format!("serializing report: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn scored_set(&self) -> Result<ScoredSet> {
        ScoredSet::new(
            self.bags.iter().map(|b| b.prediction).collect(),
            self.bags.iter().map(|b| b.label).collect(),
        )?
        .with_confidences(self.bags.iter().map(|b| b.confidence).collect())
    }
}

/// Per-instance predictions of one bag, from an RNG stream keyed by the
/// entity id so results do not depend on evaluation order.
pub fn predict_bag_instances(checkpoint: &Checkpoint, bag: &Bag) -> Result<Vec<InstancePrediction>> {
    let encoder = match (&checkpoint.modality, &checkpoint.encoder) {
        (ModalityKind::Series, Some(e)) => e,
        _ => return Err(Error::Schema("checkpoint was not trained on series bags".into())),
    };
    let features = bag
        .instances
        .iter()
        .map(|inst| {
            if inst.n_channels() != checkpoint.normalizer.n_channels() {
                return Err(Error::Schema(format!(
                    "bag `{}` has {} channels, model expects {}",
                    bag.entity_id,
                    inst.n_channels(),
                    checkpoint.normalizer.n_channels()
                )));
            }
            encode(&checkpoint.normalizer.apply_window(&inst.window)?, encoder)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = SeededRng::derive(checkpoint.config.seed, &bag.entity_id);
    predict_batch(&features, &checkpoint.head, checkpoint.config.j_eval, &mut rng)
}

fn predict_record(checkpoint: &Checkpoint, record: &FeatureRecord) -> Result<InstancePrediction> {
    if checkpoint.modality != ModalityKind::Features {
        return Err(Error::Schema("checkpoint was not trained on feature records".into()));
    }
    let n = &checkpoint.normalizer;
    if record.features.len() != n.n_channels() {
        return Err(Error::Schema(format!(
            "record `{}` has {} features, model expects {}",
            record.entity_id,
            record.features.len(),
            n.n_channels()
        )));
    }
    let feature: Vec<f64> = record
        .features
        .iter()
        .enumerate()
        .map(|(m, &v)| n.normalize_value(m, v))
        .collect();
    let mut rng = SeededRng::derive(checkpoint.config.seed, &record.entity_id);
    let mut out = predict_batch(&[feature], &checkpoint.head, checkpoint.config.j_eval, &mut rng)?;
    Ok(out.remove(0))
}

/// Bag-level predictions plus, for series data, the instance predictions.
pub fn predict_dataset(
    checkpoint: &Checkpoint,
    data: &Dataset,
) -> Result<(Vec<BagReport>, Option<Vec<Vec<InstancePrediction>>>)> {
    match data {
        Dataset::Bags(bags) => {
            let mut reports = Vec::with_capacity(bags.len());
            let mut instances = Vec::with_capacity(bags.len());
            for bag in bags {
                let preds = predict_bag_instances(checkpoint, bag)?;
                let k = checkpoint.config.top_k_for(preds.len());
                let agg = aggregate_bag(&bag.entity_id, &preds, k)?;
                reports.push(BagReport {
                    entity_id: agg.entity_id,
                    label: bag.label,
                    prediction: agg.prediction,
                    confidence: agg.confidence,
                    top_indices: agg.top_indices,
                });
                instances.push(preds);
            }
            Ok((reports, Some(instances)))
        }
        Dataset::Features(records) => {
            let reports = records
                .iter()
                .map(|r| {
                    let p = predict_record(checkpoint, r)?;
                    Ok(BagReport {
                        entity_id: r.entity_id.clone(),
                        label: r.label,
                        prediction: p.mean,
                        confidence: p.confidence,
                        top_indices: vec![0],
                    })
                })
                .collect::<Result<_>>()?;
            Ok((reports, None))
        }
    }
}

pub fn evaluate(checkpoint: &Checkpoint, data: &Dataset) -> Result<Report> {
    if data.is_empty() {
        return Err(Error::Metric("nothing to evaluate".into()));
    }
    let (bags, instances) = predict_dataset(checkpoint, data)?;
    let set = ScoredSet::new(
        bags.iter().map(|b| b.prediction).collect(),
        bags.iter().map(|b| b.label).collect(),
    )?
    .with_confidences(bags.iter().map(|b| b.confidence).collect())?;

    let instance_auc = match (data, instances) {
        (Dataset::Bags(source), Some(preds)) => {
            let truth: Option<Vec<Vec<u8>>> = source.iter().map(Bag::true_labels).collect();
            match truth {
                Some(truth) => {
                    let scores = preds.iter().flatten().map(|p| p.mean).collect();
                    let labels = truth.into_iter().flatten().collect();
                    auc_roc(&ScoredSet::new(scores, labels)?).ok()
                }
                None => None,
            }
        }
        _ => None,
    };

    Ok(Report {
        task: checkpoint.config.task.name.to_string(),
        n_bags: bags.len(),
        f_score: f_score(&set, DEFAULT_THRESHOLD)?,
        auc_roc: auc_roc(&set).ok(),
        average_precision: average_precision(&set).ok(),
        calibration: calibration_curve(&set, &default_percentiles())?,
        instance_auc,
        bags,
    })
}

/// Bag predictions as fusion input records.
pub fn predict(checkpoint: &Checkpoint, data: &Dataset, modality: Modality) -> Result<Vec<ModalityRecord>> {
    let (bags, _) = predict_dataset(checkpoint, data)?;
    bags.into_iter()
        .map(|b| ModalityRecord::new(b.entity_id, b.prediction, b.confidence, modality))
        .collect()
}
