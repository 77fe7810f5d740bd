//! Per-entity late fusion of two modality models' bag predictions.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confidences are floored here before computing the adaptive weight.
pub const CONFIDENCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityRecord {
    pub entity_id: String,
    pub prediction: f64,
    pub confidence: f64,
    pub modality: Modality,
}

impl ModalityRecord {
    pub fn new(
        entity_id: impl Into<String>,
        prediction: f64,
        confidence: f64,
        modality: Modality,
    ) -> Result<Self> {
        let entity_id = entity_id.into();
        if !(0.0..=1.0).contains(&prediction) {
            return Err(Error::Value(format!(
                "`{entity_id}`: prediction {prediction} outside [0, 1]"
            )));
        }
        if !(confidence > 0.0 && confidence <= 1.0) {
            return Err(Error::Value(format!(
                "`{entity_id}`: confidence {confidence} outside (0, 1]"
            )));
        }
        Ok(ModalityRecord {
            entity_id,
            prediction,
            confidence,
            modality,
        })
    }
}

/// `lambda = c_a / (c_a + c_b)` after flooring both confidences.
pub fn adaptive_lambda(c_a: f64, c_b: f64) -> Result<f64> {
    if !c_a.is_finite() || !c_b.is_finite() || c_a < 0.0 || c_b < 0.0 {
        return Err(Error::Fusion(format!("invalid confidences ({c_a}, {c_b})")));
    }
    if c_a == 0.0 && c_b == 0.0 {
        return Err(Error::Fusion("both confidences are zero; weight undefined".into()));
    }
    let a = c_a.max(CONFIDENCE_FLOOR);
    let b = c_b.max(CONFIDENCE_FLOOR);
    Ok(a / (a + b))
}

/// `lambda * Y_a + (1 - lambda) * Y_b`
pub fn fuse(a: &ModalityRecord, b: &ModalityRecord, lambda: f64) -> Result<f64> {
    if a.entity_id != b.entity_id {
        return Err(Error::Fusion(format!(
            "cannot fuse `{}` with `{}`",
            a.entity_id, b.entity_id
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Fusion(format!("lambda {lambda} outside [0, 1]")));
    }
    let (lo, hi) = if a.prediction <= b.prediction {
        (a.prediction, b.prediction)
    } else {
        (b.prediction, a.prediction)
    };
    // rounding can land one ulp outside the pair
    Ok((lambda * a.prediction + (1.0 - lambda) * b.prediction).clamp(lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FusionMode {
    Adaptive,
    Fixed(f64),
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "adaptive" {
            return Ok(FusionMode::Adaptive);
        }
        let value = s
            .strip_prefix("fixed:")
            .ok_or_else(|| Error::Config(format!("unknown fusion mode `{s}`")))?;
        let lambda: f64 = value
            .parse()
            .map_err(|_| Error::Config(format!("invalid lambda `{value}`")))?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda {lambda} outside [0, 1]")));
        }
        Ok(FusionMode::Fixed(lambda))
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionMode::Adaptive => f.write_str("adaptive"),
            FusionMode::Fixed(l) => write!(f, "fixed:{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedPrediction {
    pub entity_id: String,
    pub prediction: f64,
    pub lambda: f64,
}

fn index(records: &[ModalityRecord]) -> Result<BTreeMap<&str, &ModalityRecord>> {
    let mut map = BTreeMap::new();
    for r in records {
        if map.insert(r.entity_id.as_str(), r).is_some() {
            return Err(Error::Fusion(format!(
                "duplicate entity id `{}` within one modality",
                r.entity_id
            )));
        }
    }
    Ok(map)
}

/// Joins on entity id and fuses each pair. Entities seen by one modality only
/// keep that modality's prediction with `lambda` 1 (A) or 0 (B). Output is
/// sorted by entity id.
pub fn fuse_dataset(
    records_a: &[ModalityRecord],
    records_b: &[ModalityRecord],
    mode: FusionMode,
) -> Result<Vec<FusedPrediction>> {
    let a = index(records_a)?;
    let b = index(records_b)?;
    let mut ids: Vec<&str> = a.keys().chain(b.keys()).copied().collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let (prediction, lambda) = match (a.get(id), b.get(id)) {
                (Some(ra), Some(rb)) => {
                    let lambda = match mode {
                        FusionMode::Adaptive => adaptive_lambda(ra.confidence, rb.confidence)?,
                        FusionMode::Fixed(l) => l,
                    };
                    (fuse(ra, rb, lambda)?, lambda)
                }
                (Some(ra), None) => (ra.prediction, 1.0),
                (None, Some(rb)) => (rb.prediction, 0.0),
                (None, None) => unreachable!("id drawn from one of the maps"),
            };
            Ok(FusedPrediction {
                entity_id: id.to_string(),
                prediction,
                lambda,
            })
        })
        .collect()
}

#[derive(Debug, Deserialize, Serialize)]
struct RecordRow {
    entity_id: String,
    prediction: f64,
    confidence: f64,
}

/// Reads a `entity_id,prediction,confidence` CSV.
pub fn read_records(path: &Path, modality: Modality) -> Result<Vec<ModalityRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for row in reader.deserialize::<RecordRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        out.push(ModalityRecord::new(
            row.entity_id,
            row.prediction,
            row.confidence,
            modality,
        )?);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[ModalityRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in records {
        writer
            .serialize(RecordRow {
                entity_id: r.entity_id.clone(),
                prediction: r.prediction,
                confidence: r.confidence,
            })
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::parse(path, e)
    }
}
