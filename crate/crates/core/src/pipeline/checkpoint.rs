use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayes_head::VariationalHead;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::series::Normalizer;

use super::config::TrainConfig;
use super::train::ModalityKind;

pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to resume or reuse a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub modality: ModalityKind,
    pub normalizer: Normalizer,
    pub encoder: Option<EncoderParams>,
    pub head: VariationalHead,
    pub rng: SeededRng,
    pub epoch: usize,
    pub loss_history: Vec<f64>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Value(format!("serializing checkpoint: {e}")))
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text).map_err(|e| Error::parse(path, e))?;
        if probe.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: probe.format_version,
                expected: FORMAT_VERSION,
            });
        }
        serde_json::from_str(text).map_err(|e| Error::parse(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text, path)
    }
}
