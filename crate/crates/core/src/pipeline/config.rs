use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayes_head::HeadConfig;
use crate::encoder::DEFAULT_FEATURE_DIM;
use crate::error::{Error, Result};
use crate::ingest::TaskSpec;
use crate::mil::{default_top_k, MedianScope};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub task: TaskSpec,
    pub window_len: usize,
    pub n_neg: usize,
    pub n_pos: usize,
    pub epochs: usize,
    /// `None` means `ceil(training instances / batch size)`.
    pub steps_per_epoch: Option<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub feature_dim: usize,
    pub prior_sigma: f64,
    pub k: f64,
    pub j_train: usize,
    pub j_eval: usize,
    pub rho_init: f64,
    /// Fixed number of top instances per bag; `None` uses `max(1, ceil(N/10))`.
    pub top_k: Option<usize>,
    pub seed: u64,
    pub median_scope: MedianScope,
    pub attention: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let head = HeadConfig::default();
        TrainConfig {
            task: TaskSpec::default(),
            window_len: 100,
            n_neg: 200,
            n_pos: 400,
            epochs: 200,
            steps_per_epoch: None,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            feature_dim: DEFAULT_FEATURE_DIM,
            prior_sigma: head.prior_sigma,
            k: head.k,
            j_train: head.j_train,
            j_eval: head.j_eval,
            rho_init: head.rho_init,
            top_k: None,
            seed: 0,
            median_scope: MedianScope::Positives,
            attention: true,
        }
    }
}

impl TrainConfig {
    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            prior_sigma: self.prior_sigma,
            k: self.k,
            j_train: self.j_train,
            j_eval: self.j_eval,
            rho_init: self.rho_init,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.n_neg + self.n_pos
    }

    pub fn top_k_for(&self, n_instances: usize) -> usize {
        self.top_k.unwrap_or_else(|| default_top_k(n_instances))
    }

    pub fn steps_for(&self, n_instances: usize) -> usize {
        self.steps_per_epoch
            .unwrap_or_else(|| n_instances.div_ceil(self.batch_size()).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window_len", self.window_len),
            ("epochs", self.epochs),
            ("feature_dim", self.feature_dim),
            ("n_pos", self.n_pos),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::Config("steps_per_epoch must be positive".into()));
        }
        if self.top_k == Some(0) {
            return Err(Error::Config("top_k must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        self.head_config().validate()
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}
