use serde::{Deserialize, Serialize};

use crate::bayes_head::{elbo_loss, predict_batch, VariationalHead};
use crate::encoder::{backward_into, forward_trace, EncoderParams, EncoderTrace};
use crate::error::{Error, Result};
use crate::ingest::{Dataset, FeatureRecord};
use crate::mil::{assign_attention, sample_batch, BagSource, InstancePool, InstanceRef};
use crate::rng::SeededRng;
use crate::series::{Bag, Normalizer, KINEMATIC_CHANNELS};

use super::checkpoint::{Checkpoint, FORMAT_VERSION};
use super::config::TrainConfig;
use super::optim::Adam;

/// What an instance is for a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityKind {
    /// Windows of a multivariate series, fed through the encoder.
    Series,
    /// Precomputed feature vectors, fed straight into the head.
    Features,
}

pub(crate) fn channel_names(m: usize) -> Vec<String> {
    if m == KINEMATIC_CHANNELS.len() {
        KINEMATIC_CHANNELS.iter().map(|s| s.to_string()).collect()
    } else {
        (0..m).map(|i| format!("c{i}")).collect()
    }
}

pub(crate) fn feature_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("f{i}")).collect()
}

struct FeatureBags<'a>(&'a [FeatureRecord]);

impl BagSource for FeatureBags<'_> {
    fn n_bags(&self) -> usize {
        self.0.len()
    }
    fn bag_label(&self, bag: usize) -> u8 {
        self.0[bag].label
    }
    fn bag_len(&self, _bag: usize) -> usize {
        1
    }
}

/// Normalized model inputs, indexed like the dataset.
enum Inputs {
    Windows(Vec<Vec<Vec<Vec<f64>>>>),
    Vectors(Vec<Vec<f64>>),
}

fn check_bag_shapes(bags: &[Bag]) -> Result<(usize, usize)> {
    let first = bags
        .first()
        .and_then(|b| b.instances.first())
        .ok_or_else(|| Error::Sampling("no training bags".into()))?;
    let (m, w) = (first.n_channels(), first.width());
    for b in bags {
        if b.is_empty() {
            return Err(Error::Shape(format!("bag `{}` has no instances", b.entity_id)));
        }
        for inst in &b.instances {
            if inst.n_channels() != m || inst.width() != w {
                return Err(Error::Schema(format!(
                    "bag `{}` window {} is {}x{}, expected {m}x{w}",
                    b.entity_id,
                    inst.index,
                    inst.n_channels(),
                    inst.width()
                )));
            }
        }
    }
    Ok((m, w))
}

fn check_feature_shapes(records: &[FeatureRecord]) -> Result<usize> {
    let d = records
        .first()
        .map(|r| r.features.len())
        .ok_or_else(|| Error::Sampling("no training records".into()))?;
    if d == 0 {
        return Err(Error::Shape("feature vectors are empty".into()));
    }
    if let Some(r) = records.iter().find(|r| r.features.len() != d) {
        return Err(Error::Schema(format!(
            "record `{}` has {} features, expected {d}",
            r.entity_id,
            r.features.len()
        )));
    }
    Ok(d)
}

struct Model {
    encoder: Option<EncoderParams>,
    head: VariationalHead,
}

struct Optimizers {
    encoder: Option<Adam>,
    mu: Adam,
    rho: Adam,
}

/// Trains encoder and head on `data` (which must hold both bag classes).
///
/// The window width and channel count are taken from the data; the stored
/// config's `window_len` is overwritten with the width actually seen.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<Checkpoint> {
    config.validate()?;
    let mut config = config.clone();
    let mut rng = SeededRng::new(config.seed);
    let head_cfg = config.head_config();

    let (kind, pool, normalizer, inputs, mut model) = match data {
        Dataset::Bags(bags) => {
            let (m, w) = check_bag_shapes(bags)?;
            config.window_len = w;
            let windows = || bags.iter().flat_map(|b| b.instances.iter().map(|i| &i.window));
            let normalizer = Normalizer::fit_windows(channel_names(m), windows())?;
            let normalized = bags
                .iter()
                .map(|b| {
                    b.instances
                        .iter()
                        .map(|i| normalizer.apply_window(&i.window))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let encoder = EncoderParams::init(m, config.feature_dim, &mut rng);
            let head = VariationalHead::init(config.feature_dim, &head_cfg, &mut rng);
            (
                ModalityKind::Series,
                InstancePool::new(bags.as_slice()),
                normalizer,
                Inputs::Windows(normalized),
                Model { encoder: Some(encoder), head },
            )
        }
        Dataset::Features(records) => {
            let d = check_feature_shapes(records)?;
            let normalizer =
                Normalizer::fit_columns(feature_names(d), |m| records.iter().map(move |r| &r.features[m]))?;
            let vectors = records
                .iter()
                .map(|r| {
                    r.features
                        .iter()
                        .enumerate()
                        .map(|(m, &v)| normalizer.normalize_value(m, v))
                        .collect()
                })
                .collect();
            let head = VariationalHead::init(d, &head_cfg, &mut rng);
            (
                ModalityKind::Features,
                InstancePool::new(&FeatureBags(records)),
                normalizer,
                Inputs::Vectors(vectors),
                Model { encoder: None, head },
            )
        }
    };

    let new_adam =
        |n: usize| Adam::new(n, config.learning_rate, config.beta1, config.beta2, config.epsilon);
    let mut optim = Optimizers {
        encoder: model.encoder.as_ref().map(|e| new_adam(e.len())),
        mu: new_adam(model.head.n_weights()),
        rho: new_adam(model.head.n_weights()),
    };

    let n_total = pool.total();
    let steps = config.steps_for(n_total);
    // attention only means something when bags hold several instances
    let use_attention = config.attention && kind == ModalityKind::Series;
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut epoch_loss = 0.0;
        for step in 1..=steps {
            let loss = train_step(
                &config,
                &pool,
                &inputs,
                &mut model,
                &mut optim,
                use_attention,
                n_total,
                &mut rng,
            )
            .map_err(|e| match e {
                Error::NonFinite { detail, .. } => Error::NonFinite { epoch, step, detail },
                other => other,
            })?;
            epoch_loss += loss;
        }
        loss_history.push(epoch_loss / steps as f64);
    }

    Ok(Checkpoint {
        format_version: FORMAT_VERSION,
        config,
        modality: kind,
        normalizer,
        encoder: model.encoder,
        head: model.head,
        rng,
        epoch: loss_history.len(),
        loss_history,
    })
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    config: &TrainConfig,
    pool: &InstancePool,
    inputs: &Inputs,
    model: &mut Model,
    optim: &mut Optimizers,
    use_attention: bool,
    n_total: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    let batch = sample_batch(pool, rng, config.n_neg, config.n_pos)?;
    let pseudo: Vec<u8> = batch
        .iter()
        .map(|r| u8::from(pool.positives.binary_search(r).is_ok()))
        .collect();

    let mut traces: Vec<EncoderTrace> = Vec::new();
    let features: Vec<Vec<f64>> = match (inputs, &model.encoder) {
        (Inputs::Windows(w), Some(enc)) => {
            traces = batch
                .iter()
                .map(|&InstanceRef { bag, instance }| forward_trace(&w[bag][instance], enc))
                .collect::<Result<_>>()?;
            traces.iter().map(|t| t.output().to_vec()).collect()
        }
        (Inputs::Vectors(v), None) => batch.iter().map(|r| v[r.bag].clone()).collect(),
        _ => unreachable!("inputs and model are built together"),
    };

    let attention = if use_attention {
        let preds = predict_batch(&features, &model.head, config.j_train, rng)?;
        let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
        let confs: Vec<f64> = preds.iter().map(|p| p.confidence).collect();
        Some(assign_attention(&means, &confs, &pseudo, config.median_scope)?.attention)
    } else {
        None
    };

    let b = batch.len() as f64;
    let out = elbo_loss(
        &features,
        &pseudo,
        attention.as_deref(),
        &model.head,
        config.j_train,
        b / n_total as f64,
        rng,
    )?;
    let loss = out.loss / b;
    if !loss.is_finite() {
        return Err(Error::NonFinite { epoch: 0, step: 0, detail: format!("loss is {loss}") });
    }

    if let (Some(enc), Some(adam)) = (model.encoder.as_mut(), optim.encoder.as_mut()) {
        let mut grads = enc.zeros_like();
        for (trace, g) in traces.iter().zip(&out.grad_features) {
            let upstream: Vec<f64> = g.iter().map(|v| v / b).collect();
            backward_into(trace, enc, &upstream, &mut grads)?;
        }
        if grads.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                epoch: 0,
                step: 0,
                detail: "encoder gradient is not finite".into(),
            });
        }
        adam.update(&mut enc.values, &grads.values);
    }
    let scale = |g: &[f64]| g.iter().map(|v| v / b).collect::<Vec<f64>>();
    let (gmu, grho) = (scale(&out.grad_mu), scale(&out.grad_rho));
    if gmu.iter().chain(&grho).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            epoch: 0,
            step: 0,
            detail: "head gradient is not finite".into(),
        });
    }
    optim.mu.update(&mut model.head.posterior.mu, &gmu);
    optim.rho.update(&mut model.head.posterior.rho, &grho);
    Ok(loss)
}
