#![allow(dead_code)]

use uamil::bayes_head::{elbo_loss_with_samples, HeadConfig, VariationalHead, WeightSample};
use uamil::encoder::{backward_into, encode, forward_trace, EncoderParams};
use uamil::rng::SeededRng;

pub const STEP: f64 = 1e-5;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    rel_err_scaled(analytic, numeric, 1.0)
}

/// Relative error with the denominator floored at `1e-6 * max(1, |loss|)`;
/// central differences at `STEP` carry roughly `2e-11 * |loss|` of rounding.
pub fn rel_err_scaled(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let floor = 1e-6 * loss.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Relative error of a central difference of `at` (the loss at an offset)
/// against `analytic`, or `None` when a ReLU switches inside the stencil.
/// A kink too close to the centre to show in the one-sided slopes still
/// spoils the difference, so a failing stencil is retried at a tenth of
/// the width before its error is returned.
pub fn central_check(at: impl Fn(f64) -> f64, base: f64, analytic: f64) -> Option<f64> {
    let mut err = None;
    for h in [STEP, STEP / 10.0] {
        let (up, down) = (at(h), at(-h));
        if ((up - base) - (base - down)).abs() > 1e-3 * (up - down).abs().max(1e-9) {
            return None;
        }
        let e = rel_err_scaled(analytic, (up - down) / (2.0 * h), base);
        if e < 1e-4 {
            return Some(e);
        }
        err = Some(e);
    }
    err
}

pub fn random_window(m: usize, w: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..w).map(|_| rng.normal()).collect()).collect()
}

pub fn random_head(d: usize, rng: &mut SeededRng) -> VariationalHead {
    let mut head = VariationalHead::init(d, &HeadConfig::default(), rng);
    for r in &mut head.posterior.rho {
        *r = rng.uniform_range(-4.0, 0.0);
    }
    head
}

/// Per-instance loss of window -> encoder -> head on fixed noise.
pub fn instance_loss(
    window: &[Vec<f64>],
    label: u8,
    encoder: &EncoderParams,
    head: &VariationalHead,
    noise: &[WeightSample],
    kl_scale: f64,
) -> f64 {
    let feature = encode(window, encoder).unwrap();
    elbo_loss_with_samples(&[feature], &[label], None, head, noise, kl_scale)
        .unwrap()
        .loss
}

/// Analytic gradients `(encoder, mu, rho)` of [`instance_loss`].
pub fn instance_gradients(
    window: &[Vec<f64>],
    label: u8,
    encoder: &EncoderParams,
    head: &VariationalHead,
    noise: &[WeightSample],
    kl_scale: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let trace = forward_trace(window, encoder).unwrap();
    let out = elbo_loss_with_samples(
        &[trace.output().to_vec()],
        &[label],
        None,
        head,
        noise,
        kl_scale,
    )
    .unwrap();
    let mut grads = encoder.zeros_like();
    backward_into(&trace, encoder, &out.grad_features[0], &mut grads).unwrap();
    (grads.values, out.grad_mu, out.grad_rho)
}

// brute-force metric oracles

pub fn brute_f1(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0u32, 0u32, 0u32);
    for (s, l) in scores.iter().zip(labels) {
        let predicted = *s >= 0.5;
        match (predicted, *l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp == 0 {
        0.0
    } else {
        f64::from(2 * tp) / f64::from(2 * tp + fp + fneg)
    }
}

pub fn brute_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let (mut wins, mut ties, mut pairs) = (0u64, 0u64, 0u64);
    for (i, si) in scores.iter().enumerate() {
        for (j, sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1;
                if si > sj {
                    wins += 1;
                } else if si == sj {
                    ties += 1;
                }
            }
        }
    }
    (pairs > 0).then(|| (wins as f64 + 0.5 * ties as f64) / pairs as f64)
}

/// Rank of `i` (1-based) in descending score order, ties by input position.
pub fn rank(scores: &[f64], i: usize) -> usize {
    1 + (0..scores.len())
        .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
        .count()
}

pub fn brute_ap(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return None;
    }
    let mut positives: Vec<(usize, usize)> = (0..scores.len())
        .filter(|&i| labels[i] == 1)
        .map(|i| (rank(scores, i), i))
        .collect();
    positives.sort_unstable();
    let sum: f64 = positives
        .iter()
        .enumerate()
        .map(|(k, &(r, _))| (k + 1) as f64 / r as f64)
        .sum();
    Some(sum / n_pos as f64)
}


// tiny end-to-end fixtures

pub fn tiny_synthetic(seed: u64) -> uamil::ingest::SyntheticConfig {
    uamil::ingest::SyntheticConfig {
        n_pos_bags: 3,
        n_neg_bags: 3,
        series_len_min: 16,
        series_len_max: 32,
        window_len: 8,
        shapelet_len: 8,
        seed,
        ..Default::default()
    }
}

pub fn tiny_train_config(seed: u64) -> uamil::pipeline::TrainConfig {
    uamil::pipeline::TrainConfig {
        n_neg: 4,
        n_pos: 4,
        epochs: 2,
        steps_per_epoch: Some(1),
        feature_dim: 4,
        j_train: 2,
        j_eval: 3,
        seed,
        ..Default::default()
    }
}
