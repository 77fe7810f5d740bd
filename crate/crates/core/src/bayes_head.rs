//! Variational Bayesian classification head (`d -> 16 -> 1`, ReLU, logistic).
//!
//! Every weight and bias has a factorized Gaussian posterior
//! `N(mu, softplus(rho)^2)` and a shared `N(0, prior_sigma^2)` prior. Training
//! uses reparameterized Monte-Carlo samples `w = mu + sigma * eps`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const HEAD_HIDDEN: usize = 16;
/// Standard deviations below this are floored inside log densities.
pub const SIGMA_FLOOR: f64 = 1e-12;
/// Bound applied to Monte-Carlo log densities.
pub const LOG_DENSITY_CLAMP: f64 = 1e12;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sigma_of(rho: f64) -> f64 {
    softplus(rho)
}

fn log_sigma(sigma: f64) -> f64 {
    sigma.max(SIGMA_FLOOR).ln()
}

/// Mean and softplus-scale of a factorized Gaussian over a flat weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalParams {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

impl VariationalParams {
    pub fn new(mu: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if mu.len() != rho.len() {
            return Err(Error::Shape(format!(
                "{} means for {} scales",
                mu.len(),
                rho.len()
            )));
        }
        Ok(VariationalParams { mu, rho })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn sigma(&self, i: usize) -> f64 {
        sigma_of(self.rho[i])
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().chain(&self.rho).all(|v| v.is_finite())
    }

    /// Draws `w = mu + sigma * eps` and evaluates the posterior and prior log
    /// densities at `w`.
    pub fn sample(&self, prior_sigma: f64, rng: &mut SeededRng) -> WeightSample {
        let n = self.len();
        let mut weights = Vec::with_capacity(n);
        let mut eps = Vec::with_capacity(n);
        let mut log_q = 0.0;
        let mut log_p = 0.0;
        let prior_var = prior_sigma * prior_sigma;
        let log_prior_sigma = prior_sigma.ln();
        for i in 0..n {
            let e = rng.normal();
            let sigma = self.sigma(i);
            let w = self.mu[i] + sigma * e;
            // (w - mu) / sigma == eps
            log_q += -HALF_LN_2PI - log_sigma(sigma) - 0.5 * e * e;
            log_p += -HALF_LN_2PI - log_prior_sigma - 0.5 * w * w / prior_var;
            weights.push(w);
            eps.push(e);
        }
        WeightSample {
            weights,
            eps,
            log_q: log_q.clamp(-LOG_DENSITY_CLAMP, LOG_DENSITY_CLAMP),
            log_p: log_p.clamp(-LOG_DENSITY_CLAMP, LOG_DENSITY_CLAMP),
        }
    }

    /// `KL(q || p)` for diagonal Gaussians, summed over weights.
    pub fn kl_closed_form(&self, prior_sigma: f64) -> f64 {
        let prior_var = prior_sigma * prior_sigma;
        (0..self.len())
            .map(|i| {
                let sigma = self.sigma(i);
                let mu = self.mu[i];
                prior_sigma.ln() - log_sigma(sigma) + (sigma * sigma + mu * mu) / (2.0 * prior_var)
                    - 0.5
            })
            .sum()
    }

    /// Monte-Carlo estimate `(1/J) sum_j [log q(w_j) - log p(w_j)]`.
    pub fn kl_monte_carlo(&self, prior_sigma: f64, samples: usize, rng: &mut SeededRng) -> f64 {
        let total: f64 = (0..samples)
            .map(|_| {
                let s = self.sample(prior_sigma, rng);
                s.log_q - s.log_p
            })
            .sum();
        total / samples as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSample {
    pub weights: Vec<f64>,
    pub eps: Vec<f64>,
    pub log_q: f64,
    pub log_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub prior_sigma: f64,
    pub k: f64,
    pub j_train: usize,
    pub j_eval: usize,
    pub rho_init: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            prior_sigma: 1.0,
            k: 2.0,
            j_train: 10,
            j_eval: 30,
            rho_init: -3.0,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_sigma > 0.0) || !self.prior_sigma.is_finite() {
            return Err(Error::Config(format!("prior_sigma must be positive, got {}", self.prior_sigma)));
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::Config(format!("confidence exponent k must be positive, got {}", self.k)));
        }
        if self.j_train < 1 {
            return Err(Error::Config("j_train must be at least 1".into()));
        }
        if self.j_eval < 2 {
            return Err(Error::Config("j_eval must be at least 2".into()));
        }
        if !self.rho_init.is_finite() {
            return Err(Error::Config("rho_init must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalHead {
    pub input_dim: usize,
    pub posterior: VariationalParams,
    pub prior_sigma: f64,
    pub k: f64,
    pub j_train: usize,
    pub j_eval: usize,
}

/// Flat layout: `w1[h][i]` (16 x d), `b1` (16), `w2` (16), `b2` (1).
fn n_weights(input_dim: usize) -> usize {
    HEAD_HIDDEN * input_dim + 2 * HEAD_HIDDEN + 1
}

impl VariationalHead {
    pub fn init(input_dim: usize, config: &HeadConfig, rng: &mut SeededRng) -> Self {
        let n = n_weights(input_dim);
        let mut mu = vec![0.0; n];
        let b1 = 1.0 / (input_dim as f64).sqrt();
        let b2 = 1.0 / (HEAD_HIDDEN as f64).sqrt();
        let first = HEAD_HIDDEN * input_dim + HEAD_HIDDEN;
        for v in &mut mu[..first] {
            *v = rng.uniform_range(-b1, b1);
        }
        for v in &mut mu[first..] {
            *v = rng.uniform_range(-b2, b2);
        }
        VariationalHead {
            input_dim,
            posterior: VariationalParams {
                mu,
                rho: vec![config.rho_init; n],
            },
            prior_sigma: config.prior_sigma,
            k: config.k,
            j_train: config.j_train,
            j_eval: config.j_eval,
        }
    }

    /// Head with every mean set to `mu` and every scale set via `rho`.
    pub fn constant(input_dim: usize, mu: f64, rho: f64, config: &HeadConfig) -> Self {
        let n = n_weights(input_dim);
        VariationalHead {
            input_dim,
            posterior: VariationalParams {
                mu: vec![mu; n],
                rho: vec![rho; n],
            },
            prior_sigma: config.prior_sigma,
            k: config.k,
            j_train: config.j_train,
            j_eval: config.j_eval,
        }
    }

    pub fn n_weights(&self) -> usize {
        self.posterior.len()
    }

    pub fn sample_weights(&self, rng: &mut SeededRng) -> WeightSample {
        self.posterior.sample(self.prior_sigma, rng)
    }

    pub fn kl_closed_form(&self) -> f64 {
        self.posterior.kl_closed_form(self.prior_sigma)
    }

    fn check_feature(&self, feature: &[f64]) -> Result<()> {
        if feature.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "feature has length {}, head expects {}",
                feature.len(),
                self.input_dim
            )));
        }
        Ok(())
    }
}

/// Pre-activations and activations of one forward pass.
struct HeadPass {
    pre: [f64; HEAD_HIDDEN],
    hidden: [f64; HEAD_HIDDEN],
    logit: f64,
}

fn head_pass(feature: &[f64], weights: &[f64]) -> HeadPass {
    let d = feature.len();
    let b1 = HEAD_HIDDEN * d;
    let w2 = b1 + HEAD_HIDDEN;
    let b2 = w2 + HEAD_HIDDEN;
    let mut pre = [0.0; HEAD_HIDDEN];
    let mut hidden = [0.0; HEAD_HIDDEN];
    let mut logit = weights[b2];
    for h in 0..HEAD_HIDDEN {
        let row = &weights[h * d..(h + 1) * d];
        let z = weights[b1 + h] + row.iter().zip(feature).map(|(a, b)| a * b).sum::<f64>();
        pre[h] = z;
        hidden[h] = z.max(0.0);
        logit += weights[w2 + h] * hidden[h];
    }
    HeadPass { pre, hidden, logit }
}

/// Adds `g * d(logit)/d(weights)` into `dw` and `g * d(logit)/d(feature)` into `dfeat`.
fn head_backward(
    feature: &[f64],
    weights: &[f64],
    pass: &HeadPass,
    g: f64,
    dw: &mut [f64],
    dfeat: &mut [f64],
) {
    let d = feature.len();
    let b1 = HEAD_HIDDEN * d;
    let w2 = b1 + HEAD_HIDDEN;
    let b2 = w2 + HEAD_HIDDEN;
    dw[b2] += g;
    for h in 0..HEAD_HIDDEN {
        dw[w2 + h] += g * pass.hidden[h];
        if pass.pre[h] <= 0.0 {
            continue;
        }
        let dz = g * weights[w2 + h];
        dw[b1 + h] += dz;
        let row = &weights[h * d..(h + 1) * d];
        let drow = &mut dw[h * d..(h + 1) * d];
        for i in 0..d {
            drow[i] += dz * feature[i];
            dfeat[i] += dz * row[i];
        }
    }
}

/// Single-sample forward: affine, ReLU, affine, logistic. The result is
/// clamped to `[eps, 1 - eps]` so it stays strictly inside `(0, 1)`.
pub fn forward(feature: &[f64], sample: &WeightSample) -> Result<f64> {
    let d = feature_dim_of(sample.weights.len())?;
    if feature.len() != d {
        return Err(Error::Shape(format!(
            "feature has length {}, weight sample expects {d}",
            feature.len()
        )));
    }
    let p = sigmoid(head_pass(feature, &sample.weights).logit);
    Ok(p.clamp(f64::EPSILON, 1.0 - f64::EPSILON))
}

fn feature_dim_of(n_weights: usize) -> Result<usize> {
    let rest = n_weights
        .checked_sub(2 * HEAD_HIDDEN + 1)
        .filter(|r| r % HEAD_HIDDEN == 0)
        .ok_or_else(|| Error::Shape(format!("{n_weights} weights do not form a head")))?;
    Ok(rest / HEAD_HIDDEN)
}

/// Bernoulli negative log-likelihood of `label` given a logit.
pub fn bernoulli_nll(logit: f64, label: u8) -> f64 {
    softplus(logit) - f64::from(label) * logit
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElboOutput {
    /// `(1/J) sum_j [kl_scale * (log q - log p) + sum_i a_i * nll_ij]`
    pub loss: f64,
    /// Unscaled Monte-Carlo KL portion `(1/J) sum_j (log q - log p)`.
    pub kl_mc: f64,
    /// Per-instance negative log-likelihood averaged over samples.
    pub nll: Vec<f64>,
    pub grad_mu: Vec<f64>,
    pub grad_rho: Vec<f64>,
    pub grad_features: Vec<Vec<f64>>,
}

/// Monte-Carlo ELBO loss and its reparameterized gradients.
///
/// `weights` scales each instance's likelihood term (all ones when `None`);
/// `kl_scale` multiplies the KL portion, normally `batch_size / dataset_size`.
pub fn elbo_loss(
    features: &[Vec<f64>],
    labels: &[u8],
    weights: Option<&[f64]>,
    head: &VariationalHead,
    samples: usize,
    kl_scale: f64,
    rng: &mut SeededRng,
) -> Result<ElboOutput> {
    let eps: Vec<WeightSample> = (0..samples).map(|_| head.sample_weights(rng)).collect();
    elbo_loss_with_samples(features, labels, weights, head, &eps, kl_scale)
}

/// [`elbo_loss`] on pre-drawn weight samples; the noise `eps` of each sample
/// is re-applied to the head's current `mu`/`rho`, so callers can hold the
/// random numbers fixed while perturbing parameters.
pub fn elbo_loss_with_samples(
    features: &[Vec<f64>],
    labels: &[u8],
    weights: Option<&[f64]>,
    head: &VariationalHead,
    noise: &[WeightSample],
    kl_scale: f64,
) -> Result<ElboOutput> {
    if features.is_empty() {
        return Err(Error::Shape("ELBO batch is empty".into()));
    }
    if labels.len() != features.len() || weights.is_some_and(|w| w.len() != features.len()) {
        return Err(Error::Shape("features, labels and weights differ in length".into()));
    }
    if noise.is_empty() {
        return Err(Error::Config("at least one Monte-Carlo sample is required".into()));
    }
    for f in features {
        head.check_feature(f)?;
    }
    let n = head.n_weights();
    let j_count = noise.len() as f64;
    let prior_var = head.prior_sigma * head.prior_sigma;
    let log_prior_sigma = head.prior_sigma.ln();
    let post = &head.posterior;
    let sigma: Vec<f64> = (0..n).map(|i| post.sigma(i)).collect();

    let mut loss = 0.0;
    let mut kl_mc = 0.0;
    let mut nll = vec![0.0; features.len()];
    let mut grad_mu = vec![0.0; n];
    let mut grad_rho = vec![0.0; n];
    let mut grad_features = vec![vec![0.0; head.input_dim]; features.len()];
    let mut w = vec![0.0; n];
    let mut dw = vec![0.0; n];

    for sample in noise {
        if sample.eps.len() != n {
            return Err(Error::Shape("weight sample does not match head".into()));
        }
        let mut log_q = 0.0;
        let mut log_p = 0.0;
        for i in 0..n {
            let e = sample.eps[i];
            w[i] = post.mu[i] + sigma[i] * e;
            log_q += -HALF_LN_2PI - log_sigma(sigma[i]) - 0.5 * e * e;
            log_p += -HALF_LN_2PI - log_prior_sigma - 0.5 * w[i] * w[i] / prior_var;
        }
        let log_q = log_q.clamp(-LOG_DENSITY_CLAMP, LOG_DENSITY_CLAMP);
        let log_p = log_p.clamp(-LOG_DENSITY_CLAMP, LOG_DENSITY_CLAMP);
        let kl = log_q - log_p;
        kl_mc += kl / j_count;
        loss += kl_scale * kl / j_count;

        // -log p(w) contributes w / prior_var to dL/dw
        for i in 0..n {
            dw[i] = kl_scale * w[i] / prior_var;
        }
        for (idx, (feature, &label)) in features.iter().zip(labels).enumerate() {
            let a = weights.map_or(1.0, |ws| ws[idx]);
            let pass = head_pass(feature, &w);
            let l = bernoulli_nll(pass.logit, label);
            nll[idx] += l / j_count;
            loss += a * l / j_count;
            if a == 0.0 {
                continue;
            }
            let g = a * (sigmoid(pass.logit) - f64::from(label));
            let mut dfeat = vec![0.0; feature.len()];
            head_backward(feature, &w, &pass, g, &mut dw, &mut dfeat);
            for (acc, v) in grad_features[idx].iter_mut().zip(dfeat) {
                *acc += v / j_count;
            }
        }
        for i in 0..n {
            grad_mu[i] += dw[i] / j_count;
            // log q depends on sigma only through -ln(sigma), which is
            // constant below the floor
            let dlogq = if sigma[i] > SIGMA_FLOOR { kl_scale / sigma[i] } else { 0.0 };
            let dsigma = dw[i] * sample.eps[i] - dlogq;
            grad_rho[i] += dsigma * sigmoid(post.rho[i]) / j_count;
        }
    }

    Ok(ElboOutput {
        loss,
        kl_mc,
        nll,
        grad_mu,
        grad_rho,
        grad_features,
    })
}

/// Monte-Carlo mean, confidence and raw sample probabilities of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePrediction {
    pub mean: f64,
    pub confidence: f64,
    pub samples: Vec<f64>,
}

impl InstancePrediction {
    /// Mean and `(1 - population variance)^k` of the sample probabilities.
    pub fn from_samples(samples: Vec<f64>, k: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Config(format!(
                "at least 2 Monte-Carlo samples are needed for a variance, got {}",
                samples.len()
            )));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
        let confidence = (1.0 - var).clamp(0.0, 1.0).powf(k);
        Ok(InstancePrediction {
            mean,
            confidence,
            samples,
        })
    }

    pub fn variance(&self) -> f64 {
        let n = self.samples.len() as f64;
        self.samples
            .iter()
            .map(|p| (p - self.mean) * (p - self.mean))
            .sum::<f64>()
            / n
    }
}

/// `samples` forward passes with fresh weight draws for one feature.
pub fn predict_mc(
    feature: &[f64],
    head: &VariationalHead,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<InstancePrediction> {
    let mut out = predict_batch(std::slice::from_ref(&feature.to_vec()), head, samples, rng)?;
    Ok(out.remove(0))
}

/// Like [`predict_mc`] for many features: sample `j` is drawn once and
/// applied to every feature, so a single-element batch reproduces
/// [`predict_mc`] exactly.
pub fn predict_batch(
    features: &[Vec<f64>],
    head: &VariationalHead,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<Vec<InstancePrediction>> {
    if samples < 2 {
        return Err(Error::Config(format!(
            "predict needs at least 2 Monte-Carlo samples, got {samples}"
        )));
    }
    for f in features {
        head.check_feature(f)?;
    }
    let mut probs = vec![Vec::with_capacity(samples); features.len()];
    for _ in 0..samples {
        let sample = head.sample_weights(rng);
        for (feature, out) in features.iter().zip(probs.iter_mut()) {
            let p = sigmoid(head_pass(feature, &sample.weights).logit);
            out.push(p.clamp(f64::EPSILON, 1.0 - f64::EPSILON));
        }
    }
    probs
        .into_iter()
        .map(|s| InstancePrediction::from_samples(s, head.k))
        .collect()
}
