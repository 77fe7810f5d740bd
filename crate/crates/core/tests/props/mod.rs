//! Randomized checks of each module's stated invariants, 1000 trials apiece.

use proptest::prelude::*;
use proptest::test_runner::Config;

use crate::common::*;
use uamil::bayes_head::{
    elbo_loss_with_samples, predict_mc, softplus, HeadConfig, InstancePrediction, VariationalHead,
    VariationalParams, WeightSample,
};
use uamil::encoder::{encode, encode_backward, EncoderParams, Layout};
use uamil::fusion::{fuse, fuse_dataset, FusionMode, Modality, ModalityRecord};
use uamil::ingest::{build_bags, generate_synthetic, AisRecord, BuildOptions, Dataset, RejectReport, TaskSpec};
use uamil::metrics::{auc_roc, average_precision, f_score, ScoredSet};
use uamil::mil::{aggregate_bag, assign_attention, sample_batch, InstancePool, MedianScope};
use uamil::pipeline::train;
use uamil::rng::SeededRng;
use uamil::series::{
    derive_kinematics, fit_normalizer, apply_normalizer, segment, MultivariateSeries, Normalizer,
    AIS_CHANNELS,
};

fn cases() -> Config {
    Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    }
}

fn series(id: &str, channels: Vec<Vec<f64>>) -> MultivariateSeries {
    let t = channels[0].len();
    let names = (0..channels.len()).map(|i| format!("c{i}")).collect();
    MultivariateSeries::new(id, (0..t as i64).collect(), names, channels).unwrap()
}

fn noise(m: usize, t: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..t).map(|_| 5.0 * rng.normal() + 3.0).collect()).collect()
}

// ---------------------------------------------------------------- series


pub fn segment_count_and_concatenation() {
    proptest!(cases(), |(w in 2usize..40, extra in 0usize..200, m in 1usize..5, seed in any::<u64>())| {
    let t = w + extra;
    let mut rng = SeededRng::new(seed);
    let s = series("x", noise(m, t, &mut rng));
    let bag = segment(&s, w, 1).unwrap();
    prop_assert_eq!(bag.len(), t / w);
    for c in 0..m {
        let joined: Vec<f64> = bag.instances.iter().flat_map(|i| i.window[c].clone()).collect();
        prop_assert_eq!(&joined[..], &s.channels()[c][..bag.len() * w]);
    }
    prop_assert!(bag.instances.iter().all(|i| i.pseudo_label == bag.label && i.width() == w));
    });
}

pub fn kinematics_preserve_speed() {
    proptest!(cases(), |(values in prop::collection::vec((0.0f64..60.0, 0.0f64..360.0), 1..50))| {
    let t = values.len();
    let sog: Vec<f64> = values.iter().map(|v| v.0).collect();
    let cog: Vec<f64> = values.iter().map(|v| v.1).collect();
    let s = MultivariateSeries::new(
        "k",
        (0..t as i64).collect(),
        AIS_CHANNELS.iter().map(|c| c.to_string()).collect(),
        vec![vec![40.0; t], vec![-70.0; t], sog.clone(), cog],
    )
    .unwrap();
    let k = derive_kinematics(&s).unwrap();
    for i in 0..t {
        let (vx, vy) = (k.channel("vx").unwrap()[i], k.channel("vy").unwrap()[i]);
        prop_assert!(((vx * vx + vy * vy).sqrt() - sog[i]).abs() < 1e-9);
    }
    });
}

pub fn normalizer_standardizes_training_data() {
    proptest!(cases(), |(n in 1usize..4, m in 1usize..4, seed in any::<u64>())| {
    let mut rng = SeededRng::new(seed);
    let train: Vec<MultivariateSeries> =
        (0..n).map(|i| series(&i.to_string(), noise(m, 2 + rng.below(60), &mut rng))).collect();
    let norm = fit_normalizer(&train).unwrap();
    prop_assert!(norm.std.iter().all(|&s| s > 0.0));
    for c in 0..m {
        let vals: Vec<f64> = train
            .iter()
            .flat_map(|s| apply_normalizer(s, &norm).unwrap().channels()[c].clone())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
    }
    });
}

pub fn constant_channels_are_rejected() {
    proptest!(cases(), |(v in -1e6f64..1e6, t in 2usize..30)| {
    let windows = vec![vec![vec![v; t]]];
    prop_assert!(Normalizer::fit_windows(vec!["c".into()], windows.iter()).is_err());
    });
}

// ---------------------------------------------------------------- ingest

fn random_records(rng: &mut SeededRng) -> Vec<AisRecord> {
    let mut out = Vec::new();
    for v in 0..1 + rng.below(3) {
        let mmsi = format!("{}", 366_000_000 + v);
        let vtype = [30, 70, 80][rng.below(3)];
        let len = 10 + rng.below(25);
        for t in 0..len {
            // some repeated timestamps
            let ts = 1_500_000_000 + 60 * (t as i64 - i64::from(rng.below(4) == 0));
            out.push(AisRecord {
                mmsi: mmsi.clone(),
                timestamp: ts,
                lat: rng.uniform_range(-80.0, 80.0),
                lon: rng.uniform_range(-170.0, 170.0),
                sog: rng.uniform_range(0.0, 20.0),
                cog: rng.uniform_range(0.0, 359.0),
                vessel_type: Some(vtype),
            });
        }
    }
    out
}


pub fn build_bags_ignores_record_order() {
    proptest!(cases(), |(seed in any::<u64>())| {
    let mut rng = SeededRng::new(seed);
    let records = random_records(&mut rng);
    let mut shuffled = records.clone();
    rng.shuffle(&mut shuffled);
    let opts = BuildOptions { min_len: 5, window_len: 5, max_reject_fraction: 0.1 };
    let rejects = RejectReport::default();
    let a = build_bags(&records, &rejects, &TaskSpec::fishing(), &opts).unwrap();
    let b = build_bags(&shuffled, &rejects, &TaskSpec::fishing(), &opts).unwrap();
    prop_assert_eq!(a, b);
    });
}

pub fn synthetic_generation_is_reproducible_and_consistent() {
    proptest!(cases(), |(seed in any::<u64>())| {
    let cfg = tiny_synthetic(seed);
    let a = generate_synthetic(&cfg).unwrap();
    let b = generate_synthetic(&cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        prop_assert_eq!(x, y);
        for (i, j) in x.instances.iter().zip(&y.instances) {
            for (ri, rj) in i.window.iter().zip(&j.window) {
                prop_assert!(ri.iter().zip(rj).all(|(p, q)| p.to_bits() == q.to_bits()));
            }
        }
        prop_assert_eq!(x.implied_label(), Some(x.label));
    }
    });
}

// ---------------------------------------------------------------- encoder


pub fn parameter_count_depends_only_on_shape() {
    proptest!(cases(), |(m in 1usize..6, d in 1usize..80, s1 in any::<u64>(), s2 in any::<u64>())| {
    let a = EncoderParams::init(m, d, &mut SeededRng::new(s1));
    let b = EncoderParams::init(m, d, &mut SeededRng::new(s2));
    prop_assert_eq!(a.describe(), b.describe());
    prop_assert_eq!(a.len(), Layout::new(m, d).total());
    });
}

pub fn encode_stays_finite_on_bounded_inputs() {
    proptest!(cases(), |(m in 1usize..5, w in 8usize..40, d in 1usize..16, seed in any::<u64>())| {
    let mut rng = SeededRng::new(seed);
    let mut p = EncoderParams::zeros(m, d);
    for v in &mut p.values {
        *v = rng.uniform_range(-1.0, 1.0);
    }
    let window: Vec<Vec<f64>> =
        (0..m).map(|_| (0..w).map(|_| rng.uniform_range(-10.0, 10.0)).collect()).collect();
    prop_assert!(encode(&window, &p).unwrap().iter().all(|v| v.is_finite()));
    });
}

pub fn encoder_gradient_matches_differences() {
    proptest!(cases(), |(m in 1usize..4, w in 8usize..14, d in 2usize..6, seed in any::<u64>())| {
    let mut rng = SeededRng::new(seed);
    let params = EncoderParams::init(m, d, &mut rng);
    let window = random_window(m, w, &mut rng);
    let upstream: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let (grads, _) = encode_backward(&window, &params, &upstream).unwrap();
    let f = |p: &EncoderParams| -> f64 {
        encode(&window, p).unwrap().iter().zip(&upstream).map(|(a, b)| a * b).sum()
    };
    let base = f(&params);
    for _ in 0..5 {
        let i = rng.below(params.len());
        let at = |delta: f64| {
            let mut p = params.clone();
            p.values[i] += delta;
            f(&p)
        };
        if let Some(e) = central_check(at, base, grads.values[i]) {
            prop_assert!(e < 1e-4, "param {} analytic {} rel err {}", i, grads.values[i], e);
        }
    }
    });
}

// ---------------------------------------------------------------- head


pub fn softplus_is_positive() {
    proptest!(cases(), |(rho in -700.0f64..700.0)| {
    prop_assert!(softplus(rho) > 0.0);
    });
}

pub fn prediction_summary_matches_definition() {
    proptest!(cases(), |(samples in prop::collection::vec(0.0f64..=1.0, 2..60), k in 0.1f64..5.0)| {
    let p = InstancePrediction::from_samples(samples.clone(), k).unwrap();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    prop_assert_eq!(p.mean, mean);
    prop_assert!(var <= 0.25 + 1e-15);
    prop_assert!((p.confidence - (1.0 - var).powf(k)).abs() < 1e-15);
    prop_assert!(p.confidence >= 0.75f64.powf(k) - 1e-15 && p.confidence <= 1.0);
    });
}

pub fn confidence_is_monotone() {
    proptest!(cases(), |(a in 0.01f64..0.5, b in 0.01f64..0.5, k1 in 0.1f64..5.0, k2 in 0.1f64..5.0)| {
    let c = |spread: f64, k: f64| {
        InstancePrediction::from_samples(vec![0.5 - spread, 0.5 + spread], k).unwrap().confidence
    };
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    prop_assert!(c(hi, k1) <= c(lo, k1));
    if k1 < k2 {
        prop_assert!(c(a, k2) < c(a, k1));
    }
    });
}

pub fn predict_mc_repeats_bit_for_bit() {
    proptest!(cases(), |(d in 1usize..8, seed in any::<u64>())| {
    let mut rng = SeededRng::new(seed);
    let head = random_head(d, &mut rng);
    let f: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let state = rng.clone();
    let a = predict_mc(&f, &head, 10, &mut rng).unwrap();
    let b = predict_mc(&f, &head, 10, &mut state.clone()).unwrap();
    prop_assert_eq!(a, b);
    });
}

pub fn elbo_gradient_matches_differences() {
    proptest!(cases(), |(d in 1usize..4, j in 1usize..4, scale in 0.0f64..2.0, seed in any::<u64>())| {
    let mut rng = SeededRng::new(seed);
    let head = random_head(d, &mut rng);
    let features: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
    let labels = [0u8, 1, 1];
    let samples: Vec<WeightSample> = (0..j).map(|_| head.sample_weights(&mut rng)).collect();
    let out = elbo_loss_with_samples(&features, &labels, None, &head, &samples, scale).unwrap();
    let eval = |h: &VariationalHead| {
        elbo_loss_with_samples(&features, &labels, None, h, &samples, scale).unwrap().loss
    };
    for _ in 0..8 {
        let i = rng.below(head.n_weights());
        for which in 0..2 {
            let at = |delta: f64| {
                let mut h = head.clone();
                if which == 0 { h.posterior.mu[i] += delta } else { h.posterior.rho[i] += delta }
                eval(&h)
            };
            let analytic = if which == 0 { out.grad_mu[i] } else { out.grad_rho[i] };
            if let Some(e) = central_check(at, out.loss, analytic) {
                prop_assert!(e < 1e-4, "weight {} kind {}: analytic {} rel err {}", i, which, analytic, e);
            }
        }
    }
    });
}

pub fn kl_estimate_converges() {
    proptest!(cases(), |(d in 1usize..3, seed in any::<u64>())| {
    let mut rng = SeededRng::new(seed);
    let n = VariationalHead::constant(d, 0.0, 0.0, &HeadConfig::default()).n_weights();
    let mu = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let rho = (0..n).map(|_| rng.uniform_range(0.5, 2.0).exp_m1().ln()).collect();
    let q = VariationalParams::new(mu, rho).unwrap();
    let exact = q.kl_closed_form(1.0);
    let mc = q.kl_monte_carlo(1.0, 10_000, &mut rng);
    prop_assert!((mc - exact).abs() / exact < 0.05, "mc {} exact {}", mc, exact);
    });
}

// ---------------------------------------------------------------- mil


pub fn attention_follows_piecewise_rule() {
    proptest!(cases(), |(items in prop::collection::vec((0.0f64..=1.0, 0.5f64..=1.0, 0u8..2), 1..80), all in any::<bool>())| {
    let mut items = items;
    items[0].2 = 1;
    let (y, c, l): (Vec<f64>, Vec<f64>, Vec<u8>) = (
        items.iter().map(|i| i.0).collect(),
        items.iter().map(|i| i.1).collect(),
        items.iter().map(|i| i.2).collect(),
    );
    let scope = if all { MedianScope::All } else { MedianScope::Positives };
    let batch = assign_attention(&y, &c, &l, scope).unwrap();
    let beta = batch.threshold;
    for i in 0..y.len() {
        let a = batch.attention[i];
        let s = c[i] * y[i];
        match l[i] {
            0 => prop_assert_eq!(a, 1.0),
            _ if s < beta => prop_assert_eq!(a, 0.0),
            _ => prop_assert_eq!(a, s),
        }
        prop_assert!(a == 0.0 || a == 1.0 || (a >= beta && a <= 1.0));
    }
    let positives: Vec<f64> = (0..y.len()).filter(|&i| l[i] == 1).map(|i| c[i] * y[i]).collect();
    let mut sorted = positives.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if scope == MedianScope::Positives && sorted.len() == positives.len() {
        let zeros = (0..y.len()).filter(|&i| l[i] == 1 && batch.attention[i] == 0.0).count();
        prop_assert!(zeros >= positives.len() / 2);
    }
    });
}

pub fn aggregation_is_permutation_invariant() {
    proptest!(cases(), |(preds in prop::collection::vec((0.0f64..=1.0, 0.5f64..=1.0), 1..40), k in 1usize..12, seed in any::<u64>())| {
    let mut means: Vec<f64> = preds.iter().map(|p| p.0).collect();
    means.sort_by(f64::total_cmp);
    prop_assume!(means.windows(2).all(|w| w[0] < w[1]));
    let make = |v: &[(f64, f64)]| -> Vec<InstancePrediction> {
        v.iter().map(|&(m, c)| InstancePrediction { mean: m, confidence: c, samples: vec![m, m] }).collect()
    };
    let mut perm: Vec<usize> = (0..preds.len()).collect();
    SeededRng::new(seed).shuffle(&mut perm);
    let shuffled: Vec<(f64, f64)> = perm.iter().map(|&i| preds[i]).collect();
    let a = aggregate_bag("b", &make(&preds), k).unwrap();
    let b = aggregate_bag("b", &make(&shuffled), k).unwrap();
    prop_assert_eq!(a.prediction, b.prediction);
    prop_assert_eq!(a.confidence, b.confidence);
    let mapped: Vec<usize> = b.top_indices.iter().map(|&i| perm[i]).collect();
    prop_assert_eq!(&a.top_indices, &mapped);
    prop_assert_eq!(a.top_indices.len(), k.min(preds.len()));
    prop_assert!((0.0..=1.0).contains(&a.prediction) && (0.0..=1.0).contains(&a.confidence));
    prop_assert!(a.top_indices.windows(2).all(|w| preds[w[0]].0 >= preds[w[1]].0));
    });
}

pub fn batches_have_requested_composition() {
    proptest!(cases(), |(n_neg in 0usize..50, n_pos in 0usize..50, seed in any::<u64>())| {
    let bags = generate_synthetic(&tiny_synthetic(seed % 1000)).unwrap();
    let pool = InstancePool::new(bags.as_slice());
    let batch = sample_batch(&pool, &mut SeededRng::new(seed), n_neg, n_pos).unwrap();
    let again = sample_batch(&pool, &mut SeededRng::new(seed), n_neg, n_pos).unwrap();
    prop_assert_eq!(&batch, &again);
    let pos = batch.iter().filter(|r| bags[r.bag].label == 1).count();
    prop_assert_eq!(pos, n_pos);
    prop_assert_eq!(batch.len() - pos, n_neg);
    });
}

// ---------------------------------------------------------------- fusion

fn records(seed: u64, n: usize) -> (Vec<ModalityRecord>, Vec<ModalityRecord>) {
    let mut rng = SeededRng::new(seed);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        let id = format!("{i:03}");
        if rng.below(5) > 0 {
            a.push(ModalityRecord::new(&id, rng.uniform(), rng.uniform_range(0.01, 1.0), Modality::A).unwrap());
        }
        if rng.below(5) > 0 {
            b.push(ModalityRecord::new(&id, rng.uniform(), rng.uniform_range(0.01, 1.0), Modality::B).unwrap());
        }
    }
    (a, b)
}


pub fn fused_value_lies_between_inputs() {
    proptest!(cases(), |(ya in 0.0f64..=1.0, yb in 0.0f64..=1.0, lambda in 0.0f64..=1.0)| {
    let a = ModalityRecord::new("e", ya, 0.5, Modality::A).unwrap();
    let b = ModalityRecord::new("e", yb, 0.5, Modality::B).unwrap();
    let f = fuse(&a, &b, lambda).unwrap();
    prop_assert!(f >= ya.min(yb) && f <= ya.max(yb));
    });
}

pub fn swapping_modalities_mirrors_lambda() {
    proptest!(cases(), |(ya in 0.0f64..=1.0, yb in 0.0f64..=1.0, lambda in 0.0f64..=1.0)| {
    let a = ModalityRecord::new("e", ya, 0.5, Modality::A).unwrap();
    let b = ModalityRecord::new("e", yb, 0.5, Modality::B).unwrap();
    let f = fuse(&a, &b, lambda).unwrap();
    let g = fuse(&b, &a, 1.0 - lambda).unwrap();
    prop_assert!((f - g).abs() <= 4.0 * f64::EPSILON, "{} vs {}", f, g);
    });
}

pub fn fusion_ignores_record_order() {
    proptest!(cases(), |(seed in any::<u64>(), n in 1usize..30, fixed in any::<bool>())| {
    let (a, b) = records(seed, n);
    prop_assume!(!a.is_empty() || !b.is_empty());
    let mode = if fixed { FusionMode::Fixed(0.3) } else { FusionMode::Adaptive };
    let mut rng = SeededRng::new(seed ^ 1);
    let (mut a2, mut b2) = (a.clone(), b.clone());
    rng.shuffle(&mut a2);
    rng.shuffle(&mut b2);
    prop_assert_eq!(fuse_dataset(&a, &b, mode).unwrap(), fuse_dataset(&a2, &b2, mode).unwrap());
    });
}

pub fn nonpositive_confidence_is_rejected() {
    proptest!(cases(), |(c in -1.0f64..=0.0)| {
    prop_assert!(ModalityRecord::new("e", 0.5, c, Modality::A).is_err());
    });
}

// ---------------------------------------------------------------- metrics

fn distinct_order(a: &[f64], b: &[f64]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] < a[j]) == (b[i] < b[j]) && (a[i] == a[j]) == (b[i] == b[j])))
}


pub fn auc_invariant_under_monotone_maps() {
    proptest!(cases(), |(items in prop::collection::vec((0.0f64..=1.0, 0u8..2), 2..40))| {
    let scores: Vec<f64> = items.iter().map(|i| i.0).collect();
    let labels: Vec<u8> = items.iter().map(|i| i.1).collect();
    prop_assume!(labels.contains(&0) && labels.contains(&1));
    let base = auc_roc(&ScoredSet::new(scores.clone(), labels.clone()).unwrap()).unwrap();
    let cubed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + s.powi(3)).collect();
    if distinct_order(&scores, &cubed) {
        prop_assert_eq!(auc_roc(&ScoredSet::new(cubed, labels.clone()).unwrap()).unwrap(), base);
    }
    let flipped: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
    let swapped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
    let reversed: Vec<f64> = flipped.iter().map(|s| -s).collect();
    if distinct_order(&scores, &reversed) {
        prop_assert_eq!(auc_roc(&ScoredSet::new(flipped, swapped).unwrap()).unwrap(), base);
    }
    });
}

pub fn metrics_match_brute_force_and_stay_in_range() {
    proptest!(cases(), |(items in prop::collection::vec((0usize..9, 0u8..2), 1..=10))| {
    let scores: Vec<f64> = items.iter().map(|i| (i.0 + 1) as f64 / 10.0).collect();
    let labels: Vec<u8> = items.iter().map(|i| i.1).collect();
    let set = ScoredSet::new(scores.clone(), labels.clone()).unwrap();
    let f = f_score(&set, 0.5).unwrap();
    prop_assert_eq!(f, brute_f1(&scores, &labels));
    prop_assert!((0.0..=1.0).contains(&f));
    prop_assert_eq!(auc_roc(&set).ok(), brute_auc(&scores, &labels));
    let ap = average_precision(&set).ok();
    prop_assert_eq!(ap, brute_ap(&scores, &labels));
    if let Some(ap) = ap {
        prop_assert!((0.0..=1.0).contains(&ap));
    }
    });
}

pub fn ap_of_random_scores_is_near_prevalence() {
    proptest!(cases(), |(prevalence in 0.05f64..0.95, seed in any::<u64>())| {
    let mut rng = SeededRng::new(seed);
    let n = 10_000;
    let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.uniform() < prevalence)).collect();
    let scores: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let ap = average_precision(&ScoredSet::new(scores, labels).unwrap()).unwrap();
    prop_assert!(ap >= n_pos as f64 / n as f64 - 0.02, "ap {}", ap);
    });
}

// ---------------------------------------------------------------- pipeline

fn tiny_run(seed: u64) -> String {
    let bags = generate_synthetic(&tiny_synthetic(seed)).unwrap();
    let ck = train(&tiny_train_config(seed), &Dataset::Bags(bags)).unwrap();
    assert!(ck.head.posterior.is_finite() && ck.encoder.as_ref().unwrap().is_finite());
    ck.to_json().unwrap()
}


pub fn training_is_deterministic_and_isolated() {
    proptest!(cases(), |(s1 in 0u64..1_000_000, s2 in 0u64..1_000_000)| {
    let sequential = (tiny_run(s1), tiny_run(s2));
    let h1 = std::thread::spawn(move || tiny_run(s1));
    let h2 = std::thread::spawn(move || tiny_run(s2));
    let interleaved = (h1.join().unwrap(), h2.join().unwrap());
    prop_assert_eq!(sequential, interleaved);
    });
}

pub fn cli_commands_are_idempotent() {
    proptest!(cases(), |(seed in 0u64..1_000_000)| {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    std::fs::write(p("syn.json"), serde_json::to_string(&tiny_synthetic(seed)).unwrap()).unwrap();
    std::fs::write(p("cfg.json"), serde_json::to_string(&tiny_train_config(seed)).unwrap()).unwrap();
    let steps: Vec<Vec<String>> = vec![
        vec!["synth", "--config", &p("syn.json"), "--out", &p("bags.jsonl"), "--features-out", &p("feat.jsonl")],
        vec!["train", "--data", &p("bags.jsonl"), "--config", &p("cfg.json"), "--out", &p("a.json")],
        vec!["train", "--data", &p("feat.jsonl"), "--config", &p("cfg.json"), "--out", &p("b.json")],
        vec!["eval", "--model", &p("a.json"), "--data", &p("bags.jsonl"), "--report", &p("r.json")],
        vec!["predict", "--model", &p("a.json"), "--data", &p("bags.jsonl"), "--out", &p("pa.csv")],
        vec!["predict", "--model", &p("b.json"), "--data", &p("feat.jsonl"), "--out", &p("pb.csv")],
        vec!["fuse", "--a", &p("pa.csv"), "--b", &p("pb.csv"), "--out", &p("f.csv")],
    ]
    .into_iter()
    .map(|v| std::iter::once("uamil").chain(v.iter().map(|s| &**s)).map(String::from).collect())
    .collect();
    let outputs = ["bags.jsonl", "feat.jsonl", "a.json", "b.json", "r.json", "pa.csv", "pb.csv", "f.csv"];
    let mut first = Vec::new();
    for round in 0..2 {
        for argv in &steps {
            prop_assert_eq!(uamil::cli::run_cli(argv.clone()), 0, "{:?}", argv);
        }
        let snapshot: Vec<Vec<u8>> = outputs.iter().map(|o| std::fs::read(p(o)).unwrap()).collect();
        if round == 0 {
            first = snapshot;
        } else {
            prop_assert_eq!(&first, &snapshot);
        }
    }
    });
}

/// Every property, by name.
#[allow(dead_code)]
pub const ALL: &[(&str, fn())] = &[
    ("segment_count_and_concatenation", segment_count_and_concatenation),
    ("kinematics_preserve_speed", kinematics_preserve_speed),
    ("normalizer_standardizes_training_data", normalizer_standardizes_training_data),
    ("constant_channels_are_rejected", constant_channels_are_rejected),
    ("build_bags_ignores_record_order", build_bags_ignores_record_order),
    ("synthetic_generation_is_reproducible_and_consistent", synthetic_generation_is_reproducible_and_consistent),
    ("parameter_count_depends_only_on_shape", parameter_count_depends_only_on_shape),
    ("encode_stays_finite_on_bounded_inputs", encode_stays_finite_on_bounded_inputs),
    ("encoder_gradient_matches_differences", encoder_gradient_matches_differences),
    ("softplus_is_positive", softplus_is_positive),
    ("prediction_summary_matches_definition", prediction_summary_matches_definition),
    ("confidence_is_monotone", confidence_is_monotone),
    ("predict_mc_repeats_bit_for_bit", predict_mc_repeats_bit_for_bit),
    ("elbo_gradient_matches_differences", elbo_gradient_matches_differences),
    ("kl_estimate_converges", kl_estimate_converges),
    ("attention_follows_piecewise_rule", attention_follows_piecewise_rule),
    ("aggregation_is_permutation_invariant", aggregation_is_permutation_invariant),
    ("batches_have_requested_composition", batches_have_requested_composition),
    ("fused_value_lies_between_inputs", fused_value_lies_between_inputs),
    ("swapping_modalities_mirrors_lambda", swapping_modalities_mirrors_lambda),
    ("fusion_ignores_record_order", fusion_ignores_record_order),
    ("nonpositive_confidence_is_rejected", nonpositive_confidence_is_rejected),
    ("auc_invariant_under_monotone_maps", auc_invariant_under_monotone_maps),
    ("metrics_match_brute_force_and_stay_in_range", metrics_match_brute_force_and_stay_in_range),
    ("ap_of_random_scores_is_near_prevalence", ap_of_random_scores_is_near_prevalence),
    ("training_is_deterministic_and_isolated", training_is_deterministic_and_isolated),
    ("cli_commands_are_idempotent", cli_commands_are_idempotent),
];
