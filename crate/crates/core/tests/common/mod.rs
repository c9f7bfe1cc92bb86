#![allow(dead_code)]

use openmax::evt::weibull_cdf;
use openmax::{
    ActivationSample, ClassModel, Dataset, MetricConfig, OpenMaxModel, Partition, WeibullModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_weibull(rng: &mut impl Rng) -> WeibullModel {
    WeibullModel::new(
        rng.random_range(0.0..0.5),
        rng.random_range(0.5..6.0),
        rng.random_range(0.05..2.0),
    )
    .unwrap()
}

pub fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// A model covering every class with random MAVs and Weibull fits.
pub fn random_model(rng: &mut impl Rng, n: usize, c: usize, metric: MetricConfig) -> OpenMaxModel {
    let class_models = (0..n)
        .map(|j| ClassModel {
            class_id: j,
            mav: (0..c).map(|_| random_vector(rng, n, 5.0)).collect(),
            weibull: (0..c).map(|_| random_weibull(rng)).collect(),
            n_support: 20,
        })
        .collect();
    OpenMaxModel::from_parts(class_models, Vec::new(), metric, 20, n, c).unwrap()
}

/// A random sample whose values are exactly representable as `f32`.
pub fn random_sample(rng: &mut impl Rng, label: i32, n: usize, c: usize) -> ActivationSample {
    let values = (0..n * c)
        .map(|_| rng.random_range(-10.0f32..10.0))
        .collect();
    ActivationSample::new(label, c, n, values).unwrap()
}

pub fn random_dataset(rng: &mut impl Rng, partition: Partition, len: usize) -> Dataset {
    let n = rng.random_range(2..12);
    let c = rng.random_range(1..4);
    let samples = (0..len)
        .map(|_| {
            let label = match partition {
                Partition::Train | Partition::Validation => rng.random_range(0..n as i32),
                Partition::OpenSet => rng.random_range(-1..n as i32),
                Partition::Fooling => rng.random_range(-2..n as i32),
            };
            random_sample(rng, label, n, c)
        })
        .collect();
    Dataset::new(n, c, partition, samples).unwrap()
}

/// Straight-line transcription of the revision for one channel, written
/// independently of the library: explicit ranking by repeated selection,
/// per-class distance loop and an unshifted softmax.
pub fn reference_channel(
    av: &[f64],
    model: &OpenMaxModel,
    channel: usize,
    alpha: usize,
) -> Vec<f64> {
    let n = av.len();
    let mut taken = vec![false; n];
    let mut weights = vec![1.0; n];
    for rank in 1..=alpha {
        let mut best: Option<usize> = None;
        for j in 0..n {
            if !taken[j] && best.is_none_or(|b| av[j] > av[b]) {
                best = Some(j);
            }
        }
        let j = best.unwrap();
        taken[j] = true;
        let cm = model.class_model(j).unwrap();
        let d = reference_distance(av, &cm.mav[channel], model.metric);
        let p = weibull_cdf(d, &cm.weibull[channel]);
        weights[j] = 1.0 - (alpha - rank) as f64 / alpha as f64 * p;
    }
    let mut logits = vec![0.0; n + 1];
    for j in 0..n {
        logits[j + 1] = av[j] * weights[j];
        logits[0] += av[j] * (1.0 - weights[j]);
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

pub fn reference_distance(a: &[f64], b: &[f64], metric: MetricConfig) -> f64 {
    let mut sq = 0.0;
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        sq += (a[i] - b[i]).powi(2);
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    let euc = sq.sqrt();
    let cos = (1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0);
    match metric.metric {
        openmax::Metric::Euclidean => euc,
        openmax::Metric::Cosine => cos,
        openmax::Metric::Eucos => metric.eucos_weight * euc + cos,
    }
}

/// Per-channel reference probabilities averaged and renormalised.
pub fn reference_multichannel(
    s: &ActivationSample,
    model: &OpenMaxModel,
    alpha: usize,
) -> Vec<f64> {
    let mut acc = vec![0.0; s.n_classes + 1];
    for c in 0..s.n_channels {
        let av: Vec<f64> = s.channel(c).iter().map(|&v| v as f64).collect();
        for (a, p) in acc.iter_mut().zip(reference_channel(&av, model, c, alpha)) {
            *a += p;
        }
    }
    let z: f64 = acc.iter().sum();
    acc.iter().map(|a| a / z).collect()
}
