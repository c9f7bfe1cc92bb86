//! Seeded synthetic activation-vector benchmark.
//!
//! Known classes are split into groups of related classes. A class profile
//! has one dominant activation, elevated activations for the other members
//! of its group and a low background elsewhere; closed-set samples are the
//! profile plus Gaussian noise. Open-set samples come from held-out classes,
//! each anchored on a known class but with a weakened peak, re-weighted group
//! members and a few stray activations. Fooling samples are a single large
//! spike with most other coordinates pushed down to the floor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::avio::{ActivationSample, Dataset, Partition, FOOLING_LABEL, OPEN_SET_LABEL};
use crate::error::{Error, Result};
use crate::mav::{compute_mav, correct_subset, MetricConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_channels: usize,
    pub train_per_class: usize,
    pub validation_per_class: usize,
    pub n_openset: usize,
    pub n_heldout_classes: usize,
    pub n_fooling: usize,
    /// Number of classes per related group.
    pub group_size: usize,
    /// Activation of a class's own output.
    pub dominant_level: f64,
    /// Activation of the other members of its group.
    pub related_level: f64,
    /// Activation of unrelated outputs.
    pub background_level: f64,
    /// Standard deviation of the per-coordinate Gaussian noise.
    pub noise_scale: f64,
    /// How far held-out class profiles stray from the known profiles.
    pub openset_shift: f64,
    /// Fraction of non-spike coordinates pushed to the floor in fooling vectors.
    pub fooling_sparsity: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 100,
            n_channels: 1,
            train_per_class: 200,
            validation_per_class: 50,
            n_openset: 2000,
            n_heldout_classes: 50,
            n_fooling: 1500,
            group_size: 5,
            dominant_level: 14.0,
            related_level: 3.0,
            background_level: -1.0,
            noise_scale: 1.0,
            openset_shift: 0.5,
            fooling_sparsity: 0.9,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.n_channels < 1 || self.train_per_class < 1 || self.group_size < 1 {
            return bad("channel, train-sample and group counts must be at least 1".into());
        }
        if self.group_size > self.n_classes {
            return bad(format!(
                "group size {} exceeds the {} classes",
                self.group_size, self.n_classes
            ));
        }
        if self.n_openset > 0 && self.n_heldout_classes < 1 {
            return bad("open-set samples need at least one held-out class".into());
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!(
                "noise scale must be finite and ≥ 0, got {}",
                self.noise_scale
            ));
        }
        if !(self.openset_shift > 0.0 && self.openset_shift.is_finite()) {
            return bad(format!(
                "open-set shift must be positive, got {}",
                self.openset_shift
            ));
        }
        if !(0.0..=1.0).contains(&self.fooling_sparsity) {
            return bad(format!(
                "fooling sparsity must lie in [0, 1], got {}",
                self.fooling_sparsity
            ));
        }
        let levels = [
            self.dominant_level,
            self.related_level,
            self.background_level,
        ];
        if levels.iter().any(|l| !l.is_finite()) || !(self.dominant_level > self.related_level) {
            return bad("activation levels must be finite with dominant > related".into());
        }
        Ok(())
    }

    fn group_of(&self, class: usize) -> std::ops::Range<usize> {
        let start = class / self.group_size * self.group_size;
        start..(start + self.group_size).min(self.n_classes)
    }
}

/// The four evaluation partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub train: Dataset,
    pub validation: Dataset,
    pub openset: Dataset,
    pub fooling: Dataset,
}

const STREAM_PROFILE: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_VALIDATION: u64 = 2;
const STREAM_OPENSET: u64 = 3;
const STREAM_FOOLING: u64 = 4;

fn rng_for(seed: u64, id: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ id);
    rng.set_stream(stream);
    rng
}

/// Mean activation pattern of each known class.
pub fn class_profiles(cfg: &SynthConfig) -> Vec<Vec<f64>> {
    (0..cfg.n_classes)
        .map(|j| {
            let mut rng = rng_for(cfg.seed, j as u64, STREAM_PROFILE);
            let mut p = vec![cfg.background_level; cfg.n_classes];
            for k in cfg.group_of(j) {
                if k != j {
                    p[k] = cfg.related_level * rng.random_range(0.6..1.2);
                }
            }
            p[j] = cfg.dominant_level * rng.random_range(0.9..1.1);
            p
        })
        .collect()
}

fn heldout_profile(cfg: &SynthConfig, profiles: &[Vec<f64>], h: usize) -> Vec<f64> {
    let mut rng = rng_for(cfg.seed, (cfg.n_classes + h) as u64, STREAM_PROFILE);
    let n = cfg.n_classes;
    // an unseen category resembling some known class, with a weaker peak and
    // a different pattern of related activations
    let anchor = rng.random_range(0..n);
    let mut p = profiles[anchor].clone();
    let shift = cfg.openset_shift;
    p[anchor] *= 1.0 - (0.15 + 0.35 * rng.random::<f64>()) * shift.min(2.0);
    for k in cfg.group_of(anchor) {
        if k != anchor {
            p[k] *= rng.random_range(0.5..1.0 + shift);
        }
    }
    let strays = ((3.0 * shift).round() as usize).max(1);
    for _ in 0..strays {
        let k = rng.random_range(0..n);
        if k != anchor {
            p[k] = p[k].max(cfg.related_level * shift * rng.random_range(0.5..1.5));
        }
    }
    p
}

fn noisy(profile: &[f64], noise: &Option<Normal<f64>>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match noise {
        Some(n) => profile.iter().map(|&p| p + n.sample(rng)).collect(),
        None => profile.to_vec(),
    }
}

fn noisy_sample(
    label: i32,
    profile: &[f64],
    channels: usize,
    noise: &Option<Normal<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<ActivationSample> {
    let rows: Vec<Vec<f64>> = (0..channels).map(|_| noisy(profile, noise, rng)).collect();
    ActivationSample::from_channels(label, &rows)
}

fn fooling_vector(
    cfg: &SynthConfig,
    profiles: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> (usize, Vec<f64>) {
    let n = cfg.n_classes;
    let target = rng.random_range(0..n);
    let floor = cfg.background_level - 2.0 * cfg.noise_scale.max(0.5);
    let mut v: Vec<f64> = (0..n)
        .map(|k| {
            if rng.random_bool(cfg.fooling_sparsity) {
                floor - rng.random_range(0.0..1.0)
            } else {
                profiles[target][k].min(cfg.related_level) * rng.random_range(0.0..0.5)
            }
        })
        .collect();
    v[target] = cfg.dominant_level * rng.random_range(1.0..1.5);
    (target, v)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

const FOOLING_RETRIES: usize = 100;

pub fn gen_benchmark(cfg: &SynthConfig) -> Result<Benchmark> {
    cfg.validate()?;
    let n = cfg.n_classes;
    let c = cfg.n_channels;
    let noise = (cfg.noise_scale > 0.0).then(|| Normal::new(0.0, cfg.noise_scale).unwrap());
    let profiles = class_profiles(cfg);

    let mut train = Vec::with_capacity(n * cfg.train_per_class);
    let mut validation = Vec::with_capacity(n * cfg.validation_per_class);
    for (j, profile) in profiles.iter().enumerate() {
        let mut rng = rng_for(cfg.seed, j as u64, STREAM_TRAIN);
        for _ in 0..cfg.train_per_class {
            train.push(noisy_sample(j as i32, profile, c, &noise, &mut rng)?);
        }
        let mut rng = rng_for(cfg.seed, j as u64, STREAM_VALIDATION);
        for _ in 0..cfg.validation_per_class {
            validation.push(noisy_sample(j as i32, profile, c, &noise, &mut rng)?);
        }
    }

    let mut openset = Vec::with_capacity(cfg.n_openset);
    if cfg.n_openset > 0 {
        let heldout: Vec<Vec<f64>> = (0..cfg.n_heldout_classes)
            .map(|h| heldout_profile(cfg, &profiles, h))
            .collect();
        let per_class = cfg.n_openset.div_ceil(cfg.n_heldout_classes);
        'outer: for (h, profile) in heldout.iter().enumerate() {
            let mut rng = rng_for(cfg.seed, (n + h) as u64, STREAM_OPENSET);
            for _ in 0..per_class {
                if openset.len() == cfg.n_openset {
                    break 'outer;
                }
                openset.push(noisy_sample(OPEN_SET_LABEL, profile, c, &noise, &mut rng)?);
            }
        }
    }

    let train = Dataset::new(n, c, Partition::Train, train)?;

    // Per-class 95th percentile of training distances, for the fooling check.
    let metric = MetricConfig::default();
    let subset = correct_subset(&train);
    let mut limits = Vec::with_capacity(n);
    for samples in &subset.per_class {
        if samples.is_empty() {
            limits.push(None);
            continue;
        }
        let mav = compute_mav(samples)?;
        let per_channel = (0..c)
            .map(|ch| {
                let mut d = samples
                    .iter()
                    .map(|s| metric.distance(&s.channel_f64(ch), &mav[ch]))
                    .collect::<Result<Vec<_>>>()?;
                d.sort_by(f64::total_cmp);
                Ok(percentile(&d, 0.95))
            })
            .collect::<Result<Vec<_>>>()?;
        limits.push(Some((mav, per_channel)));
    }

    let mut fooling = Vec::with_capacity(cfg.n_fooling);
    let mut rng = rng_for(cfg.seed, n as u64, STREAM_FOOLING);
    for i in 0..cfg.n_fooling {
        let mut attempt = 0;
        let sample = loop {
            let (target, v) = fooling_vector(cfg, &profiles, &mut rng);
            let rows: Vec<Vec<f64>> = (0..c)
                .map(|_| match &noise {
                    Some(_) => v
                        .iter()
                        .map(|x| x + rng.random_range(-0.05..0.05))
                        .collect(),
                    None => v.clone(),
                })
                .collect();
            let s = ActivationSample::from_channels(FOOLING_LABEL, &rows)?;
            let far_enough = match &limits[target] {
                None => true,
                Some((mav, p95)) => (0..c).all(|ch| {
                    metric
                        .distance(&s.channel_f64(ch), &mav[ch])
                        .is_ok_and(|d| d > p95[ch])
                }),
            };
            if far_enough {
                break s;
            }
            attempt += 1;
            if attempt == FOOLING_RETRIES {
                return Err(Error::Config(format!(
                    "fooling sample {i} stays within the 95th percentile of class {target} after {FOOLING_RETRIES} draws"
                )));
            }
        };
        fooling.push(sample);
    }

    Ok(Benchmark {
        train,
        validation: Dataset::new(n, c, Partition::Validation, validation)?,
        openset: Dataset::new(n, c, Partition::OpenSet, openset)?,
        fooling: Dataset::new(n, c, Partition::Fooling, fooling)?,
    })
}

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

pub fn empirical_cdf(values: &[f64]) -> Result<EmpiricalCdf> {
    if values.is_empty() {
        return Err(Error::EmptyDataset("empirical CDF of no values".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Data("empirical CDF of NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalCdf { sorted })
}

impl EmpiricalCdf {
    /// Fraction of values `≤ x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Kolmogorov–Smirnov distance `sup |F_n(x) - F(x)|` to a continuous CDF.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                let above = (i + 1) as f64 / n - f;
                let below = f - i as f64 / n;
                above.max(below)
            })
            .fold(0.0, f64::max)
    }
}
