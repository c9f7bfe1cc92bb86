//! Calibration of per-class meta-recognition models and OpenMax scoring.
//!
//! Scoring revises the `alpha` highest activations by outlier weights
//! `w = 1 - ((alpha - rank) / alpha) · F(d)`, where `F` is the class's
//! Weibull CDF and `d` the distance to its mean activation vector. The
//! removed activation mass becomes the pseudo-activation of an extra
//! "unknown" class at index 0, and a softmax over the `N + 1` revised
//! activations gives the open-set probabilities.

use std::fmt;
use std::str::FromStr;

use crate::avio::{ActivationSample, Dataset, Partition};
use crate::error::{Error, Result};
use crate::evt::fit_high;
use crate::mav::{argmax, class_distances, compute_mav, correct_subset, ClassModel, MetricConfig};

pub const DEFAULT_TAIL_SIZE: usize = 20;
pub const DEFAULT_ALPHA: usize = 10;

/// A class left out of the model, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedClass {
    pub class_id: usize,
    pub reason: String,
}

/// Calibrated per-class MAVs and Weibull fits.
#[derive(Debug, Clone)]
pub struct OpenMaxModel {
    pub class_models: Vec<ClassModel>,
    pub skipped: Vec<SkippedClass>,
    pub metric: MetricConfig,
    pub eta: usize,
    pub n_classes: usize,
    pub n_channels: usize,
    lookup: Vec<Option<usize>>,
}

impl PartialEq for OpenMaxModel {
    fn eq(&self, other: &Self) -> bool {
        self.class_models == other.class_models
            && self.skipped == other.skipped
            && self.metric == other.metric
            && self.eta == other.eta
            && self.n_classes == other.n_classes
            && self.n_channels == other.n_channels
    }
}

impl OpenMaxModel {
    pub fn from_parts(
        class_models: Vec<ClassModel>,
        skipped: Vec<SkippedClass>,
        metric: MetricConfig,
        eta: usize,
        n_classes: usize,
        n_channels: usize,
    ) -> Result<Self> {
        if eta < 2 {
            return Err(Error::Config(format!(
                "tail size must be at least 2, got {eta}"
            )));
        }
        if n_classes < 2 || n_channels < 1 {
            return Err(Error::Dimension(format!(
                "model needs N ≥ 2 and C ≥ 1, got N={n_classes} C={n_channels}"
            )));
        }
        let mut lookup = vec![None; n_classes];
        for (pos, cm) in class_models.iter().enumerate() {
            let slot = lookup
                .get_mut(cm.class_id)
                .ok_or_else(|| Error::Dimension(format!("class id {} ≥ N", cm.class_id)))?;
            if slot.replace(pos).is_some() {
                return Err(Error::Data(format!(
                    "duplicate model for class {}",
                    cm.class_id
                )));
            }
            if cm.mav.len() != n_channels
                || cm.weibull.len() != n_channels
                || cm.mav.iter().any(|row| row.len() != n_classes)
            {
                return Err(Error::Dimension(format!(
                    "class {} model has wrong shape",
                    cm.class_id
                )));
            }
            if cm.mav.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "class {} MAV is not finite",
                    cm.class_id
                )));
            }
            for w in &cm.weibull {
                w.validate()?;
            }
        }
        for s in &skipped {
            if s.class_id >= n_classes || lookup[s.class_id].is_some() {
                return Err(Error::Data(format!(
                    "bad skip entry for class {}",
                    s.class_id
                )));
            }
        }
        Ok(OpenMaxModel {
            class_models,
            skipped,
            metric,
            eta,
            n_classes,
            n_channels,
            lookup,
        })
    }

    pub fn class_model(&self, class_id: usize) -> Option<&ClassModel> {
        self.lookup
            .get(class_id)
            .copied()
            .flatten()
            .map(|pos| &self.class_models[pos])
    }
}

/// Fits one MAV and one Weibull tail per (class, channel) from the correctly
/// classified training samples. Classes with fewer than `eta` correct samples,
/// or whose tail has no spread, are skipped and listed in the model.
pub fn calibrate(train: &Dataset, metric: MetricConfig, eta: usize) -> Result<OpenMaxModel> {
    if train.partition != Partition::Train {
        return Err(Error::Data(format!(
            "calibration needs the train partition, got {}",
            train.partition
        )));
    }
    if eta < 2 {
        return Err(Error::Config(format!(
            "tail size must be at least 2, got {eta}"
        )));
    }
    let subset = correct_subset(train);
    let mut skipped = Vec::new();
    let mut mavs = Vec::with_capacity(train.n_classes);
    for (j, samples) in subset.per_class.iter().enumerate() {
        if samples.len() < eta {
            skipped.push(SkippedClass {
                class_id: j,
                reason: format!("{} correct samples, tail size {eta}", samples.len()),
            });
            mavs.push(None);
        } else {
            mavs.push(Some(compute_mav(samples)?));
        }
    }
    let distances = class_distances(&subset, &mavs, &metric)?;

    let mut class_models = Vec::new();
    for (j, (mav, per_channel)) in mavs.into_iter().zip(distances).enumerate() {
        let Some(mav) = mav else { continue };
        let fits: Result<Vec<_>> = per_channel.iter().map(|d| fit_high(d, eta)).collect();
        match fits {
            Ok(weibull) => class_models.push(ClassModel {
                class_id: j,
                mav,
                weibull,
                n_support: subset.per_class[j].len(),
            }),
            Err(e @ Error::DegenerateTail(_)) => skipped.push(SkippedClass {
                class_id: j,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if class_models.is_empty() {
        return Err(Error::Calibration(format!(
            "all {} classes were skipped",
            train.n_classes
        )));
    }
    skipped.sort_by_key(|s| s.class_id);
    OpenMaxModel::from_parts(
        class_models,
        skipped,
        metric,
        eta,
        train.n_classes,
        train.n_channels,
    )
}

/// How the outlier probability enters the revision weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Weibull CDF of the distance: far inputs are penalised.
    #[default]
    Cdf,
    /// Weibull survival `exp(-((d - tau)/lambda)^kappa)`, as the weight is
    /// sometimes written. Kept for comparison only.
    Survival,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cdf" => Ok(Weighting::Cdf),
            "survival" => Ok(Weighting::Survival),
            other => Err(Error::Config(format!("unknown weighting '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Number of top-ranked classes whose activations are revised.
    pub alpha: usize,
    /// Minimum winning probability; below it the input is rejected as uncertain.
    pub epsilon: f64,
    pub weighting: Weighting,
}

impl Hyperparams {
    pub fn new(alpha: usize, epsilon: f64) -> Result<Self> {
        let hp = Hyperparams {
            alpha,
            epsilon,
            weighting: Weighting::Cdf,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha < 1 {
            return Err(Error::Config("alpha must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: DEFAULT_ALPHA,
            epsilon: 0.0,
            weighting: Weighting::Cdf,
        }
    }
}

/// Softmax with the maximum subtracted first.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Open-set probabilities for one activation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetScores {
    /// `N + 1` probabilities; index 0 is the unknown class.
    pub probs: Vec<f64>,
    /// Revised activations `v ∘ w`.
    pub revised_av: Vec<f64>,
    /// Pseudo-activation of the unknown class.
    pub unknown_activation: f64,
    /// Revision weights `w`, one per class.
    pub weights: Vec<f64>,
}

/// Class indices by descending activation, lowest index first on ties.
pub fn rank_order(av: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..av.len()).collect();
    order.sort_by(|&a, &b| av[b].total_cmp(&av[a]).then(a.cmp(&b)));
    order
}

/// Applies the revision given a callback yielding the outlier probability
/// for a class. The callback is asked only about the top `alpha` classes.
pub fn revise_activations<F>(av: &[f64], alpha: usize, mut outlier_prob: F) -> Result<OpenSetScores>
where
    F: FnMut(usize) -> Result<f64>,
{
    let n = av.len();
    if alpha < 1 || alpha > n {
        return Err(Error::Config(format!(
            "alpha must lie in [1, {n}], got {alpha}"
        )));
    }
    let mut weights = vec![1.0; n];
    for (rank0, &j) in rank_order(av).iter().take(alpha).enumerate() {
        let rank = rank0 + 1;
        let p = outlier_prob(j)?;
        weights[j] = 1.0 - ((alpha - rank) as f64 / alpha as f64) * p;
    }
    let revised_av: Vec<f64> = av.iter().zip(&weights).map(|(v, w)| v * w).collect();
    let unknown_activation: f64 = av.iter().zip(&weights).map(|(v, w)| v * (1.0 - w)).sum();
    let mut extended = Vec::with_capacity(n + 1);
    extended.push(unknown_activation);
    extended.extend_from_slice(&revised_av);
    Ok(OpenSetScores {
        probs: softmax(&extended),
        revised_av,
        unknown_activation,
        weights,
    })
}

/// OpenMax scores of one channel's activation vector.
pub fn openmax_scores(
    av: &[f64],
    model: &OpenMaxModel,
    channel: usize,
    hp: &Hyperparams,
) -> Result<OpenSetScores> {
    if av.len() != model.n_classes {
        return Err(Error::Dimension(format!(
            "activation vector has {} entries, model has {} classes",
            av.len(),
            model.n_classes
        )));
    }
    if channel >= model.n_channels {
        return Err(Error::Dimension(format!(
            "channel {channel} out of range for {} channels",
            model.n_channels
        )));
    }
    hp.validate()?;
    revise_activations(av, hp.alpha, |j| {
        let cm = model.class_model(j).ok_or(Error::ModelCoverage(j))?;
        let d = model.metric.distance(av, &cm.mav[channel])?;
        let w = &cm.weibull[channel];
        Ok(match hp.weighting {
            Weighting::Cdf => w.cdf(d),
            Weighting::Survival => w.survival(d),
        })
    })
}

/// Averages per-channel OpenMax probabilities and renormalises. The revised
/// activations, unknown activation and weights in the result are channel means.
pub fn openmax_multichannel(
    sample: &ActivationSample,
    model: &OpenMaxModel,
    hp: &Hyperparams,
) -> Result<OpenSetScores> {
    if sample.n_channels != model.n_channels || sample.n_classes != model.n_classes {
        return Err(Error::Dimension(format!(
            "sample is {}×{}, model is {}×{}",
            sample.n_channels, sample.n_classes, model.n_channels, model.n_classes
        )));
    }
    let n = model.n_classes;
    let mut probs = vec![0.0; n + 1];
    let mut revised_av = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut unknown_activation = 0.0;
    for c in 0..sample.n_channels {
        let s = openmax_scores(&sample.channel_f64(c), model, c, hp)?;
        probs.iter_mut().zip(&s.probs).for_each(|(a, p)| *a += p);
        revised_av
            .iter_mut()
            .zip(&s.revised_av)
            .for_each(|(a, v)| *a += v);
        weights
            .iter_mut()
            .zip(&s.weights)
            .for_each(|(a, w)| *a += w);
        unknown_activation += s.unknown_activation;
    }
    let inv = 1.0 / sample.n_channels as f64;
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    revised_av.iter_mut().for_each(|v| *v *= inv);
    weights.iter_mut().for_each(|w| *w *= inv);
    Ok(OpenSetScores {
        probs,
        revised_av,
        unknown_activation: unknown_activation * inv,
        weights,
    })
}

/// Outcome of an open-set decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Known(usize),
    Unknown,
    Uncertain,
}

impl Verdict {
    pub fn is_rejection(self) -> bool {
        !matches!(self, Verdict::Known(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Known(j) => write!(f, "{j}"),
            Verdict::Unknown => f.write_str("UNKNOWN"),
            Verdict::Uncertain => f.write_str("UNCERTAIN"),
        }
    }
}

/// Decision on an `N + 1` OpenMax probability vector (index 0 = unknown).
pub fn decide_open_set(probs: &[f64], epsilon: f64) -> Verdict {
    let best = argmax(probs);
    if best == 0 {
        Verdict::Unknown
    } else if probs[best] < epsilon {
        Verdict::Uncertain
    } else {
        Verdict::Known(best - 1)
    }
}

/// Decision on an `N`-class SoftMax probability vector.
pub fn decide_closed_set(probs: &[f64], epsilon: f64) -> Verdict {
    let best = argmax(probs);
    if probs[best] < epsilon {
        Verdict::Uncertain
    } else {
        Verdict::Known(best)
    }
}

pub fn predict(
    sample: &ActivationSample,
    model: &OpenMaxModel,
    hp: &Hyperparams,
) -> Result<Verdict> {
    let scores = openmax_multichannel(sample, model, hp)?;
    Ok(decide_open_set(&scores.probs, hp.epsilon))
}

/// SoftMax probabilities averaged over channels.
pub fn softmax_multichannel(sample: &ActivationSample) -> Vec<f64> {
    let mut probs = vec![0.0; sample.n_classes];
    for c in 0..sample.n_channels {
        for (a, p) in probs.iter_mut().zip(softmax(&sample.channel_f64(c))) {
            *a += p;
        }
    }
    let inv = 1.0 / sample.n_channels as f64;
    probs.iter_mut().for_each(|p| *p *= inv);
    probs
}

/// Baseline: channel-averaged SoftMax, rejecting when the peak is below `epsilon`.
pub fn softmax_threshold_predict(sample: &ActivationSample, epsilon: f64) -> Verdict {
    decide_closed_set(&softmax_multichannel(sample), epsilon)
}
