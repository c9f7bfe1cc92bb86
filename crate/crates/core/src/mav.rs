//! Mean activation vectors (MAVs) and distances from activation vectors to them.

use std::fmt;
use std::str::FromStr;

use crate::avio::{ActivationSample, Dataset};
use crate::error::{Error, Result};
use crate::evt::WeibullModel;

/// Default Euclidean weight in the eucos metric.
pub const DEFAULT_EUCOS_WEIGHT: f64 = 1.0 / 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Euclidean,
    Cosine,
    /// `w · euclidean + cosine`
    Eucos,
}

impl Metric {
    pub fn tag(self) -> u8 {
        match self {
            Metric::Euclidean => 0,
            Metric::Cosine => 1,
            Metric::Eucos => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Metric::Euclidean),
            1 => Ok(Metric::Cosine),
            2 => Ok(Metric::Eucos),
            t => Err(Error::Format(format!("unknown metric tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
            Metric::Eucos => "eucos",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            "eucos" => Ok(Metric::Eucos),
            other => Err(Error::Config(format!(
                "unknown metric '{other}' (expected euclidean, cosine or eucos)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub metric: Metric,
    pub eucos_weight: f64,
}

impl MetricConfig {
    pub fn new(metric: Metric, eucos_weight: f64) -> Result<Self> {
        if !(eucos_weight.is_finite() && eucos_weight >= 0.0) {
            return Err(Error::Config(format!(
                "eucos weight must be finite and non-negative, got {eucos_weight}"
            )));
        }
        Ok(MetricConfig {
            metric,
            eucos_weight,
        })
    }

    pub fn distance(&self, av: &[f64], mav: &[f64]) -> Result<f64> {
        distance(av, mav, self.metric, self.eucos_weight)
    }
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            metric: Metric::Eucos,
            eucos_weight: DEFAULT_EUCOS_WEIGHT,
        }
    }
}

/// Per-class model: one MAV row and one Weibull fit per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub class_id: usize,
    /// `C × N` mean activations.
    pub mav: Vec<Vec<f64>>,
    pub weibull: Vec<WeibullModel>,
    /// Number of correctly classified training samples behind the MAV.
    pub n_support: usize,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Training samples that the network itself classifies correctly, grouped by class.
#[derive(Debug, Clone)]
pub struct CorrectSubset<'a> {
    pub per_class: Vec<Vec<&'a ActivationSample>>,
    /// Classes left without a single correct sample.
    pub empty_classes: Vec<usize>,
}

impl CorrectSubset<'_> {
    pub fn counts(&self) -> Vec<usize> {
        self.per_class.iter().map(Vec::len).collect()
    }
}

/// Keeps sample `x` for class `j` iff `x.label == j` and the argmax of its
/// channel-mean activations is `j`.
pub fn correct_subset(dataset: &Dataset) -> CorrectSubset<'_> {
    let mut per_class = vec![Vec::new(); dataset.n_classes];
    for s in &dataset.samples {
        if s.label < 0 {
            continue;
        }
        let j = s.label as usize;
        if argmax(&s.channel_mean()) == j {
            per_class[j].push(s);
        }
    }
    let empty_classes = per_class
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_empty())
        .map(|(j, _)| j)
        .collect();
    CorrectSubset {
        per_class,
        empty_classes,
    }
}

/// Elementwise mean over samples, separately per channel. Returns `C × N`.
pub fn compute_mav(samples: &[&ActivationSample]) -> Result<Vec<Vec<f64>>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::EmptyClass("mean activation vector".into()))?;
    let (c, n) = (first.n_channels, first.n_classes);
    let mut sums = vec![vec![0.0f64; n]; c];
    for s in samples {
        if s.n_channels != c || s.n_classes != n {
            return Err(Error::Dimension(
                "samples of different shape in one class".into(),
            ));
        }
        for (ch, row) in sums.iter_mut().enumerate() {
            for (acc, &v) in row.iter_mut().zip(s.channel(ch)) {
                *acc += v as f64;
            }
        }
    }
    let count = samples.len() as f64;
    for row in &mut sums {
        row.iter_mut().for_each(|v| *v /= count);
    }
    Ok(sums)
}

fn check_lengths(av: &[f64], mav: &[f64]) -> Result<()> {
    if av.len() != mav.len() {
        return Err(Error::Dimension(format!(
            "vector lengths differ: {} vs {}",
            av.len(),
            mav.len()
        )));
    }
    Ok(())
}

pub fn euclidean(av: &[f64], mav: &[f64]) -> Result<f64> {
    check_lengths(av, mav)?;
    Ok(av
        .iter()
        .zip(mav)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// `1 - cos(av, mav)`, clamped to `[0, 2]`.
pub fn cosine(av: &[f64], mav: &[f64]) -> Result<f64> {
    check_lengths(av, mav)?;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (a, b) in av.iter().zip(mav) {
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector("cosine"));
    }
    Ok((1.0 - dot / (na * nb).sqrt()).clamp(0.0, 2.0))
}

pub fn distance(av: &[f64], mav: &[f64], metric: Metric, eucos_weight: f64) -> Result<f64> {
    match metric {
        Metric::Euclidean => euclidean(av, mav),
        Metric::Cosine => cosine(av, mav),
        Metric::Eucos => {
            let cos = cosine(av, mav).map_err(|_| Error::ZeroVector("eucos"))?;
            Ok(eucos_weight * euclidean(av, mav)? + cos)
        }
    }
}

/// Distance of every correct sample to its class MAV, channel by channel.
/// Indexed `[class][channel][sample]`; `mavs[j]` is `None` for skipped classes,
/// which yield empty lists.
pub fn class_distances(
    subset: &CorrectSubset<'_>,
    mavs: &[Option<Vec<Vec<f64>>>],
    metric: &MetricConfig,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if mavs.len() != subset.per_class.len() {
        return Err(Error::Dimension(format!(
            "{} MAVs for {} classes",
            mavs.len(),
            subset.per_class.len()
        )));
    }
    subset
        .per_class
        .iter()
        .zip(mavs)
        .map(|(samples, mav)| {
            let Some(mav) = mav else {
                return Ok(Vec::new());
            };
            (0..mav.len())
                .map(|c| {
                    samples
                        .iter()
                        .map(|s| metric.distance(&s.channel_f64(c), &mav[c]))
                        .collect::<Result<Vec<_>>>()
                })
                .collect()
        })
        .collect()
}
