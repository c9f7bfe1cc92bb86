//! Open-set evaluation: confusion counts, F-measure, threshold sweeps,
//! rejection rates and hyper-parameter grid search.
//!
//! Counting rules. A known-class sample predicted as its own class is a true
//! positive; predicted as another class *or rejected* it is a false positive.
//! An open-set or fooling sample accepted as any known class is a false
//! negative; rejecting it counts nothing.

use std::fmt::Write as _;

use crate::avio::Dataset;
use crate::error::{Error, Result};
use crate::mav::{argmax, MetricConfig};
use crate::openmax::{
    calibrate, openmax_multichannel, softmax_multichannel, Hyperparams, OpenMaxModel, Verdict,
    Weighting,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpenSetCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl OpenSetCounts {
    pub fn f_measure(&self) -> f64 {
        f_measure(self)
    }
}

impl std::ops::Add for OpenSetCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        OpenSetCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// `2tp / (2tp + fp + fn)`; zero when every count is zero.
pub fn f_measure(c: &OpenSetCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

fn count_one(verdict: Verdict, label: i32) -> OpenSetCounts {
    let mut c = OpenSetCounts::default();
    match (label >= 0, verdict) {
        (true, Verdict::Known(j)) if j as i32 == label => c.tp = 1,
        (true, _) => c.fp = 1,
        (false, Verdict::Known(_)) => c.fn_ = 1,
        (false, _) => {}
    }
    c
}

pub fn open_set_counts(predictions: &[Verdict], labels: &[i32]) -> Result<OpenSetCounts> {
    if predictions.len() != labels.len() {
        return Err(Error::Arity(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|(&v, &l)| count_one(v, l))
        .fold(OpenSetCounts::default(), |a, b| a + b))
}

/// The decision rule under evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Scorer<'a> {
    OpenMax {
        model: &'a OpenMaxModel,
        hp: Hyperparams,
    },
    SoftmaxThreshold,
}

impl Scorer<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::OpenMax { .. } => "openmax",
            Scorer::SoftmaxThreshold => "softmax_threshold",
        }
    }
}

/// Threshold-independent part of one sample's decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleScore {
    /// Winning known class, or `None` when the unknown class wins.
    pub top: Option<usize>,
    /// Probability of the winning entry.
    pub peak: f64,
    pub label: i32,
}

impl SampleScore {
    pub fn verdict(&self, epsilon: f64) -> Verdict {
        match self.top {
            None => Verdict::Unknown,
            Some(_) if self.peak < epsilon => Verdict::Uncertain,
            Some(j) => Verdict::Known(j),
        }
    }
}

/// Scores every sample of every dataset once, in order.
pub fn score_datasets(scorer: &Scorer<'_>, datasets: &[&Dataset]) -> Result<Vec<SampleScore>> {
    let mut out = Vec::with_capacity(datasets.iter().map(|d| d.len()).sum());
    for d in datasets {
        for s in &d.samples {
            let score = match scorer {
                Scorer::OpenMax { model, hp } => {
                    let probs = openmax_multichannel(s, model, hp)?.probs;
                    let best = argmax(&probs);
                    SampleScore {
                        top: (best > 0).then(|| best - 1),
                        peak: probs[best],
                        label: s.label,
                    }
                }
                Scorer::SoftmaxThreshold => {
                    let probs = softmax_multichannel(s);
                    let best = argmax(&probs);
                    SampleScore {
                        top: Some(best),
                        peak: probs[best],
                        label: s.label,
                    }
                }
            };
            out.push(score);
        }
    }
    Ok(out)
}

pub fn counts_at(scores: &[SampleScore], epsilon: f64) -> OpenSetCounts {
    scores
        .iter()
        .map(|s| count_one(s.verdict(epsilon), s.label))
        .fold(OpenSetCounts::default(), |a, b| a + b)
}

/// F-measure against rejection threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub thresholds: Vec<f64>,
    pub fmeasures: Vec<f64>,
    pub counts: Vec<OpenSetCounts>,
}

impl SweepCurve {
    /// Highest F-measure and the smallest threshold achieving it.
    pub fn peak(&self) -> (f64, f64) {
        let mut best = 0;
        for i in 1..self.fmeasures.len() {
            if self.fmeasures[i] > self.fmeasures[best] {
                best = i;
            }
        }
        (self.thresholds[best], self.fmeasures[best])
    }
}

/// Sorts and de-duplicates a threshold grid; every entry must lie in `[0, 1]`.
pub fn normalize_thresholds(thresholds: &[f64]) -> Result<Vec<f64>> {
    if thresholds.is_empty() {
        return Err(Error::Config("threshold grid is empty".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
    }
    let mut grid = thresholds.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

/// `steps + 1` evenly spaced thresholds from 0 to `max`.
pub fn linear_grid(max: f64, steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|i| max * i as f64 / steps as f64).collect()
}

pub fn sweep_scores(scores: &[SampleScore], thresholds: &[f64]) -> Result<SweepCurve> {
    let thresholds = normalize_thresholds(thresholds)?;
    let counts: Vec<OpenSetCounts> = thresholds.iter().map(|&t| counts_at(scores, t)).collect();
    Ok(SweepCurve {
        fmeasures: counts.iter().map(f_measure).collect(),
        thresholds,
        counts,
    })
}

pub fn threshold_sweep(
    scorer: &Scorer<'_>,
    datasets: &[&Dataset],
    thresholds: &[f64],
) -> Result<SweepCurve> {
    if datasets.iter().all(|d| d.is_empty()) {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let thresholds = normalize_thresholds(thresholds)?;
    let scores = score_datasets(scorer, datasets)?;
    sweep_scores(&scores, &thresholds)
}

/// Fraction of `dataset` that `scorer` rejects (as unknown or uncertain) at `epsilon`.
pub fn detection_accuracy(scorer: &Scorer<'_>, dataset: &Dataset, epsilon: f64) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "{} partition is empty",
            dataset.partition
        )));
    }
    let scores = score_datasets(scorer, &[dataset])?;
    Ok(rejection_rate(&scores, epsilon))
}

pub fn rejection_rate(scores: &[SampleScore], epsilon: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let rejected = scores
        .iter()
        .filter(|s| s.verdict(epsilon).is_rejection())
        .count();
    rejected as f64 / scores.len() as f64
}

/// Search space for [`grid_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub etas: Vec<usize>,
    pub alphas: Vec<usize>,
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub eta: usize,
    pub hp: Hyperparams,
    pub fmeasure: f64,
    pub model: OpenMaxModel,
}

fn sorted_unique(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// F-measure of one grid configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub eta: usize,
    pub alpha: usize,
    pub epsilon: f64,
    pub counts: OpenSetCounts,
    pub fmeasure: f64,
}

fn check_grid(grid: &Grid, calibration: &[&Dataset]) -> Result<(Vec<usize>, Vec<usize>, Vec<f64>)> {
    let etas = sorted_unique(&grid.etas);
    let alphas = sorted_unique(&grid.alphas);
    let epsilons = normalize_thresholds(&grid.epsilons)?;
    if etas.is_empty() || alphas.is_empty() {
        return Err(Error::Config(
            "tail-size and alpha grids must be non-empty".into(),
        ));
    }
    if calibration.iter().all(|d| d.is_empty()) {
        return Err(Error::EmptyDataset("calibration split is empty".into()));
    }
    Ok((etas, alphas, epsilons))
}

/// Evaluates every grid configuration, calibrating once per tail size and
/// scoring once per (tail size, alpha). Calls `visit` with each point and the
/// model it was scored with, in ascending (eta, alpha, epsilon) order.
pub fn grid_evaluate(
    train: &Dataset,
    calibration: &[&Dataset],
    grid: &Grid,
    metric: MetricConfig,
    weighting: Weighting,
    mut visit: impl FnMut(&GridPoint, &OpenMaxModel),
) -> Result<()> {
    let (etas, alphas, epsilons) = check_grid(grid, calibration)?;
    for &eta in &etas {
        let model = calibrate(train, metric, eta)?;
        for &alpha in &alphas {
            let hp = Hyperparams::new(alpha, 0.0)?.with_weighting(weighting);
            let scores = score_datasets(&Scorer::OpenMax { model: &model, hp }, calibration)?;
            for &epsilon in &epsilons {
                let counts = counts_at(&scores, epsilon);
                let point = GridPoint {
                    eta,
                    alpha,
                    epsilon,
                    counts,
                    fmeasure: f_measure(&counts),
                };
                visit(&point, &model);
            }
        }
    }
    Ok(())
}

/// Exhaustive search maximising F-measure over `calibration` (known-class
/// samples plus a sample of open-set data). Ties go to the smallest tail
/// size, then the smallest alpha, then the smallest epsilon.
pub fn grid_search(
    train: &Dataset,
    calibration: &[&Dataset],
    grid: &Grid,
    metric: MetricConfig,
    weighting: Weighting,
) -> Result<GridResult> {
    let mut best: Option<GridResult> = None;
    grid_evaluate(train, calibration, grid, metric, weighting, |p, model| {
        if best.as_ref().is_none_or(|b| p.fmeasure > b.fmeasure) {
            best = Some(GridResult {
                eta: p.eta,
                hp: Hyperparams {
                    alpha: p.alpha,
                    epsilon: p.epsilon,
                    weighting,
                },
                fmeasure: p.fmeasure,
                model: model.clone(),
            });
        }
    })?;
    Ok(best.expect("non-empty grids yield a result"))
}

pub const SWEEP_CSV_HEADER: &str = "scorer,threshold,tp,fp,fn,fmeasure";
pub const DETECTION_CSV_HEADER: &str = "scorer,partition,threshold,rejected,total,rate";
pub const GRID_CSV_HEADER: &str = "metric,eta,alpha,epsilon,tp,fp,fn,fmeasure";

/// Sweep curves as CSV with columns `scorer,threshold,tp,fp,fn,fmeasure`.
pub fn sweep_csv(curves: &[(&str, &SweepCurve)]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for (name, curve) in curves {
        for ((t, c), f) in curve
            .thresholds
            .iter()
            .zip(&curve.counts)
            .zip(&curve.fmeasures)
        {
            writeln!(out, "{name},{t},{},{},{},{f:.6}", c.tp, c.fp, c.fn_).unwrap();
        }
    }
    out
}

/// One line of a rejection-rate report.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRow {
    pub scorer: String,
    pub partition: String,
    pub threshold: f64,
    pub rejected: usize,
    pub total: usize,
}

impl DetectionRow {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.rejected as f64 / self.total as f64
        }
    }
}

/// Rejection counts of `scores` at every threshold.
pub fn detection_rows(
    scorer: &str,
    partition: &str,
    scores: &[SampleScore],
    thresholds: &[f64],
) -> Vec<DetectionRow> {
    thresholds
        .iter()
        .map(|&t| DetectionRow {
            scorer: scorer.to_string(),
            partition: partition.to_string(),
            threshold: t,
            rejected: scores
                .iter()
                .filter(|s| s.verdict(t).is_rejection())
                .count(),
            total: scores.len(),
        })
        .collect()
}

pub fn detection_csv(rows: &[DetectionRow]) -> String {
    let mut out = String::from(DETECTION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:.6}",
            r.scorer,
            r.partition,
            r.threshold,
            r.rejected,
            r.total,
            r.rate()
        )
        .unwrap();
    }
    out
}
