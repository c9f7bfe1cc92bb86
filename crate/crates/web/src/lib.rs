//! Browser demo bindings. Each export has a plain Rust twin so the numbers
//! can be checked natively; the wasm wrappers only convert errors.

use openmax::eval::{linear_grid, score_datasets, sweep_scores};
use openmax::openmax::{calibrate, revise_activations, softmax};
use openmax::synth::gen_benchmark;
use openmax::{Error, Hyperparams, MetricConfig, Result, Scorer, SynthConfig, WeibullModel};
use wasm_bindgen::prelude::*;

/// CDF of a shifted Weibull at `points` evenly spaced distances in `[0, x_max]`.
pub fn cdf_curve(tau: f64, kappa: f64, lambda: f64, x_max: f64, points: usize) -> Result<Vec<f64>> {
    let model = WeibullModel::new(tau, kappa, lambda)?;
    if !(x_max > 0.0 && x_max.is_finite()) || points < 2 {
        return Err(Error::Config(
            "need a positive range and at least 2 points".into(),
        ));
    }
    Ok((0..points)
        .map(|i| model.cdf(x_max * i as f64 / (points - 1) as f64))
        .collect())
}

/// SoftMax and OpenMax probabilities for one activation vector whose classes
/// sit at `distances` from their means, all sharing one Weibull model.
///
/// Returns the `N` SoftMax probabilities followed by the `N + 1` OpenMax
/// probabilities (unknown first).
pub fn compare(
    av: &[f64],
    distances: &[f64],
    tau: f64,
    kappa: f64,
    lambda: f64,
    alpha: usize,
) -> Result<Vec<f64>> {
    if av.len() != distances.len() || av.len() < 2 {
        return Err(Error::Dimension(format!(
            "{} activations and {} distances",
            av.len(),
            distances.len()
        )));
    }
    let model = WeibullModel::new(tau, kappa, lambda)?;
    let revised = revise_activations(av, alpha, |j| Ok(model.cdf(distances[j])))?;
    let mut out = softmax(av);
    out.extend(revised.probs);
    Ok(out)
}

/// F-measure against threshold on a small seeded benchmark.
///
/// Returns `[thresholds; openmax F; softmax F]`, each of length 51.
pub fn sweep(n_classes: usize, seed: u64, tail_size: usize, alpha: usize) -> Result<Vec<f64>> {
    let cfg = SynthConfig {
        n_classes,
        train_per_class: 60,
        validation_per_class: 20,
        n_openset: 20 * n_classes,
        n_heldout_classes: n_classes.div_ceil(2),
        n_fooling: 10 * n_classes,
        seed,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    let b = gen_benchmark(&cfg)?;
    let model = calibrate(&b.train, MetricConfig::default(), tail_size)?;
    let hp = Hyperparams::new(alpha.min(n_classes), 0.0)?;
    let test = [&b.validation, &b.openset, &b.fooling];
    let grid = linear_grid(1.0, 50);
    let om = sweep_scores(
        &score_datasets(&Scorer::OpenMax { model: &model, hp }, &test)?,
        &grid,
    )?;
    let sm = sweep_scores(&score_datasets(&Scorer::SoftmaxThreshold, &test)?, &grid)?;
    let mut out = grid;
    out.extend(om.fmeasures);
    out.extend(sm.fmeasures);
    Ok(out)
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn weibull_cdf_curve(
    tau: f64,
    kappa: f64,
    lambda: f64,
    x_max: f64,
    points: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    cdf_curve(tau, kappa, lambda, x_max, points).map_err(js)
}

#[wasm_bindgen]
pub fn compare_probabilities(
    av: Vec<f64>,
    distances: Vec<f64>,
    tau: f64,
    kappa: f64,
    lambda: f64,
    alpha: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    compare(&av, &distances, tau, kappa, lambda, alpha).map_err(js)
}

#[wasm_bindgen]
pub fn fmeasure_sweep(
    n_classes: usize,
    seed: u32,
    tail_size: usize,
    alpha: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    sweep(n_classes, seed as u64, tail_size, alpha).map_err(js)
}
