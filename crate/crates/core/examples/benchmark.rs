//! Runs the synthetic benchmark end to end and prints the headline numbers.
//!
//! cargo run --release -p openmax --example benchmark

use std::time::Instant;

use openmax::eval::{
    counts_at, grid_search, linear_grid, rejection_rate, score_datasets, sweep_scores, Grid,
};
use openmax::openmax::calibrate;
use openmax::synth::gen_benchmark;
use openmax::{Hyperparams, MetricConfig, Scorer, SynthConfig, Weighting};

fn main() -> openmax::Result<()> {
    let start = Instant::now();
    let cfg = SynthConfig::default();
    let b = gen_benchmark(&cfg)?;
    let test = [&b.validation, &b.openset, &b.fooling];
    let mut grid = linear_grid(0.99, 99);
    grid.extend([
        0.995, 0.999, 0.9995, 0.9999, 0.99995, 0.99999, 0.999999, 0.9999999,
    ]);

    let softmax = score_datasets(&Scorer::SoftmaxThreshold, &test)?;
    let sm_curve = sweep_scores(&softmax, &grid)?;
    let model = calibrate(&b.train, MetricConfig::default(), 20)?;
    let hp = Hyperparams::default();
    let om = score_datasets(&Scorer::OpenMax { model: &model, hp }, &test)?;
    let om_curve = sweep_scores(&om, &grid)?;

    let val_sm = score_datasets(&Scorer::SoftmaxThreshold, &[&b.validation])?;
    let acc = val_sm
        .iter()
        .filter(|s| s.top == Some(s.label as usize))
        .count() as f64
        / val_sm.len() as f64;
    println!("skipped classes: {}", model.skipped.len());
    println!(
        "base accuracy {acc:.4}  base F {:.4}",
        sm_curve.fmeasures[0]
    );
    println!("softmax peak {:?}", sm_curve.peak());
    println!("openmax peak {:?}", om_curve.peak());

    let calib_open = openmax::Dataset::new(
        b.openset.n_classes,
        b.openset.n_channels,
        b.openset.partition,
        b.openset.samples.iter().step_by(2).cloned().collect(),
    )?;
    let g = grid_search(
        &b.train,
        &[&b.validation, &calib_open],
        &Grid {
            etas: vec![10, 20, 30],
            alphas: vec![2, 5, 10],
            epsilons: linear_grid(0.9, 18),
        },
        MetricConfig::default(),
        Weighting::Cdf,
    )?;
    println!(
        "grid: eta {} alpha {} eps {} F {:.4}",
        g.eta, g.hp.alpha, g.hp.epsilon, g.fmeasure
    );
    let fool_om = score_datasets(
        &Scorer::OpenMax {
            model: &g.model,
            hp: g.hp,
        },
        &[&b.fooling],
    )?;
    let fool_sm = score_datasets(&Scorer::SoftmaxThreshold, &[&b.fooling])?;
    println!(
        "fooling rejection at eps {}: openmax {:.4} softmax {:.4}",
        g.hp.epsilon,
        rejection_rate(&fool_om, g.hp.epsilon),
        rejection_rate(&fool_sm, g.hp.epsilon)
    );

    for eta in [5, 10, 20, 30, 40, 50] {
        let m = calibrate(&b.train, MetricConfig::default(), eta)?;
        let s = Scorer::OpenMax { model: &m, hp };
        let open = score_datasets(&s, &[&b.openset])?;
        let fool = score_datasets(&s, &[&b.fooling])?;
        let val = score_datasets(&s, &[&b.validation])?;
        let all = score_datasets(&s, &test)?;
        println!(
            "eta {eta:>2}: open-set rejection {:.4}  fooling rejection {:.4}  validation rejection {:.4}  F {:.4}",
            rejection_rate(&open, 0.0),
            rejection_rate(&fool, 0.0),
            rejection_rate(&val, 0.0),
            counts_at(&all, 0.0).f_measure()
        );
    }
    println!("elapsed {:?}", start.elapsed());
    Ok(())
}
