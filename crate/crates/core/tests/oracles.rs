mod common;

use openmax::avio::{load_model, save_model};
use openmax::eval::{counts_at, grid_search, open_set_counts, score_datasets, sweep_scores, Grid};
use openmax::evt::{fit_high, sample_weibull};
use openmax::mav::{argmax, compute_mav, correct_subset, distance, euclidean};
use openmax::openmax::{calibrate, openmax_scores, predict, rank_order, softmax};
use openmax::synth::{empirical_cdf, gen_benchmark};
use openmax::{
    ActivationSample, ClassModel, Dataset, Error, Hyperparams, Metric, MetricConfig, OpenMaxModel,
    Partition, Scorer, SynthConfig, WeibullModel, Weighting,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use common::*;

fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_classes: 20,
        train_per_class: 60,
        validation_per_class: 15,
        n_openset: 200,
        n_heldout_classes: 10,
        n_fooling: 100,
        seed,
        ..SynthConfig::default()
    }
}

fn kahan_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp, mut count) = (0.0f64, 0.0f64, 0usize);
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        count += 1;
    }
    sum / count as f64
}

#[test]
fn mav_matches_compensated_summation() {
    let mut rng = rng(11);
    let (n, c) = (40, 3);
    let samples: Vec<ActivationSample> =
        (0..500).map(|_| random_sample(&mut rng, 0, n, c)).collect();
    let refs: Vec<&ActivationSample> = samples.iter().collect();
    let mav = compute_mav(&refs).unwrap();
    for ch in 0..c {
        for j in 0..n {
            let want = kahan_mean(samples.iter().map(|s| s.channel(ch)[j] as f64));
            assert!((mav[ch][j] - want).abs() < 1e-12, "channel {ch} class {j}");
        }
    }
}

#[test]
fn distances_match_naive_loop_in_high_dimension() {
    let mut rng = rng(12);
    for _ in 0..50 {
        let a = random_vector(&mut rng, 1000, 10.0);
        let b = random_vector(&mut rng, 1000, 10.0);
        for metric in [Metric::Euclidean, Metric::Cosine, Metric::Eucos] {
            let cfg = MetricConfig::new(metric, 0.005).unwrap();
            let got = distance(&a, &b, metric, 0.005).unwrap();
            assert!(
                (got - reference_distance(&a, &b, cfg)).abs() < 1e-9,
                "{metric}"
            );
        }
    }
}

#[test]
fn correct_subset_matches_brute_force() {
    let mut rng = rng(13);
    let d = random_dataset(&mut rng, Partition::Train, 400);
    let subset = correct_subset(&d);
    for j in 0..d.n_classes {
        let want: Vec<usize> = (0..d.len())
            .filter(|&i| {
                let s = &d.samples[i];
                let mean: Vec<f64> = (0..d.n_classes)
                    .map(|k| {
                        (0..s.n_channels)
                            .map(|c| s.channel(c)[k] as f64)
                            .sum::<f64>()
                            / s.n_channels as f64
                    })
                    .collect();
                let mut best = 0;
                for k in 1..mean.len() {
                    if mean[k] > mean[best] {
                        best = k;
                    }
                }
                s.label == j as i32 && best == j
            })
            .collect();
        let got: Vec<usize> = subset.per_class[j]
            .iter()
            .map(|s| d.samples.iter().position(|x| std::ptr::eq(x, *s)).unwrap())
            .collect();
        assert_eq!(got, want, "class {j}");
    }
}

/// `sqrt(2) Γ((d+1)/2) / Γ(d/2)`, the mean norm of a standard normal vector.
fn chi_mean(d: usize) -> f64 {
    let d = d as f64;
    (d).sqrt() * (1.0 - 1.0 / (4.0 * d) + 1.0 / (32.0 * d * d))
}

fn isotropic_distances(rng: &mut impl Rng, dim: usize, sigma: f64, count: usize) -> Vec<f64> {
    let center = random_vector(rng, dim, 5.0);
    let normal = Normal::new(0.0, sigma).unwrap();
    let samples: Vec<ActivationSample> = (0..count)
        .map(|_| {
            let v: Vec<f64> = center.iter().map(|c| c + normal.sample(rng)).collect();
            ActivationSample::single(0, &v).unwrap()
        })
        .collect();
    let refs: Vec<&ActivationSample> = samples.iter().collect();
    let mav = compute_mav(&refs).unwrap();
    samples
        .iter()
        .map(|s| euclidean(&s.channel_f64(0), &mav[0]).unwrap())
        .collect()
}

#[test]
fn isotropic_cluster_mean_distance() {
    let mut rng = rng(14);
    let (dim, sigma) = (100, 0.7);
    let d = isotropic_distances(&mut rng, dim, sigma, 2000);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let want = sigma * chi_mean(dim);
    assert!(
        (mean / want - 1.0).abs() < 0.05,
        "mean {mean} expected {want}"
    );
}

#[test]
fn tail_fit_tracks_empirical_tail() {
    let mut rng = rng(15);
    let d = isotropic_distances(&mut rng, 50, 1.0, 500);
    let fit = fit_high(&d, 20).unwrap();
    let mut sorted = d.clone();
    sorted.sort_by(f64::total_cmp);
    let tail = &sorted[sorted.len() - 20..];
    let ks = empirical_cdf(tail).unwrap().ks_distance(|x| fit.cdf(x));
    assert!(ks < 0.25, "KS {ks}");
}

#[test]
fn sampler_matches_generating_model() {
    let truth = WeibullModel::new(0.5, 1.5, 2.0).unwrap();
    let draws = sample_weibull(&truth, 10_000, 7);
    let ks = empirical_cdf(&draws).unwrap().ks_distance(|x| truth.cdf(x));
    assert!(ks < 0.02, "KS {ks}");
}

#[test]
fn cdf_at_sample_quantiles_recovers_levels() {
    let truth = WeibullModel::new(1.0, 0.8, 3.0).unwrap();
    let mut draws = sample_weibull(&truth, 100_000, 9);
    draws.sort_by(f64::total_cmp);
    for k in 1..10 {
        let q = k as f64 / 10.0;
        let x = draws[(q * draws.len() as f64) as usize];
        assert!((truth.cdf(x) - q).abs() < 0.01, "q {q}");
    }
}

#[test]
fn base_accuracy_matches_argmax_loop() {
    let b = gen_benchmark(&small_config(21)).unwrap();
    let scores = score_datasets(&Scorer::SoftmaxThreshold, &[&b.validation]).unwrap();
    let correct = b
        .validation
        .samples
        .iter()
        .filter(|s| {
            let v = s.channel(0);
            let best = (0..v.len()).fold(0, |b, k| if v[k] > v[b] { k } else { b });
            best as i32 == s.label
        })
        .count() as u64;
    assert_eq!(counts_at(&scores, 0.0).tp, correct);
    assert!(correct as f64 / b.validation.len() as f64 > 0.95);
}

#[test]
fn default_benchmark_is_well_formed() {
    let b = gen_benchmark(&SynthConfig::default()).unwrap();
    assert_eq!(b.train.len(), 100 * 200);
    assert_eq!(b.validation.len(), 100 * 50);
    assert_eq!(b.openset.len(), 2000);
    assert_eq!(b.fooling.len(), 1500);
    let correct = b
        .validation
        .samples
        .iter()
        .filter(|s| argmax(&s.channel_f64(0)) as i32 == s.label)
        .count();
    assert!(correct as f64 / b.validation.len() as f64 > 0.95);
    let model = calibrate(&b.train, MetricConfig::default(), 20).unwrap();
    assert!(model.skipped.is_empty());
}

#[test]
fn sweep_matches_per_threshold_recomputation() {
    let b = gen_benchmark(&small_config(22)).unwrap();
    let model = calibrate(&b.train, MetricConfig::default(), 10).unwrap();
    let test = [&b.validation, &b.openset, &b.fooling];
    let hp = Hyperparams::new(5, 0.0).unwrap();
    let thresholds: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let curve = sweep_scores(
        &score_datasets(&Scorer::OpenMax { model: &model, hp }, &test).unwrap(),
        &thresholds,
    )
    .unwrap();
    for (k, &t) in thresholds.iter().enumerate() {
        let hp_t = Hyperparams::new(5, t).unwrap();
        let mut verdicts = Vec::new();
        let mut labels = Vec::new();
        for d in test {
            for s in &d.samples {
                verdicts.push(predict(s, &model, &hp_t).unwrap());
                labels.push(s.label);
            }
        }
        let counts = open_set_counts(&verdicts, &labels).unwrap();
        assert_eq!(curve.counts[k], counts, "threshold {t}");
    }
}

#[test]
fn model_file_round_trip_preserves_predictions() {
    let b = gen_benchmark(&small_config(23)).unwrap();
    let model = calibrate(&b.train, MetricConfig::default(), 10).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.omax");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    let hp = Hyperparams::new(5, 0.3).unwrap();
    let probes = b
        .validation
        .samples
        .iter()
        .chain(&b.openset.samples)
        .chain(&b.fooling.samples);
    for s in probes.step_by(4).take(100) {
        assert_eq!(
            predict(s, &model, &hp).unwrap(),
            predict(s, &back, &hp).unwrap()
        );
    }
}

#[test]
fn zero_noise_gives_degenerate_tails() {
    let cfg = SynthConfig {
        noise_scale: 0.0,
        ..small_config(24)
    };
    let b = gen_benchmark(&cfg).unwrap();
    let first = &b.train.samples[0];
    assert!(b
        .train
        .samples
        .iter()
        .filter(|s| s.label == first.label)
        .all(|s| s.values == first.values));
    let zeros = vec![0.0; 30];
    assert!(matches!(
        fit_high(&zeros, 20),
        Err(Error::DegenerateTail(20))
    ));
    match calibrate(&b.train, MetricConfig::default(), 20) {
        Err(Error::Calibration(_)) => {}
        other => panic!("expected every class skipped, got {other:?}"),
    }
}

#[test]
fn synth_is_deterministic_per_seed() {
    let a = gen_benchmark(&small_config(25)).unwrap();
    let b = gen_benchmark(&small_config(25)).unwrap();
    let c = gen_benchmark(&small_config(26)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.train, c.train);
}

#[test]
fn fooling_vectors_lie_beyond_training_percentile() {
    let b = gen_benchmark(&small_config(27)).unwrap();
    let metric = MetricConfig::default();
    let subset = correct_subset(&b.train);
    for s in &b.fooling.samples {
        let target = argmax(&s.channel_mean());
        let members = &subset.per_class[target];
        let mav = compute_mav(members).unwrap();
        let mut d: Vec<f64> = members
            .iter()
            .map(|m| metric.distance(&m.channel_f64(0), &mav[0]).unwrap())
            .collect();
        d.sort_by(f64::total_cmp);
        let p95 = d[((d.len() - 1) as f64 * 0.95).floor() as usize];
        assert!(metric.distance(&s.channel_f64(0), &mav[0]).unwrap() > p95);
    }
}

#[test]
fn open_set_classes_are_disjoint_from_known() {
    let b = gen_benchmark(&small_config(28)).unwrap();
    assert!(b
        .openset
        .samples
        .iter()
        .all(|s| s.label == openmax::OPEN_SET_LABEL));
    assert!(b
        .fooling
        .samples
        .iter()
        .all(|s| s.label == openmax::FOOLING_LABEL));
    assert!(b
        .train
        .samples
        .iter()
        .chain(&b.validation.samples)
        .all(|s| s.is_known()));
    for s in &b.openset.samples {
        assert!(b.train.samples.iter().all(|t| t.values != s.values));
    }
}

#[test]
fn grid_search_single_point() {
    let b = gen_benchmark(&small_config(29)).unwrap();
    let grid = Grid {
        etas: vec![10],
        alphas: vec![3],
        epsilons: vec![0.2],
    };
    let r = grid_search(
        &b.train,
        &[&b.validation, &b.openset],
        &grid,
        MetricConfig::default(),
        Weighting::Cdf,
    )
    .unwrap();
    assert_eq!((r.eta, r.hp.alpha, r.hp.epsilon), (10, 3, 0.2));
}

#[test]
fn grid_search_finds_dominant_configuration() {
    // alpha = 1 leaves every activation untouched, so nothing is ever
    // rejected as unknown, and epsilon = 1 rejects every sample.
    let b = gen_benchmark(&small_config(30)).unwrap();
    let grid = Grid {
        etas: vec![10],
        alphas: vec![1, 5],
        epsilons: vec![0.0, 1.0],
    };
    let r = grid_search(
        &b.train,
        &[&b.validation, &b.openset],
        &grid,
        MetricConfig::default(),
        Weighting::Cdf,
    )
    .unwrap();
    assert_eq!((r.eta, r.hp.alpha, r.hp.epsilon), (10, 5, 0.0));
}

#[test]
fn grid_search_ignores_enumeration_order() {
    let b = gen_benchmark(&small_config(31)).unwrap();
    let calib = [&b.validation, &b.openset];
    let forward = Grid {
        etas: vec![5, 10, 20],
        alphas: vec![1, 2, 5],
        epsilons: vec![0.0, 0.3, 0.6, 0.9],
    };
    let reverse = Grid {
        etas: forward.etas.iter().rev().copied().collect(),
        alphas: vec![5, 1, 2],
        epsilons: vec![0.6, 0.0, 0.9, 0.3],
    };
    let a = grid_search(
        &b.train,
        &calib,
        &forward,
        MetricConfig::default(),
        Weighting::Cdf,
    )
    .unwrap();
    let r = grid_search(
        &b.train,
        &calib,
        &reverse,
        MetricConfig::default(),
        Weighting::Cdf,
    )
    .unwrap();
    assert_eq!((a.eta, a.hp, a.fmeasure), (r.eta, r.hp, r.fmeasure));
    assert_eq!(a.model, r.model);
}

#[test]
fn revision_can_change_the_ranking() {
    // Class 0 scores highest but sits far from its mean; class 1 is close to its own.
    let av = [3.0, 2.8, 0.5];
    let w = WeibullModel::new(0.0, 2.0, 1.0).unwrap();
    let mavs = [[-3.0, 1.0, 4.0], [3.0, 2.8, 0.5], [0.0, 0.0, 1.0]];
    let class_models = mavs
        .iter()
        .enumerate()
        .map(|(j, m)| ClassModel {
            class_id: j,
            mav: vec![m.to_vec()],
            weibull: vec![w],
            n_support: 10,
        })
        .collect();
    let metric = MetricConfig::new(Metric::Euclidean, 0.0).unwrap();
    let model = OpenMaxModel::from_parts(class_models, Vec::new(), metric, 10, 3, 1).unwrap();
    let probs = openmax_scores(&av, &model, 0, &Hyperparams::new(3, 0.0).unwrap())
        .unwrap()
        .probs;
    assert_eq!(rank_order(&softmax(&av))[0], 0);
    assert_eq!(argmax(&probs[1..]), 1);
}

#[test]
fn train_partition_required_for_calibration() {
    let mut rng = rng(32);
    let d = random_dataset(&mut rng, Partition::Validation, 50);
    let d = Dataset {
        partition: Partition::Validation,
        ..d
    };
    assert!(calibrate(&d, MetricConfig::default(), 2).is_err());
}
