use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use openmax::avio::{load_dataset, load_model, save_dataset, save_model};
use openmax::eval::{
    detection_csv, detection_rows, grid_evaluate, score_datasets, sweep_csv, sweep_scores, Grid,
    GRID_CSV_HEADER,
};
use openmax::openmax::{calibrate, decide_open_set, openmax_multichannel};
use openmax::synth::gen_benchmark;
use openmax::{
    DataFormat, Dataset, Error, Hyperparams, Metric, MetricConfig, OpenMaxModel, Result, Scorer,
    SynthConfig, Weighting,
};

use crate::{
    CalibrateArgs, Command, EvaluateArgs, FormatArg, PredictArgs, ScoreArgs, ScoringOpts,
    SweepArgs, SynthArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Score(a) => cmd_score(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn data_format(flag: Option<FormatArg>, path: &Path) -> DataFormat {
    match flag {
        Some(FormatArg::Binary) => DataFormat::Binary,
        Some(FormatArg::Csv) => DataFormat::Csv,
        None => DataFormat::from_path(path),
    }
}

fn load(path: &Path, flag: Option<FormatArg>) -> Result<Dataset> {
    load_dataset(path, data_format(flag, path)).map_err(|e| annotate(e, path))
}

fn annotate(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Dimension(m) => Error::Dimension(format!("{}: {m}", path.display())),
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        Error::Io(io) => Error::Io(io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

/// Parses `start:stop:step` or a comma-separated list.
pub fn parse_real_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("bad grid '{text}'"));
    if let Some((start, rest)) = text.split_once(':') {
        let (stop, step) = rest.split_once(':').ok_or_else(bad)?;
        let start: f64 = start.trim().parse().map_err(|_| bad())?;
        let stop: f64 = stop.trim().parse().map_err(|_| bad())?;
        let step: f64 = step.trim().parse().map_err(|_| bad())?;
        if !(step > 0.0) || !(stop >= start) {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| start + step * i as f64).collect())
    } else {
        text.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    }
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad integer list '{text}'")))
        })
        .collect()
}

fn hyperparams(opts: &ScoringOpts, epsilon: f64) -> Result<Hyperparams> {
    Ok(Hyperparams::new(opts.alpha, epsilon)?.with_weighting(Weighting::from(opts.weighting)))
}

fn check_alpha(hp: &Hyperparams, model: &OpenMaxModel) -> Result<()> {
    if hp.alpha > model.n_classes {
        return Err(Error::Config(format!(
            "alpha {} exceeds the model's {} classes",
            hp.alpha, model.n_classes
        )));
    }
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    let metric = MetricConfig::new(a.metric.metric.into(), a.metric.eucos_weight)?;
    if a.tail_size < 2 {
        return Err(Error::Config(format!(
            "tail size must be at least 2, got {}",
            a.tail_size
        )));
    }
    let train = load(&a.train, a.format)?;
    let model = calibrate(&train, metric, a.tail_size)?;
    save_model(&model, &a.model)?;
    print!("{}", calibration_summary(&model));
    Ok(())
}

pub fn calibration_summary(model: &OpenMaxModel) -> String {
    let mut s = String::new();
    writeln!(s, "classes fitted   {}", model.class_models.len()).unwrap();
    writeln!(s, "classes skipped  {}", model.skipped.len()).unwrap();
    writeln!(s, "tail size        {}", model.eta).unwrap();
    writeln!(
        s,
        "metric           {} (euclidean weight {})",
        model.metric.metric, model.metric.eucos_weight
    )
    .unwrap();
    writeln!(s).unwrap();
    writeln!(
        s,
        "{:>7}  {:>10}  {:>10}  {:>10}  {:>10}",
        "channel", "kappa_min", "kappa_max", "lambda_min", "lambda_max"
    )
    .unwrap();
    for c in 0..model.n_channels {
        let (mut kmin, mut kmax, mut lmin, mut lmax) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for cm in &model.class_models {
            let w = cm.weibull[c];
            kmin = kmin.min(w.kappa);
            kmax = kmax.max(w.kappa);
            lmin = lmin.min(w.lambda);
            lmax = lmax.max(w.lambda);
        }
        writeln!(
            s,
            "{c:>7}  {kmin:>10.4}  {kmax:>10.4}  {lmin:>10.4}  {lmax:>10.4}"
        )
        .unwrap();
    }
    for skip in &model.skipped {
        writeln!(s, "skipped class {}: {}", skip.class_id, skip.reason).unwrap();
    }
    s
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let hp = hyperparams(&a.scoring, 0.0)?;
    let model = load_model(&a.model).map_err(|e| annotate(e, &a.model))?;
    check_alpha(&hp, &model)?;
    let data = load(&a.data, a.format)?;
    let mut out = String::from("index,label,unknown");
    for j in 0..model.n_classes {
        write!(out, ",p{j}").unwrap();
    }
    out.push('\n');
    for (i, s) in data.samples.iter().enumerate() {
        let scores = openmax_multichannel(s, &model, &hp)?;
        write!(out, "{i},{}", s.label).unwrap();
        for p in &scores.probs {
            write!(out, ",{p}").unwrap();
        }
        out.push('\n');
    }
    emit(&a.out, &out)
}

/// One `index,verdict,score` line per sample; `score` is the winning probability.
pub fn predict_lines(data: &Dataset, model: &OpenMaxModel, hp: &Hyperparams) -> Result<String> {
    let mut out = String::from("index,verdict,score\n");
    for (i, s) in data.samples.iter().enumerate() {
        let probs = openmax_multichannel(s, model, hp)?.probs;
        let verdict = decide_open_set(&probs, hp.epsilon);
        let peak = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        writeln!(out, "{i},{verdict},{peak}").unwrap();
    }
    Ok(out)
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let hp = hyperparams(&a.scoring, a.epsilon)?;
    let model = load_model(&a.model).map_err(|e| annotate(e, &a.model))?;
    check_alpha(&hp, &model)?;
    let data = load(&a.data, a.format)?;
    emit(&a.out, &predict_lines(&data, &model, &hp)?)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let hp = hyperparams(&a.scoring, 0.0)?;
    let thresholds = openmax::eval::normalize_thresholds(&parse_real_grid(&a.thresholds)?)?;
    let model = load_model(&a.model).map_err(|e| annotate(e, &a.model))?;
    check_alpha(&hp, &model)?;
    let validation = load(&a.validation, a.format)?;
    let openset = a
        .openset
        .as_deref()
        .map(|p| load(p, a.format))
        .transpose()?;
    let fooling = a
        .fooling
        .as_deref()
        .map(|p| load(p, a.format))
        .transpose()?;

    let mut parts = vec![&validation];
    parts.extend(openset.iter());
    parts.extend(fooling.iter());
    if parts.iter().all(|d| d.is_empty()) {
        return Err(Error::EmptyDataset(
            "all evaluation partitions are empty".into(),
        ));
    }

    let scorers = [
        Scorer::OpenMax { model: &model, hp },
        Scorer::SoftmaxThreshold,
    ];
    let mut curves = Vec::new();
    let mut detection = Vec::new();
    for scorer in &scorers {
        curves.push((
            scorer.name(),
            sweep_scores(&score_datasets(scorer, &parts)?, &thresholds)?,
        ));
        for d in openset.iter().chain(fooling.iter()) {
            let scores = score_datasets(scorer, &[d])?;
            detection.extend(detection_rows(
                scorer.name(),
                d.partition.name(),
                &scores,
                &thresholds,
            ));
        }
    }
    let named: Vec<_> = curves.iter().map(|(n, c)| (*n, c)).collect();
    emit(&a.out, &sweep_csv(&named))?;
    if let Some(path) = &a.detection_out {
        fs::write(path, detection_csv(&detection))?;
    }
    for (name, curve) in &curves {
        let (t, f) = curve.peak();
        eprintln!("{name}: peak F-measure {f:.4} at threshold {t}");
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let etas = parse_usize_list(&a.tail_sizes)?;
    let alphas = parse_usize_list(&a.alphas)?;
    let epsilons = openmax::eval::normalize_thresholds(&parse_real_grid(&a.epsilons)?)?;
    let metrics = a
        .metrics
        .split(',')
        .map(|m| {
            m.trim()
                .parse::<Metric>()
                .and_then(|m| MetricConfig::new(m, a.eucos_weight))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(eta) = etas.iter().find(|&&e| e < 2) {
        return Err(Error::Config(format!(
            "tail size must be at least 2, got {eta}"
        )));
    }
    if alphas.contains(&0) {
        return Err(Error::Config("alpha must be at least 1".into()));
    }
    let grid = Grid {
        etas,
        alphas,
        epsilons,
    };
    let weighting = Weighting::from(a.weighting);

    let train = load(&a.train, a.format)?;
    let validation = load(&a.validation, a.format)?;
    let openset = load(&a.openset, a.format)?;
    if let Some(alpha) = grid.alphas.iter().find(|&&al| al > train.n_classes) {
        return Err(Error::Config(format!(
            "alpha {alpha} exceeds {} classes",
            train.n_classes
        )));
    }

    let mut table = String::from(GRID_CSV_HEADER);
    table.push('\n');
    let mut best: Option<(f64, String, OpenMaxModel)> = None;
    for metric in &metrics {
        grid_evaluate(
            &train,
            &[&validation, &openset],
            &grid,
            *metric,
            weighting,
            |p, model| {
                let c = p.counts;
                writeln!(
                    table,
                    "{},{},{},{},{},{},{},{:.6}",
                    metric.metric, p.eta, p.alpha, p.epsilon, c.tp, c.fp, c.fn_, p.fmeasure
                )
                .unwrap();
                if best.as_ref().is_none_or(|(f, _, _)| p.fmeasure > *f) {
                    let label = format!(
                        "metric={} eta={} alpha={} epsilon={}",
                        metric.metric, p.eta, p.alpha, p.epsilon
                    );
                    best = Some((p.fmeasure, label, model.clone()));
                }
            },
        )?;
    }
    emit(&a.out, &table)?;
    let (f, label, model) = best.expect("grid is non-empty");
    eprintln!("best: {label} F-measure {f:.4}");
    if let Some(path) = &a.best_model {
        save_model(&model, path)?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        n_classes: a.classes,
        n_channels: a.channels,
        train_per_class: a.train_per_class,
        validation_per_class: a.validation_per_class,
        n_openset: a.openset,
        n_fooling: a.fooling,
        group_size: a.group_size,
        noise_scale: a.noise.unwrap_or(defaults.noise_scale),
        seed: a.seed,
        ..defaults
    };
    cfg.validate()?;
    let bench = gen_benchmark(&cfg)?;
    fs::create_dir_all(&a.out_dir)?;
    let (format, ext) = match a.format {
        FormatArg::Binary => (DataFormat::Binary, "avec"),
        FormatArg::Csv => (DataFormat::Csv, "csv"),
    };
    for d in [
        &bench.train,
        &bench.validation,
        &bench.openset,
        &bench.fooling,
    ] {
        let path = a.out_dir.join(format!("{}.{ext}", d.partition));
        save_dataset(d, &path, format)?;
        println!("{}\t{} samples", path.display(), d.len());
    }
    Ok(())
}
