use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use ssce_core::baselines::global_scm;
use ssce_core::data::dataset::{read_dataset, write_dataset, DatasetHeader};
use ssce_core::data::synthetic::KaConfig;
use ssce_core::data::WindowPair;
use ssce_core::downstream::{self, write_roc_csv, RocCurve};
use ssce_core::loss::nll_covariance_param;
use ssce_core::model::{
    ka_formula, load_checkpoint, save_checkpoint, AnyModel, Checkpoint, KaModel, KaModelConfig, Model,
};
use ssce_core::trainer::{
    evaluate, evaluate_tuned, heldout_nll, train as fit, Baseline, EvalReport, EvalTiming, ModelEstimator,
    ShrinkageFamily, TrainData, Trainer,
};
use ssce_core::{ComplexMatrix, Error, HermitianPd, Result};

use crate::config::{conventions, BaselineKind, DataSpec, KaVerifySection, RunConfig, TrainSource};
use crate::plot::roc_svg;
use crate::{EvalArgs, GenArgs, KaVerifyArgs, RocArgs, TrainArgs};

const FORMAT_VERSION: u32 = 1;

fn with_path(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Io(m) => Error::Io(format!("{}: {m}", path.display())),
        Error::Parse { location, message } => Error::Parse { location: format!("{} {location}", path.display()), message },
        other => other,
    }
}

fn read(path: &Path) -> Result<(DatasetHeader, Vec<WindowPair>)> {
    read_dataset(path).map_err(with_path(path))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn to_json(value: &impl Serialize) -> Value {
    serde_json::to_value(value).expect("configs serialize to JSON")
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(seed) = args.common.seed {
        cfg.data.set_seed(seed);
    }
    cfg.data.validate()?;
    let pairs = cfg.data.generate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("the data recipe produced no windows".into()));
    }
    let echo = json!({ "conventions": conventions(), "data": cfg.data });
    let header = write_dataset(&args.out, echo, &pairs).map_err(with_path(&args.out))?;
    let seed = match &cfg.data {
        DataSpec::Synthetic(c) => c.seed.to_string(),
        DataSpec::Ka(c) => c.seed.to_string(),
        DataSpec::Maps(_) => "n/a".into(),
    };
    println!(
        "wrote {} windows (d = {}, |E| = {}, truth: {}, seed {seed}) to {}",
        header.count,
        header.dim,
        header.window,
        header.has_truth,
        args.out.display()
    );
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(p) = args.common.preset() {
        cfg.train.iterations = p.train_iterations();
    }
    if let Some(seed) = args.common.seed {
        cfg.train.seed = seed;
        match &mut cfg.train_data {
            TrainSource::Synthetic(c) => c.seed = seed,
            TrainSource::Ka(c) => c.seed = seed,
            TrainSource::File { .. } => {}
        }
    }
    cfg.train.validate()?;
    cfg.model.validate()?;

    let file = args.data.clone().or(match &cfg.train_data {
        TrainSource::File { path } => Some(path.clone()),
        _ => None,
    });
    let (source_echo, pairs) = match &file {
        Some(path) => {
            let (h, p) = read(path)?;
            (json!({ "kind": "file", "dataset": h.config, "count": h.count }), p)
        }
        None => (to_json(&cfg.train_data), Vec::new()),
    };
    let data = match (&file, &cfg.train_data) {
        (Some(_), _) => TrainData::Pairs(&pairs),
        (None, TrainSource::Synthetic(c)) => {
            c.validate()?;
            TrainData::Synthetic(c.clone())
        }
        (None, TrainSource::Ka(s)) => {
            let c = s.to_config();
            c.validate()?;
            TrainData::Ka(c)
        }
        (None, TrainSource::File { .. }) => unreachable!("file sources are read above"),
    };
    let heldout = match &args.heldout {
        Some(path) => read(path)?.1,
        None => Vec::new(),
    };

    let (mut model, mut trainer, resumed_from) = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path).map_err(with_path(path))?;
            let state = ckpt.optimizer.ok_or_else(|| {
                Error::InvalidConfig(format!("{} holds no optimizer state and cannot be resumed", path.display()))
            })?;
            let trainer = Trainer::resume(cfg.train.clone(), &ckpt.model, state, ckpt.iteration)?;
            (ckpt.model, trainer, Some(ckpt.iteration))
        }
        None => {
            let model = AnyModel::init(&cfg.model, cfg.train.seed)?;
            let trainer = Trainer::new(cfg.train.clone(), &model)?;
            (model, trainer, None)
        }
    };
    let data_dim = data.dim().ok_or_else(|| Error::InvalidConfig("training dataset is empty".into()))?;
    if data_dim != model.dim() {
        return Err(Error::ShapeMismatch(format!(
            "training data has dimension {data_dim} but the model expects {}",
            model.dim()
        )));
    }
    if let Some(d) = heldout.first().map(WindowPair::dim).filter(|&d| d != model.dim()) {
        return Err(Error::ShapeMismatch(format!("held-out data has dimension {d} but the model expects {}", model.dim())));
    }

    create_dir(&args.out)?;
    let echo = json!({
        "conventions": conventions(),
        "model": model.config(),
        "train": cfg.train,
        "train_data": source_echo,
    });
    let period = cfg.train.checkpoint_period;
    let out = args.out.clone();
    let result = trainer.run(&mut model, &data, &heldout, |m, t| {
        let ckpt = Checkpoint {
            model: m.clone(),
            seed: t.config().seed,
            iteration: t.iteration(),
            optimizer: Some(t.optimizer_state().clone()),
            run_config: echo.clone(),
        };
        if period > 0 && t.iteration() % period == 0 {
            let path = out.join(format!("checkpoint_{:08}.bin", t.iteration()));
            save_checkpoint(&path, &ckpt).map_err(with_path(&path))?;
        }
        let path = out.join("checkpoint.bin");
        save_checkpoint(&path, &ckpt).map_err(with_path(&path))
    });

    let status = if result.is_ok() { "completed" } else { "diverged" };
    if let Ok(log) = &result {
        let path = args.out.join("train_log.csv");
        log.write_csv(create(&path)?, true).map_err(with_path(&path))?;
    }
    if result.is_ok() || matches!(result, Err(Error::DivergenceDetected { .. })) {
        let manifest = json!({
            "format": "ssce-train-manifest",
            "version": FORMAT_VERSION,
            "config": echo,
            "status": status,
            "iteration": trainer.iteration(),
            "resumed_from": resumed_from,
        });
        write_json(&args.out.join("manifest.json"), &manifest)?;
    }
    let log = result?;
    let last = log.records.last();
    println!(
        "trained to iteration {} (train loss {}, held-out NLL {}); checkpoint in {}",
        trainer.iteration(),
        last.map_or("n/a".into(), |r| format!("{:.4}", r.train_loss)),
        last.and_then(|r| r.heldout_nll).map_or("n/a".into(), |v| format!("{v:.4}")),
        args.out.display()
    );
    Ok(())
}

fn model_name(model: &AnyModel) -> &'static str {
    match model {
        AnyModel::Ssce(_) => "ssce",
        AnyModel::Ka(_) => "ka_model",
    }
}

fn global_scm_for(args: &EvalArgs, cfg: &RunConfig, header: &DatasetHeader) -> Result<(ComplexMatrix, Value)> {
    if let Some(path) = &args.train_data {
        let (h, pairs) = read(path)?;
        if h.dim != header.dim {
            return Err(Error::ShapeMismatch(format!(
                "training data has dimension {} but the test data has {}",
                h.dim, header.dim
            )));
        }
        return Ok((global_scm(&pairs)?, json!({ "kind": "file", "dataset": h.config, "count": h.count })));
    }
    let spec: Option<DataSpec> = header.config.get("data").and_then(|v| serde_json::from_value(v.clone()).ok());
    let companion = spec.and_then(|s| s.companion(cfg.eval.global_scm_envs)).ok_or_else(|| {
        Error::InvalidConfig("the ka baseline needs --train-data unless the test set came from a synthetic recipe".into())
    })?;
    let pairs = companion.generate()?;
    Ok((global_scm(&pairs)?, json!({ "kind": "generated", "data": companion })))
}

fn timed(name: &str, windows: usize, f: impl FnOnce() -> Result<EvalReport>) -> Result<(EvalReport, EvalTiming)> {
    let start = Instant::now();
    let report = f()?;
    let total_s = start.elapsed().as_secs_f64();
    let timing = EvalTiming {
        estimator: name.into(),
        windows,
        total_s,
        mean_per_window_s: if windows > 0 { total_s / windows as f64 } else { 0.0 },
    };
    Ok((report, timing))
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(seed) = args.common.seed {
        cfg.eval.protocol.seed = seed;
    }
    cfg.eval.validate()?;
    let (header, pairs) = read(&args.data)?;
    let baselines = cfg.eval.baselines(header.has_truth)?;

    let mut models: Vec<(String, Checkpoint)> = Vec::new();
    for path in &args.checkpoint {
        let ckpt = load_checkpoint(path).map_err(with_path(path))?;
        if ckpt.model.dim() != header.dim {
            return Err(Error::ShapeMismatch(format!(
                "{} expects dimension {} but the test data has {}",
                path.display(),
                ckpt.model.dim(),
                header.dim
            )));
        }
        let base = model_name(&ckpt.model);
        let taken = models.iter().filter(|(n, _)| n == base || n.starts_with(&format!("{base}_"))).count();
        let name = if taken == 0 { base.to_string() } else { format!("{base}_{}", taken + 1) };
        models.push((name, ckpt));
    }
    let global = if baselines.contains(&BaselineKind::Ka) { Some(global_scm_for(args, &cfg, &header)?) } else { None };
    create_dir(&args.out)?;

    let protocol = &cfg.eval.protocol;
    let mut results: Vec<(EvalReport, EvalTiming)> = Vec::new();
    for (name, ckpt) in &models {
        results.push(evaluate(&ModelEstimator { name: name.clone(), model: &ckpt.model }, &pairs, protocol)?);
    }
    for kind in &baselines {
        let n = pairs.len();
        results.push(match kind {
            BaselineKind::Oracle => evaluate(&Baseline::Oracle, &pairs, protocol)?,
            BaselineKind::Scm => evaluate(&Baseline::Scm { ridge: cfg.eval.scm_ridge }, &pairs, protocol)?,
            BaselineKind::Toeplitz => evaluate(&Baseline::Toeplitz(cfg.eval.toeplitz), &pairs, protocol)?,
            BaselineKind::Rscm => timed("rscm", n, || {
                Ok(evaluate_tuned(&ShrinkageFamily::Rscm, &cfg.eval.grid, &pairs, protocol)?.0)
            })?,
            BaselineKind::Ka => {
                let g = global.as_ref().expect("computed when ka is requested").0.clone();
                timed("ka", n, || Ok(evaluate_tuned(&ShrinkageFamily::Ka { global_scm: g }, &cfg.eval.grid, &pairs, protocol)?.0))?
            }
        });
    }
    let (reports, timings): (Vec<EvalReport>, Vec<EvalTiming>) = results.into_iter().unzip();

    let metrics = json!({
        "format": "ssce-metrics",
        "version": FORMAT_VERSION,
        "conventions": conventions(),
        "config": {
            "eval": cfg.eval,
            "dataset": { "config": header.config, "count": header.count, "dim": header.dim, "window": header.window },
            "models": models.iter().map(|(name, c)| json!({
                "name": name,
                "iteration": c.iteration,
                "seed": c.seed,
                "run_config": c.run_config,
            })).collect::<Vec<_>>(),
            "global_scm": global.as_ref().map(|g| g.1.clone()),
        },
        "reports": reports,
    });
    write_json(&args.out.join("metrics.json"), &metrics)?;
    write_json(&args.out.join("timing.json"), &json!({ "format": "ssce-timing", "version": FORMAT_VERSION, "timings": timings }))?;

    let curves: Vec<(&str, &RocCurve)> =
        reports.iter().filter_map(|r| r.roc.as_ref().map(|c| (r.estimator.as_str(), c))).collect();
    for (name, curve) in &curves {
        let path = args.out.join(format!("roc_{name}.csv"));
        write_roc_csv(create(&path)?, curve).map_err(with_path(&path))?;
    }
    if args.svg && !curves.is_empty() {
        let path = args.out.join("roc.svg");
        fs::write(&path, roc_svg(&curves)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }

    let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!("{:<12} {:>10} {:>10} {:>10} {:>10}", "estimator", "mse", "nll", "err", "pauc01");
    for r in &reports {
        println!("{:<12} {:>10} {:>10} {:>10} {:>10}", r.estimator, cell(r.mse), cell(r.nll), cell(r.err), cell(r.pauc01));
    }
    Ok(())
}

/// One finite score per line; a non-numeric first line is taken as a header.
pub fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) if !v.is_nan() => scores.push(v),
            Err(_) if i == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    location: format!("{} line {}", path.display(), i + 1),
                    message: format!("expected a score, found {line:?}"),
                })
            }
        }
    }
    Ok(scores)
}

pub fn roc(args: &RocArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let max_fpr = args.max_fpr.unwrap_or(cfg.roc.max_fpr);
    let h0 = read_scores(&args.h0)?;
    let h1 = read_scores(&args.h1)?;
    let curve = downstream::roc(&h0, &h1, max_fpr)?;
    create_dir(&args.out)?;
    let path = args.out.join("roc.csv");
    write_roc_csv(create(&path)?, &curve).map_err(with_path(&path))?;
    let summary = json!({
        "format": "ssce-roc",
        "version": FORMAT_VERSION,
        "max_fpr": curve.max_fpr,
        "n_h0": curve.n_h0,
        "n_h1": curve.n_h1,
        "pauc01": curve.pauc01,
        "pauc_raw": curve.pauc_raw,
        "pauc_mcclish": curve.pauc_mcclish,
    });
    write_json(&args.out.join("roc.json"), &summary)?;
    if args.svg {
        let path = args.out.join("roc.svg");
        fs::write(&path, roc_svg(&[("scores", &curve)])).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    println!(
        "pauc01 {:.4} (raw {:.5}, McClish {:.4}) over {} H0 and {} H1 scores",
        curve.pauc01, curve.pauc_raw, curve.pauc_mcclish, curve.n_h0, curve.n_h1
    );
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KaVerifyReport {
    pub alpha: f64,
    pub alpha_target: f64,
    pub alpha_rel_error: f64,
    pub a: ComplexMatrix,
    pub a_target: ComplexMatrix,
    /// `||A - A*||_F / ||A*||_F`.
    pub a_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub heldout_nll: f64,
    pub heldout_nll_closed_form: f64,
}

fn ka_section(args: &KaVerifyArgs) -> Result<KaVerifySection> {
    let mut section = args.common.load()?.ka_verify;
    if let Some(p) = args.common.preset() {
        section.train.iterations = p.ka_iterations();
    }
    if let Some(seed) = args.common.seed {
        section.data.seed = seed;
        section.train.seed = seed;
    }
    section.data.to_config().validate()?;
    section.train.validate()?;
    if !(section.tolerance > 0.0) || section.heldout_envs == 0 {
        return Err(Error::InvalidConfig("ka_verify.tolerance and ka_verify.heldout_envs must be positive".into()));
    }
    Ok(section)
}

pub fn ka_verify(args: &KaVerifyArgs) -> Result<KaVerifyReport> {
    let section = ka_section(args)?;
    let ka = section.data.to_config();
    let model_cfg = KaModelConfig { dim: ka.dim, window: ka.window, ridge: section.ridge };
    let mut model = KaModel::init(model_cfg)?;
    let heldout = KaConfig { n_envs: section.heldout_envs, seed: ka.seed.wrapping_add(1), ..ka.clone() }.generate()?;
    create_dir(&args.out)?;

    let log = fit(&mut model, &TrainData::Ka(ka.clone()), &section.train, &heldout)?;
    let (a_target, alpha_target) = ka.closed_form();
    let mut closed_nll = 0.0;
    for pair in &heldout {
        let c = HermitianPd::new(&ka_formula(&a_target, alpha_target, &pair.features))?;
        closed_nll += nll_covariance_param(&pair.label, &c)?.value;
    }
    let a = model.a_matrix();
    let alpha = model.alpha();
    let alpha_rel_error = (alpha - alpha_target).abs() / alpha_target;
    let a_rel_error = a.sub(&a_target).frobenius_norm() / a_target.frobenius_norm();
    let report = KaVerifyReport {
        alpha,
        alpha_target,
        alpha_rel_error,
        a,
        a_target,
        a_rel_error,
        tolerance: section.tolerance,
        pass: alpha_rel_error <= section.tolerance && a_rel_error <= section.tolerance,
        heldout_nll: heldout_nll(&model, &heldout)?,
        heldout_nll_closed_form: closed_nll / heldout.len() as f64,
    };

    let path = args.out.join("train_log.csv");
    log.write_csv(create(&path)?, true).map_err(with_path(&path))?;
    write_json(
        &args.out.join("ka_verify.json"),
        &json!({
            "format": "ssce-ka-verify",
            "version": FORMAT_VERSION,
            "conventions": conventions(),
            "config": section,
            "report": report,
        }),
    )?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "alpha {:.5} (closed form {:.5}, rel. error {:.3}); A rel. Frobenius error {:.3}; {}",
        report.alpha,
        report.alpha_target,
        report.alpha_rel_error,
        report.a_rel_error,
        if report.pass { "within tolerance" } else { "OUTSIDE tolerance" }
    );
    let _ = writeln!(
        out,
        "held-out NLL {:.4} (closed form {:.4})",
        report.heldout_nll, report.heldout_nll_closed_form
    );
    Ok(report)
}
