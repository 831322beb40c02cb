//! Acceptance run. Prints one PASS/FAIL line per criterion and a count of
//! failures. With `ACCEPTANCE_STRICT=1` any failure also fails the process.
//!
//! Criteria 4-6 train models and take several minutes in total; criterion 6
//! alone trains the full attention model for 20000 steps.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use clap::Parser;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use ssce_cli::{commands, Cli};
use ssce_core::autodiff::{Gradient, NodeId, Tape};
use ssce_core::baselines::{toeplitz_ap, toeplitz_residual, ToeplitzConfig};
use ssce_core::data::dataset::{read_dataset_from, write_dataset_to};
use ssce_core::data::outer_sum;
use ssce_core::data::synthetic::{KaConfig, SyntheticConfig};
use ssce_core::data::windows::{extract, DataMap, WindowSpec};
use ssce_core::data::WindowPair;
use ssce_core::downstream::{anmf, roc, wls_amplitude};
use ssce_core::linalg::{eigenvalues, inverse_hpd};
use ssce_core::loss::{nll_covariance_param, nll_inverse_param};
use ssce_core::model::checkpoint::{parse_checkpoint, write_checkpoint_to};
use ssce_core::model::{AnyModel, Checkpoint, KaModel, KaModelConfig, Model, SsceConfig, SsceModel};
use ssce_core::trainer::{heldout_nll, loss_and_gradient, train, Adam, TrainConfig, TrainData};
use ssce_core::{ComplexMatrix, HermitianPd, C64};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn rand_c(rng: &mut ChaCha8Rng, r: f64) -> C64 {
    C64::new(rng.random_range(-r..r), rng.random_range(-r..r))
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, r: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| rand_c(rng, r))
}

fn random_hpd(rng: &mut ChaCha8Rng, d: usize) -> ComplexMatrix {
    let x = random_matrix(rng, d + 2, d, 1.0);
    x.adjoint_matmul(&x).add_diagonal(0.1)
}

fn to_na(m: &ComplexMatrix) -> DMatrix<C64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

fn run_cli(args: &[&str]) {
    let cli = Cli::parse_from(std::iter::once("ssce").chain(args.iter().copied()));
    ssce_cli::run(cli).unwrap_or_else(|e| panic!("ssce {args:?}: {e}"));
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn report<'a>(metrics: &'a Value, name: &str) -> &'a Value {
    metrics["reports"].as_array().unwrap().iter().find(|r| r["estimator"] == name).unwrap()
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("missing {key}"))
}

/// Criterion 1.
fn loss_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(2..=8);
        let s = random_hpd(&mut rng, d);
        let z: Vec<C64> = (0..d).map(|_| rand_c(&mut rng, 2.0)).collect();
        // Dense oracle in covariance form: C = S^{-1}, z^H C^{-1} z + log|C|.
        let c = to_na(&s).try_inverse().unwrap();
        let c_inv = c.clone().try_inverse().unwrap();
        let zv = DVector::from_column_slice(&z);
        let quad = (zv.adjoint() * &c_inv * &zv)[(0, 0)].re;
        let logdet_c: f64 = c.symmetric_eigen().eigenvalues.iter().map(|v| v.ln()).sum();
        let oracle = quad + logdet_c;
        let ours = nll_inverse_param(&z, &HermitianPd::new(&s).unwrap()).unwrap().value;
        worst = worst.max((ours - oracle).abs() / oracle.abs().max(1e-12));
    }
    Outcome::new(worst <= 1e-10, format!("worst relative error {worst:.2e} over 100 cases (tol 1e-10)"))
}

/// Criterion 2.
fn gradient_check() -> Outcome {
    let cfg = SsceConfig { dim: 4, width: 8, layers: 2, towers: 2, ..SsceConfig::default() };
    let mut model = SsceModel::init(cfg, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let features = random_matrix(&mut rng, 6, 4, 1.0);
    let label = (0..4).map(|_| rand_c(&mut rng, 1.0)).collect();
    let pair = WindowPair::new(label, features, None).unwrap();
    let (_, grad) = loss_and_gradient(&model, &pair).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = rng.random_range(0..grad.len());
        let k = rng.random_range(0..grad.get(p).as_slice().len());
        let imag = rng.random_bool(0.5);
        let delta = if imag { C64::new(0.0, h) } else { C64::new(h, 0.0) };
        let original = model.params()[p].as_slice()[k];
        model.params_mut()[p].as_mut_slice()[k] = original + delta;
        let plus = loss_and_gradient(&model, &pair).unwrap().0;
        model.params_mut()[p].as_mut_slice()[k] = original - delta;
        let minus = loss_and_gradient(&model, &pair).unwrap().0;
        model.params_mut()[p].as_mut_slice()[k] = original;
        let fd = (plus - minus) / (2.0 * h);
        let g = grad.get(p).as_slice()[k];
        let analytic = if imag { g.im } else { g.re };
        worst = worst.max((fd - analytic).abs() / (1.0 + analytic.abs()));
    }
    Outcome::new(worst <= 1e-4, format!("worst |fd - g| / (1 + |g|) {worst:.2e} over 50 coordinates, h 1e-5 (tol 1e-4)"))
}

fn toy_loss(bs: &[ComplexMatrix], atoms: &[(usize, Vec<C64>, f64)]) -> Option<(f64, Gradient)> {
    let mut tape = Tape::new();
    let s: Vec<NodeId> = bs
        .iter()
        .map(|b| {
            let p = tape.param(b);
            tape.gram(p)
        })
        .collect();
    let mut total: Option<NodeId> = None;
    for (x, z, prob) in atoms {
        let z = tape.constant(ComplexMatrix::column(z));
        let q = tape.quad_form(s[*x], z);
        let ld = tape.logdet(s[*x]).ok()?;
        let neg = tape.scale(ld, -1.0);
        let l = tape.add(q, neg);
        let l = tape.scale(l, *prob);
        total = Some(total.map_or(l, |t| tape.add(t, l)));
    }
    let total = total?;
    Some((tape.scalar(total).ok()?, tape.backward(total).ok()?))
}

/// Criterion 3.
fn toy_oracle() -> Outcome {
    let (d, per_x) = (3, 4);
    let px = [0.5, 0.3, 0.2];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut atoms = Vec::new();
    let mut truth = Vec::new();
    for (x, &p) in px.iter().enumerate() {
        let weights: Vec<f64> = (0..per_x).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = weights.iter().sum();
        let mut c = ComplexMatrix::zeros(d, d);
        for w in &weights {
            let z: Vec<C64> = (0..d).map(|_| rand_c(&mut rng, 1.0)).collect();
            c.add_scaled(w / total, &outer_sum(&ComplexMatrix::row_vector(&z)));
            let neg = z.iter().map(|v| -v).collect();
            atoms.push((x, z, p * w / total / 2.0));
            atoms.push((x, neg, p * w / total / 2.0));
        }
        truth.push(c);
    }
    let mut bs: Vec<ComplexMatrix> = px.iter().map(|_| ComplexMatrix::identity(d)).collect();
    let (mut value, mut grad) = toy_loss(&bs, &atoms).unwrap();
    let mut step = 0.1;
    for _ in 0..20_000 {
        let norm_sq = grad.global_norm().powi(2);
        if norm_sq.sqrt() < 1e-12 || step < 1e-20 {
            break;
        }
        loop {
            let trial: Vec<ComplexMatrix> = bs
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let mut t = b.clone();
                    t.add_scaled(-step, grad.get(i));
                    t
                })
                .collect();
            match toy_loss(&trial, &atoms) {
                Some((v, g)) if v <= value - 1e-4 * step * norm_sq => {
                    (bs, value, grad) = (trial, v, g);
                    step *= 2.0;
                    break;
                }
                _ => step /= 2.0,
            }
            if step < 1e-20 {
                break;
            }
        }
    }
    let worst = bs
        .iter()
        .zip(&truth)
        .map(|(b, c)| inverse_hpd(&b.adjoint_matmul(b)).unwrap().sub(c).frobenius_norm() / c.frobenius_norm())
        .fold(0.0, f64::max);
    Outcome::new(worst <= 1e-6, format!("worst relative Frobenius error {worst:.2e} (tol 1e-6)"))
}

/// Criterion 4, through the `ka-verify` command at the desk preset.
fn ka_closed_form(dir: &Path) -> Outcome {
    let out = dir.join("ka_verify");
    let cli = Cli::parse_from(["ssce", "ka-verify", "--preset", "desk", "--out", out.to_str().unwrap()]);
    let ssce_cli::Command::KaVerify(args) = cli.command else { unreachable!() };
    let r = commands::ka_verify(&args).unwrap();
    Outcome::new(
        r.alpha_rel_error <= 0.1 && r.a_rel_error <= 0.1,
        format!(
            "alpha {:.5} vs {:.5} (rel {:.3}), A rel Frobenius {:.3} (tol 0.1 each), 50000 steps",
            r.alpha, r.alpha_target, r.alpha_rel_error, r.a_rel_error
        ),
    )
}

/// Criterion 5.
fn ka_consistency() -> Outcome {
    let mut nlls = Vec::new();
    let mut oracle = 0.0;
    for window in [20, 50, 200] {
        let data = KaConfig { window, ..KaConfig::example(31) };
        let heldout = KaConfig { window, n_envs: 2000, ..KaConfig::example(32) }.generate().unwrap();
        let mut model = KaModel::init(KaModelConfig::new(data.dim, window)).unwrap();
        let cfg = TrainConfig { iterations: 50_000, eval_period: 50_000, ..TrainConfig::desk() };
        train(&mut model, &TrainData::Ka(data), &cfg, &[]).unwrap();
        nlls.push(heldout_nll(&model, &heldout).unwrap());
        // Labels and covariances do not depend on the window size.
        oracle = heldout
            .iter()
            .map(|p| nll_covariance_param(&p.label, &HermitianPd::new(p.truth.as_ref().unwrap()).unwrap()).unwrap().value)
            .sum::<f64>()
            / heldout.len() as f64;
    }
    let monotone = nlls.windows(2).all(|w| w[1] <= w[0]);
    let gap = (nlls[2] - oracle).abs() / oracle.abs();
    Outcome::new(
        monotone && gap <= 0.05,
        format!(
            "held-out NLL {:.4} / {:.4} / {:.4} at |E| = 20 / 50 / 200, oracle {:.4}, gap at 200 {:.2}% (tol 5%)",
            nlls[0],
            nlls[1],
            nlls[2],
            oracle,
            100.0 * gap
        ),
    )
}

const TABLE_TEST: &str = r#"
[data]
kind = "synthetic"
n_envs = 4000
seed = 1001

[eval]
baselines = ["oracle", "rscm", "ka", "toeplitz"]

[eval.protocol]
injections = 2
"#;

const TABLE_TRAIN: &str = r#"
[data]
kind = "synthetic"
n_envs = 2000
seed = 7

[model]
kind = "ssce"

[train]
seed = 0
checkpoint_period = 0
eval_period = 1000

[train_data]
kind = "synthetic"
seed = 7
"#;

/// Criterion 6, through `gen`, `train --preset desk` and `eval`. Returns
/// the metrics document for criterion 7.
fn table_reproduction(dir: &Path) -> (Outcome, Value) {
    let (test_cfg, train_cfg) = (dir.join("test.toml"), dir.join("train.toml"));
    fs::write(&test_cfg, TABLE_TEST).unwrap();
    fs::write(&train_cfg, TABLE_TRAIN).unwrap();
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    run_cli(&["gen", "--config", &p("test.toml"), "--out", &p("test.bin")]);
    run_cli(&["gen", "--config", &p("train.toml"), "--out", &p("train.bin")]);
    run_cli(&["train", "--config", &p("train.toml"), "--preset", "desk", "--out", &p("model")]);
    run_cli(&[
        "eval",
        "--config",
        &p("test.toml"),
        "--data",
        &p("test.bin"),
        "--train-data",
        &p("train.bin"),
        "--checkpoint",
        &p("model/checkpoint.bin"),
        "--out",
        &p("eval"),
    ]);
    let metrics = read_json(&dir.join("eval/metrics.json"));
    let (s, o, r, k) = (report(&metrics, "ssce"), report(&metrics, "oracle"), report(&metrics, "rscm"), report(&metrics, "ka"));
    let row = |v: &Value| format!("{:.4}/{:.4}/{:.4}/{:.4}", num(v, "mse"), num(v, "nll"), num(v, "err"), num(v, "pauc01"));
    let checks = [
        ("NLL<RSCM", num(s, "nll") < num(r, "nll")),
        ("NLL<KA", num(s, "nll") < num(k, "nll")),
        ("MSE<RSCM", num(s, "mse") < num(r, "mse")),
        ("pAUC>=RSCM", num(s, "pauc01") >= num(r, "pauc01")),
        ("pAUC gap<=0.03", num(o, "pauc01") - num(s, "pauc01") <= 0.03),
        ("ERR<=1.2x", num(s, "err") <= 1.2 * num(o, "err")),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let detail = format!(
        "mse/nll/err/pauc01 ssce {} oracle {} rscm {} ka {}{}",
        row(s),
        row(o),
        row(r),
        row(k),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
    );
    (Outcome::new(failed.is_empty(), detail), metrics)
}

/// Criterion 7 on every synthetic metrics document produced by this run.
fn oracle_rows(runs: &[&Value]) -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for metrics in runs {
        let oracle = report(metrics, "oracle");
        let best = metrics["reports"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|r| r["estimator"] != "oracle")
            .map(|r| num(r, "pauc01"))
            .fold(f64::NEG_INFINITY, f64::max);
        let ok = num(oracle, "mse") == 0.0 && num(oracle, "pauc01") >= best;
        pass &= ok;
        notes.push(format!("mse {} pauc01 {:.4} vs best other {:.4}", num(oracle, "mse"), num(oracle, "pauc01"), best));
    }
    Outcome::new(pass && !runs.is_empty(), notes.join("; "))
}

/// Criterion 8.
fn property_suite() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = SsceModel::init(SsceConfig::default(), 3).unwrap();

    let mut perm_ok = true;
    for _ in 0..20 {
        let w = random_matrix(&mut rng, 20, 6, 1.5);
        let mut order: Vec<usize> = (0..20).collect();
        for i in (1..20).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let a = model.estimate(&w).unwrap();
        let b = model.estimate(&w.select_rows(&order)).unwrap();
        perm_ok &= a.sub(&b).frobenius_norm() <= 1e-10 * a.frobenius_norm();
    }
    check("permutation invariance", perm_ok);

    let (mut pd_ok, mut softmax_ok) = (true, true);
    for i in 0..1000 {
        let w = random_matrix(&mut rng, 20, 6, 1.5);
        let s = model.estimate(&w).unwrap();
        let min = eigenvalues(&s).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        pd_ok &= s.hermitian_asymmetry() < 1e-12 && min >= model.config().ridge - 1e-12;
        if i % 20 == 0 {
            for map in model.attention_maps(&w).unwrap().into_iter().flatten() {
                for r in 0..map.rows() {
                    let sum: C64 = map.row(r).iter().sum();
                    softmax_ok &= (sum.re - 1.0).abs() <= 1e-12 && sum.im == 0.0;
                }
            }
        }
    }
    check("output PD on 1000 windows", pd_ok);
    check("softmax row sums", softmax_ok);

    let h0: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..5.0)).collect();
    let h1: Vec<f64> = (0..300).map(|_| rng.random_range(1.0..6.0)).collect();
    let a = roc(&h0, &h1, 0.1).unwrap();
    let scaled = |v: &[f64]| v.iter().map(|x| 7.5 * x).collect::<Vec<_>>();
    let b = roc(&scaled(&h0), &scaled(&h1), 0.1).unwrap();
    check("ROC scaling invariance", a.fpr == b.fpr && a.tpr == b.tpr && a.pauc01 == b.pauc01);

    let (mut anmf_ok, mut wls_ok) = (true, true);
    for _ in 0..1000 {
        let p = random_hpd(&mut rng, 5);
        let z: Vec<C64> = (0..5).map(|_| rand_c(&mut rng, 2.0)).collect();
        let s: Vec<C64> = (0..5).map(|_| rand_c(&mut rng, 1.0)).collect();
        let v = anmf(&z, &s, &p).unwrap();
        anmf_ok &= (0.0..=1.0).contains(&v);
        let amp = rand_c(&mut rng, 3.0);
        let clean: Vec<C64> = s.iter().map(|x| amp * x).collect();
        wls_ok &= (wls_amplitude(&clean, &s, &p).unwrap() - amp).norm() <= 1e-9 * (1.0 + amp.norm());
    }
    check("anmf in [0, 1]", anmf_ok);
    check("WLS noiseless identity", wls_ok);

    let mut toeplitz_ok = true;
    for _ in 0..200 {
        let w = random_matrix(&mut rng, 8, 5, 1.0);
        let t = toeplitz_ap(&w, &ToeplitzConfig::default()).unwrap().estimate;
        let scale = t.max_abs().max(1.0);
        let min = eigenvalues(&t).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        toeplitz_ok &= toeplitz_residual(&t) <= 1e-8 * scale && min >= -1e-8 * scale;
    }
    check("toeplitz_ap Toeplitz + PSD", toeplitz_ok);

    let mut guard_ok = true;
    for spec in [WindowSpec { d: 3, guard: 1, half_width: 2, stride_time: 1 }, WindowSpec::default()] {
        let reach = spec.guard + spec.half_width;
        let map = DataMap::from_fn(2 * reach + 6, spec.d + 9, |r, t| C64::new(r as f64, t as f64));
        for p in extract(&map, &spec).unwrap() {
            guard_ok &= p.pair.label.iter().enumerate().all(|(k, z)| *z == C64::new(p.range as f64, (p.time + k) as f64));
            let f = &p.pair.features;
            let mut ranges: Vec<usize> = (0..f.rows()).map(|i| f[(i, 0)].re as usize).collect();
            guard_ok &= ranges.iter().all(|&r| {
                let dist = r.abs_diff(p.range);
                dist > spec.guard && dist <= reach
            });
            guard_ok &= (0..f.rows()).all(|i| (0..spec.d).all(|k| f[(i, k)].im == (p.time + k) as f64));
            ranges.dedup();
            guard_ok &= ranges.len() == 2 * spec.half_width;
        }
    }
    check("window guard exclusion", guard_ok);

    let pairs = SyntheticConfig { n_envs: 30, ..SyntheticConfig::default() }.generate().unwrap();
    let mut bytes = Vec::new();
    write_dataset_to(&mut bytes, serde_json::json!({}), &pairs).unwrap();
    check("dataset round trip", read_dataset_from(&mut bytes.as_slice()).unwrap().1 == pairs);
    let any = AnyModel::Ssce(model);
    let ckpt = Checkpoint {
        optimizer: Some(Adam::new(&TrainConfig::desk(), &any.params()).state().clone()),
        model: any,
        seed: 3,
        iteration: 7,
        run_config: serde_json::json!({}),
    };
    let mut bytes = Vec::new();
    write_checkpoint_to(&mut bytes, &ckpt).unwrap();
    check("checkpoint round trip", parse_checkpoint(&bytes).unwrap() == ckpt);

    let total = 11;
    Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{total}/{total} properties hold")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

const PIPELINE: &str = r#"
[data]
kind = "synthetic"
n_envs = 300

[train]
iterations = 1000
eval_period = 500
checkpoint_period = 0

[train_data]
kind = "file"
path = "train.bin"
"#;

/// Criterion 9: the pipeline twice, as separate processes, in separate
/// directories with the same seed.
fn determinism(dir: &Path) -> (Outcome, Value) {
    let mut docs = Vec::new();
    for run in ["run1", "run2"] {
        let root = dir.join(run);
        fs::create_dir_all(&root).unwrap();
        fs::write(root.join("run.toml"), PIPELINE).unwrap();
        let ssce = |args: &[&str]| {
            let out = Command::new(env!("CARGO_BIN_EXE_ssce")).current_dir(&root).args(args).output().unwrap();
            assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        };
        ssce(&["gen", "--config", "run.toml", "--seed", "5", "--out", "train.bin"]);
        ssce(&["gen", "--config", "run.toml", "--seed", "6", "--out", "test.bin"]);
        ssce(&["train", "--config", "run.toml", "--seed", "5", "--out", "model"]);
        ssce(&[
            "eval",
            "--config",
            "run.toml",
            "--seed",
            "5",
            "--data",
            "test.bin",
            "--train-data",
            "train.bin",
            "--checkpoint",
            "model/checkpoint.bin",
            "--out",
            "eval",
        ]);
        docs.push(fs::read(root.join("eval/metrics.json")).unwrap());
    }
    let same = docs[0] == docs[1];
    let metrics: Value = serde_json::from_slice(&docs[0]).unwrap();
    (Outcome::new(same, format!("metrics.json {} bytes, identical: {same}", docs[0].len())), metrics)
}

/// Numeric arguments select criteria, e.g.
/// `cargo test --test acceptance -- 1 2 3`; the default runs all of them.
fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let dir = tempfile::tempdir().unwrap();
    let mut results: Vec<(u32, &str, Duration, Option<Duration>, Outcome)> = Vec::new();
    let mut timed = |n: u32, name: &'static str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        if !selected.is_empty() && !selected.contains(&n) {
            return;
        }
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let line = (n, name, elapsed, limit, outcome);
        print_line(&line);
        results.push(line);
    };
    let secs = Duration::from_secs;

    timed(1, "loss/linalg oracle equivalence", Some(secs(1)), &mut loss_oracle);
    timed(2, "gradient correctness", Some(secs(30)), &mut gradient_check);
    timed(3, "conditional second-moment toy oracle", Some(secs(10)), &mut toy_oracle);
    timed(4, "knowledge-aided closed form", Some(secs(300)), &mut || ka_closed_form(dir.path()));
    timed(5, "knowledge-aided consistency trend", Some(secs(600)), &mut ka_consistency);
    let mut table = None;
    timed(6, "synthetic table ordering", Some(secs(1800)), &mut || {
        let (o, m) = table_reproduction(dir.path());
        table = Some(m);
        o
    });
    let mut pipeline = None;
    timed(9, "pipeline determinism", Some(secs(120)), &mut || {
        let (o, m) = determinism(dir.path());
        pipeline = Some(m);
        o
    });
    let runs: Vec<&Value> = table.iter().chain(pipeline.iter()).collect();
    timed(7, "oracle rows", None, &mut || oracle_rows(&runs));
    timed(8, "property suite", Some(secs(120)), &mut property_suite);

    results.sort_by_key(|r| r.0);
    println!("\nsummary");
    let mut all = true;
    for line in &results {
        all &= passed(line);
        print_line(line);
    }
    let failed = results.iter().filter(|l| !passed(l)).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if !all && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn passed(line: &(u32, &str, Duration, Option<Duration>, Outcome)) -> bool {
    line.4.pass && line.3.is_none_or(|limit| line.2 <= limit)
}

fn print_line(line: &(u32, &str, Duration, Option<Duration>, Outcome)) {
    let (n, name, elapsed, limit, outcome) = line;
    let budget = match limit {
        Some(l) if *elapsed > *l => format!(" OVER BUDGET {}s", l.as_secs()),
        Some(l) => format!(" < {}s", l.as_secs()),
        None => String::new(),
    };
    println!(
        "criterion {n} {}: {name} ({:.1}s{budget}): {}",
        if passed(line) { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        outcome.detail
    );
}
