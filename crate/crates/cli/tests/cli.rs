use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dg_core::data::{gen_gaussian, split, GaussianMixtureSpec, SplitSpec};
use dg_core::nn::{predict_classes, Checkpoint};
use dg_core::selective::{parse_curves_csv, Selector};
use tempfile::TempDir;

fn dg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dg"))
        .args(args)
        .env_remove("DG_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dg(args);
    assert!(
        out.status.success(),
        "dg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = dg(args);
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn mnist_dir() -> PathBuf {
    let dir = std::env::var_os("DG_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    assert!(
        dir.join("t10k-images-idx3-ubyte").is_file(),
        "MNIST IDX files not found in {}; run scripts/fetch_mnist.sh or set DG_DATA_DIR",
        dir.display()
    );
    dir
}

fn train_synthetic(dir: &Path, extra: &[&str]) {
    let mut args = vec!["train", "--out-dir", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn default_synthetic_training_writes_checkpoint_and_log() {
    let tmp = TempDir::new().unwrap();
    train_synthetic(tmp.path(), &[]);
    assert!(tmp.path().join("checkpoint.json").is_file());
    let log = fs::read_to_string(tmp.path().join("train_log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,loss,train_acc");
    assert_eq!(lines.len(), 201);
    assert!(lines[200].starts_with("199,"));
    let acc: f64 = lines[200].rsplit(',').next().unwrap().parse().unwrap();
    assert!(acc >= 0.9, "final training accuracy {acc}");
}

#[test]
fn payoff_below_one_is_rejected_before_training() {
    let tmp = TempDir::new().unwrap();
    let (c, err) = code(&["train", "--o", "0.9", "--out-dir", s(tmp.path())]);
    assert_eq!(c, 2);
    assert!(err.contains("must be > 1"), "{err}");
    assert!(!tmp.path().join("checkpoint.json").exists());
    assert!(!tmp.path().join("train_log.csv").exists());
}

#[test]
fn same_seed_gives_identical_logs() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        train_synthetic(d.path(), &["--epochs", "15", "--seed", "7"]);
    }
    let read = |d: &TempDir| fs::read(d.path().join("train_log.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let read = |d: &TempDir| fs::read(d.path().join("checkpoint.json")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn collapse_exits_with_its_own_code_and_a_hint() {
    let tmp = TempDir::new().unwrap();
    let (c, err) = code(&["train", "--lr", "1e6", "--epochs", "5", "--out-dir", s(tmp.path())]);
    assert_eq!(c, 3, "{err}");
    assert!(err.contains("increase pretrain epochs or o"), "{err}");
}

#[test]
fn eval_writes_one_block_per_selector() {
    let tmp = TempDir::new().unwrap();
    train_synthetic(tmp.path(), &["--epochs", "30"]);
    let stdout = ok(&["eval", "--out-dir", s(tmp.path())]);
    assert!(stdout.contains("softmax_response"));
    let text = fs::read_to_string(tmp.path().join("risk_coverage.csv")).unwrap();
    let rows = parse_curves_csv(&text).unwrap();
    assert_eq!(rows.len(), 15);
    for sel in Selector::ALL {
        let block: Vec<f64> = rows
            .iter()
            .filter(|r| r.selector == sel)
            .map(|r| r.target_coverage)
            .collect();
        assert_eq!(block, vec![1.0, 0.95, 0.9, 0.85, 0.8]);
    }

    // full coverage row is the plain error of the argmax classifier
    let model = Checkpoint::load(&tmp.path().join("checkpoint.json")).unwrap().model;
    let (_, test) = gen_gaussian(&GaussianMixtureSpec::default(), 0).unwrap();
    let (_, rest) = split(
        test.len(),
        &SplitSpec {
            validation_fraction: 0.2,
            seed: 0,
        },
    )
    .unwrap();
    let preds = predict_classes(&model.probabilities(&test.features).unwrap());
    let in_dist: Vec<usize> = rest.into_iter().filter(|&i| !test.is_ood(i)).collect();
    let wrong = in_dist.iter().filter(|&&i| preds[i] != test.labels[i]).count();
    let plain = wrong as f64 / in_dist.len() as f64;
    for r in rows.iter().filter(|r| r.target_coverage == 1.0) {
        assert_eq!(r.covered_n, in_dist.len());
        assert!((r.selective_risk.unwrap() - plain).abs() < 1e-6 * plain.max(1e-3));
    }
}

#[test]
fn eval_errors() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    let (c, _) = code(&["eval", "--checkpoint", s(&missing)]);
    assert_eq!(c, 4);
    train_synthetic(tmp.path(), &["--epochs", "2"]);
    let (c, err) = code(&["eval", "--out-dir", s(tmp.path()), "--coverage", "1.5"]);
    assert_eq!(c, 2, "{err}");
    let (c, _) = code(&["eval", "--out-dir", s(tmp.path()), "--selector", "bayes"]);
    assert_eq!(c, 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"train": {"epochs": 4, "seed": 3}, "coverages": [0.9]}"#).unwrap();
    let out = tmp.path().join("run");
    ok(&["train", "--config", s(&cfg), "--epochs", "3", "--out-dir", s(&out)]);
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert_eq!(Checkpoint::load(&out.join("checkpoint.json")).unwrap().seed, 3);
}

fn summary_rows(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("summary.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn sweep_runs_every_grid_point() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "sweep",
        "--epochs",
        "8",
        "--o-min",
        "1.2",
        "--o-max",
        "2.0",
        "--o-step",
        "0.2",
        "--selector",
        "gambler",
        "--out-dir",
        s(tmp.path()),
    ]);
    for o in ["1.2", "1.4", "1.6", "1.8", "2"] {
        assert!(
            tmp.path().join(format!("o_{o}")).join("risk_coverage.csv").is_file(),
            "o = {o}"
        );
    }
    let runs = fs::read_to_string(tmp.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 6);
    let rows = summary_rows(tmp.path());
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[0] == "gambler" && !r[5].is_empty()));
}

#[test]
fn single_point_sweep_leaves_std_empty() {
    let tmp = TempDir::new().unwrap();
    ok(&[
        "sweep",
        "--epochs",
        "5",
        "--o-min",
        "1.5",
        "--o-max",
        "1.5",
        "--o-step",
        "0.2",
        "--selector",
        "gambler",
        "--coverage",
        "1.0",
        "--out-dir",
        s(tmp.path()),
    ]);
    let rows = summary_rows(tmp.path());
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][2], "1.5");
    assert_eq!(rows[0][5], "");
}

#[test]
fn sweep_grid_must_start_above_one() {
    let (c, _) = code(&["sweep", "--o-min", "1.0", "--o-max", "2.0", "--o-step", "0.2"]);
    assert_eq!(c, 2);
    let (c, _) = code(&["sweep", "--o-step", "0"]);
    assert_eq!(c, 2);
}

#[test]
fn topk_on_synthetic() {
    let tmp = TempDir::new().unwrap();
    train_synthetic(tmp.path(), &["--epochs", "10"]);
    let csv = ok(&["topk", "--out-dir", s(tmp.path()), "--k", "0"]);
    assert_eq!(csv.trim_end(), "rank,index,confidence,true_label,predicted_label");
    let csv = ok(&["topk", "--out-dir", s(tmp.path()), "--k", "5", "--selector", "entropy"]);
    let conf: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(conf.len(), 5);
    assert!(conf.windows(2).all(|w| w[0] <= w[1]));
    let (c, _) = code(&["topk", "--out-dir", s(tmp.path()), "--k", "3001"]);
    assert_eq!(c, 2);
}

#[test]
fn gen_synthetic_writes_both_splits() {
    let tmp = TempDir::new().unwrap();
    ok(&["gen-synthetic", "--seed", "4", "--out-dir", s(tmp.path())]);
    let train = fs::read_to_string(tmp.path().join("synthetic_train.csv")).unwrap();
    let test = fs::read_to_string(tmp.path().join("synthetic_test.csv")).unwrap();
    assert_eq!(train.lines().next(), Some("x1,x2,label"));
    assert_eq!(train.lines().count(), 2001);
    assert_eq!(test.lines().count(), 3001);
    assert!(!train.lines().any(|l| l.ends_with(",-1")));
    assert_eq!(test.lines().filter(|l| l.ends_with(",-1")).count(), 1000);
}

fn json(args: &[&str]) -> serde_json::Value {
    serde_json::from_str(&ok(args)).unwrap()
}

#[test]
fn math_commands() {
    let v = json(&[
        "math",
        "doubling-rate",
        "--p",
        "0.5,0.5",
        "--odds",
        "2,2",
        "--bet",
        "0.5,0.5",
    ]);
    assert!(v["rate"].as_f64().unwrap().abs() < 1e-12);
    let v = json(&[
        "math",
        "doubling-rate",
        "--p",
        "0.5,0.5",
        "--odds",
        "2,2",
        "--bet",
        "1,0",
    ]);
    assert_eq!(v["rate"], "-inf");
    let v = json(&["math", "optimal-bet", "--p", "0.7,0.2,0.1", "--odds", "3,3,3"]);
    assert_eq!(v["bet"], serde_json::json!([0.7, 0.2, 0.1]));
    let v = json(&["math", "optimal-reservation", "--p", "0.5,0.5", "--o", "0.9"]);
    assert_eq!(v["reservation"], 1.0);
    let v = json(&["math", "side-info", "--joint", "0.5,0;0,0.5", "--odds", "2,2"]);
    assert!((v["mutual_information"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-12);
    let v = json(&[
        "math",
        "brute-force",
        "--p",
        "0.6,0.4",
        "--odds",
        "2,2",
        "--resolution",
        "0.01",
    ]);
    assert!((v["bet"][0].as_f64().unwrap() - 0.6).abs() < 1e-9);
    let v = json(&[
        "math",
        "wealth",
        "--bets",
        "0.5,0.5,0;0.5,0.5,0",
        "--winners",
        "0,1",
        "--o",
        "2",
    ]);
    assert!((v["wealth_relative"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let (c, _) = code(&[
        "math",
        "brute-force",
        "--p",
        "0.2,0.2,0.2,0.2,0.2",
        "--odds",
        "2,2,2,2,2",
    ]);
    assert_eq!(c, 2);
}

#[test]
fn mnist_topk_and_rotation_probe() {
    let data = mnist_dir();
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("small.json");
    fs::write(
        &cfg,
        r#"{"dataset": "mnist", "model": {"layer_sizes": [784, 32, 11], "activations": ["relu", "none"]},
            "train": {"epochs": 1, "pretrain_epochs": 1}}"#,
    )
    .unwrap();
    let common = ["--config", s(&cfg), "--data-dir", s(&data), "--out-dir", s(tmp.path())];
    let with = |head: &[&str], tail: &[&str]| -> Vec<String> {
        head.iter()
            .chain(common.iter())
            .chain(tail)
            .map(|a| a.to_string())
            .collect()
    };
    let run = |args: Vec<String>| ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    run(with(&["train"], &[]));
    let topk = run(with(&["topk"], &["--k", "10", "--selector", "gambler"]));
    assert_eq!(topk.lines().count(), 11);

    let probe = run(with(&["rotate-probe"], &["--index", "7", "--angle-step", "10"]));
    let rows: Vec<Vec<String>> = fs::read_to_string(tmp.path().join("rotate_probe.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 19);
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[18][0], "180");
    assert!(probe.contains("at 180°"));

    // angle 0 is the unrotated prediction
    let model = Checkpoint::load(&tmp.path().join("checkpoint.json")).unwrap().model;
    let test = dg_core::data::load_mnist_dir(&data, dg_core::data::MnistSplit::Test).unwrap();
    let x = dg_core::Tensor::matrix(1, 784, test.image(7).to_vec()).unwrap();
    let p = model.probabilities(&x).unwrap();
    assert_eq!(rows[0][1], predict_classes(&p)[0].to_string());
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), p.row(0)[10]);

    let out = dg(&with(&["rotate-probe"], &["--index", "10000"])
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(2));
}
