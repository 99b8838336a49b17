use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dg_core::data::{gen_gaussian, load_mnist_dir, rotate, split, Dataset, GaussianMixtureSpec, MnistSplit, SplitSpec};
use dg_core::nn::{init_params, predict_classes, train, Checkpoint, Mlp};
use dg_core::selective::{
    confidence, curves_to_csv, format_sig6, risk_coverage_curve, top_k_uncertain, EvalSplit, RiskCoverageCurve,
};
use dg_core::OOD_LABEL;
use rayon::prelude::*;

use crate::args::{DatasetKind, EvalArgs, GenArgs, ProbeArgs, SweepArgs, TopkArgs};
use crate::config::RunConfig;
use crate::error::{io_err, CliError, CliResult};

pub const TRAIN_LOG_HEADER: &str = "epoch,loss,train_acc";
pub const TOPK_HEADER: &str = "rank,index,confidence,true_label,predicted_label";
pub const PROBE_HEADER: &str = "angle,predicted_label,abstention_score,max_prob";
pub const SWEEP_RUNS_HEADER: &str = "o,status,detail";
pub const SWEEP_SUMMARY_HEADER: &str = "selector,target_coverage,best_o,validation_risk,test_risk,test_risk_std";

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn label_field(y: usize) -> String {
    if y == OOD_LABEL {
        "-1".into()
    } else {
        y.to_string()
    }
}

fn load_train(cfg: &RunConfig) -> CliResult<Dataset> {
    Ok(match cfg.dataset {
        DatasetKind::Synthetic => gen_gaussian(&GaussianMixtureSpec::default(), cfg.data_seed)?.0,
        DatasetKind::Mnist => load_mnist_dir(&cfg.mnist_dir(), MnistSplit::Train)?.to_dataset(10)?,
    })
}

fn load_test(cfg: &RunConfig) -> CliResult<Dataset> {
    Ok(match cfg.dataset {
        DatasetKind::Synthetic => gen_gaussian(&GaussianMixtureSpec::default(), cfg.data_seed)?.1,
        DatasetKind::Mnist => load_mnist_dir(&cfg.mnist_dir(), MnistSplit::Test)?.to_dataset(10)?,
    })
}

fn load_model(path: &Path, data_dim: usize) -> CliResult<Mlp> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.model.spec.input_dim() != data_dim {
        return Err(CliError::config(format!(
            "checkpoint expects {} input features but the dataset has {data_dim}",
            ckpt.model.spec.input_dim()
        )));
    }
    Ok(ckpt.model)
}

pub fn train_log_csv(log: &[dg_core::nn::EpochLog]) -> String {
    let mut out = format!("{TRAIN_LOG_HEADER}\n");
    for e in log {
        writeln!(out, "{},{},{}", e.epoch, e.loss, e.train_acc).unwrap();
    }
    out
}

fn train_and_save(cfg: &RunConfig, data: &Dataset) -> CliResult<Mlp> {
    if cfg.model.input_dim() != data.dim() {
        return Err(CliError::config(format!(
            "model expects {} input features but the dataset has {}",
            cfg.model.input_dim(),
            data.dim()
        )));
    }
    let model = init_params(&cfg.model, cfg.train.seed)?;
    let trained = train(model, data, &cfg.train)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    Checkpoint::new(trained.model.clone(), cfg.train.payoff, cfg.train.seed)
        .save(&cfg.out_dir.join("checkpoint.json"))?;
    write_file(&cfg.out_dir.join("train_log.csv"), &train_log_csv(&trained.log))?;
    Ok(trained.model)
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let data = load_train(cfg)?;
    train_and_save(cfg, &data)?;
    println!("wrote {}", cfg.out_dir.join("checkpoint.json").display());
    Ok(())
}

/// Curves calibrated on the validation part of the test set, measured on
/// the validation part itself and on the remainder.
pub struct Evaluation {
    pub validation: Vec<RiskCoverageCurve>,
    pub test: Vec<RiskCoverageCurve>,
}

pub fn evaluate(model: &Mlp, data: &Dataset, cfg: &RunConfig) -> CliResult<Evaluation> {
    let probs = model.probabilities(&data.features)?;
    let (cal, rest) = split(
        data.len(),
        &SplitSpec {
            validation_fraction: cfg.validation_fraction,
            seed: cfg.split_seed,
        },
    )?;
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for &selector in &cfg.selectors {
        let all = EvalSplit::from_probabilities(&probs, data.labels.clone(), selector)?;
        let (c, r) = (all.subset(&cal), all.subset(&rest));
        validation.push(risk_coverage_curve(&c, &c, &cfg.coverages)?);
        test.push(risk_coverage_curve(&c, &r, &cfg.coverages)?);
    }
    Ok(Evaluation { validation, test })
}

fn risk_cell(risk: Option<f64>) -> String {
    risk.map_or_else(|| "NA".into(), |r| format!("{:.2}", 100.0 * r))
}

pub fn render_table(curves: &[RiskCoverageCurve]) -> String {
    let mut out = format!(
        "{:<18}{:>10}{:>10}{:>10}{:>10}\n",
        "selector", "coverage", "realized", "risk(%)", "covered"
    );
    for c in curves {
        for p in &c.points {
            writeln!(
                out,
                "{:<18}{:>10.2}{:>10.4}{:>10}{:>10}",
                c.selector.name(),
                p.target_coverage,
                p.result.coverage,
                risk_cell(p.result.risk),
                p.result.covered
            )
            .unwrap();
        }
    }
    out
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let cfg = RunConfig::resolve(&args.run)?;
    let path = cfg.checkpoint_path(args.checkpoint.as_deref());
    let data = load_test(&cfg)?;
    let model = load_model(&path, data.dim())?;
    let eval = evaluate(&model, &data, &cfg)?;
    let out = cfg.out_dir.join("risk_coverage.csv");
    write_file(&out, &curves_to_csv(&eval.test))?;
    print!("{}", render_table(&eval.test));
    println!("wrote {}", out.display());
    Ok(())
}

fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    Some(var.sqrt())
}

/// Indices of `center` and its grid neighbours, three wide, shifted inward at the edges.
pub fn neighbour_window(center: usize, len: usize) -> std::ops::Range<usize> {
    if len <= 3 {
        return 0..len;
    }
    let start = center.saturating_sub(1).min(len - 3);
    start..start + 3
}

struct SweepRun {
    o: f64,
    eval: Evaluation,
}

pub fn sweep_summary(runs: &[(f64, &Evaluation)], cfg: &RunConfig) -> String {
    let mut out = format!("{SWEEP_SUMMARY_HEADER}\n");
    for (s, selector) in cfg.selectors.iter().enumerate() {
        let mut targets = cfg.coverages.clone();
        targets.sort_by(|a, b| b.total_cmp(a));
        targets.dedup();
        for target in targets {
            let cell = |e: &Evaluation, validation: bool| {
                let curves = if validation { &e.validation } else { &e.test };
                curves[s].at(target).and_then(|p| p.result.risk)
            };
            let best = runs
                .iter()
                .enumerate()
                .filter_map(|(i, (_, e))| cell(e, true).map(|v| (i, v)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let Some((i, val_risk)) = best else {
                writeln!(out, "{selector},{},NA,NA,NA,", format_sig6(target)).unwrap();
                continue;
            };
            let (o, e) = runs[i];
            let neighbours: Vec<f64> = neighbour_window(i, runs.len())
                .filter_map(|j| cell(runs[j].1, false))
                .collect();
            let std = if runs.len() > 1 { sample_std(&neighbours) } else { None };
            writeln!(
                out,
                "{selector},{},{},{},{},{}",
                format_sig6(target),
                format_sig6(o),
                format_sig6(val_risk),
                cell(e, false).map_or_else(|| "NA".into(), format_sig6),
                std.map_or_else(String::new, format_sig6)
            )
            .unwrap();
        }
    }
    out
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let cfg = RunConfig::resolve_sweep(args)?;
    let train_set = load_train(&cfg)?;
    let test_set = load_test(&cfg)?;
    let grid = cfg.sweep.values();
    let outcomes: Vec<(f64, CliResult<SweepRun>)> = grid
        .par_iter()
        .map(|&o| {
            let mut run_cfg = cfg.clone();
            run_cfg.train.payoff = o;
            run_cfg.out_dir = cfg.out_dir.join(format!("o_{}", format_sig6(o)));
            let result = train_and_save(&run_cfg, &train_set).and_then(|model| {
                let eval = evaluate(&model, &test_set, &run_cfg)?;
                write_file(&run_cfg.out_dir.join("risk_coverage.csv"), &curves_to_csv(&eval.test))?;
                Ok(SweepRun { o, eval })
            });
            (o, result)
        })
        .collect();

    let mut runs_csv = format!("{SWEEP_RUNS_HEADER}\n");
    let mut done = Vec::new();
    for (o, result) in outcomes {
        match result {
            Ok(run) => {
                writeln!(runs_csv, "{},ok,", format_sig6(o)).unwrap();
                done.push(run);
            }
            Err(e @ CliError::Collapse(_)) => {
                eprintln!("o = {}: {e}; skipped", format_sig6(o));
                writeln!(
                    runs_csv,
                    "{},collapsed,\"{}\"",
                    format_sig6(o),
                    e.to_string().replace('"', "'")
                )
                .unwrap();
            }
            Err(e) => return Err(e),
        }
    }
    write_file(&cfg.out_dir.join("runs.csv"), &runs_csv)?;
    let pairs: Vec<(f64, &Evaluation)> = done.iter().map(|r| (r.o, &r.eval)).collect();
    let summary = sweep_summary(&pairs, &cfg);
    write_file(&cfg.out_dir.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn cmd_topk(args: &TopkArgs) -> CliResult<()> {
    let cfg = RunConfig::resolve(&args.run)?;
    let data = load_test(&cfg)?;
    let model = load_model(&cfg.checkpoint_path(args.checkpoint.as_deref()), data.dim())?;
    let probs = model.probabilities(&data.features)?;
    let selector = cfg.selectors[0];
    let scores = confidence(&probs, selector)?;
    let preds = predict_classes(&probs);
    let top = top_k_uncertain(&scores, args.k)?;
    let mut out = format!("{TOPK_HEADER}\n");
    for (rank, &i) in top.iter().enumerate() {
        writeln!(
            out,
            "{},{i},{},{},{}",
            rank + 1,
            scores.confidence[i],
            label_field(data.labels[i]),
            preds[i]
        )
        .unwrap();
    }
    let path = cfg.out_dir.join("topk.csv");
    write_file(&path, &out)?;
    print!("{out}");
    Ok(())
}

pub fn cmd_rotate_probe(args: &ProbeArgs) -> CliResult<()> {
    let cfg = RunConfig::resolve(&args.run)?;
    if !(args.angle_step > 0.0) {
        return Err(CliError::config(format!(
            "angle step must be positive, got {}",
            args.angle_step
        )));
    }
    let images = load_mnist_dir(&cfg.mnist_dir(), MnistSplit::Test)?;
    if args.index >= images.len() {
        return Err(CliError::config(format!(
            "index {} out of range for {} test images",
            args.index,
            images.len()
        )));
    }
    let (rows, cols) = (images.rows(), images.cols());
    let model = load_model(&cfg.checkpoint_path(args.checkpoint.as_deref()), rows * cols)?;
    let image = images.image(args.index);
    let steps = (180.0 / args.angle_step + 1e-9).floor() as usize;
    let angles: Vec<f64> = (0..=steps).map(|k| k as f64 * args.angle_step).collect();
    let mut batch = Vec::with_capacity(angles.len() * rows * cols);
    for &a in &angles {
        batch.extend(rotate(image, rows, cols, a));
    }
    let x = dg_core::Tensor::matrix(angles.len(), rows * cols, batch)?;
    let probs = model.probabilities(&x)?;
    let preds = predict_classes(&probs);
    let m = probs.cols() - 1;
    let mut out = format!("{PROBE_HEADER}\n");
    for (k, &a) in angles.iter().enumerate() {
        let row = probs.row(k);
        writeln!(out, "{},{},{},{}", format_sig6(a), preds[k], row[m], row[preds[k]]).unwrap();
    }
    write_file(&cfg.out_dir.join("rotate_probe.csv"), &out)?;
    print!("{out}");
    println!(
        "image {} (label {}): predicted {} at 0°, {} at {}°",
        args.index,
        images.labels[args.index],
        preds[0],
        preds[angles.len() - 1],
        format_sig6(angles[angles.len() - 1])
    );
    Ok(())
}

pub fn cmd_gen_synthetic(args: &GenArgs) -> CliResult<()> {
    let (train_set, test_set) = gen_gaussian(&GaussianMixtureSpec::default(), args.seed)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    for (name, data) in [("synthetic_train.csv", &train_set), ("synthetic_test.csv", &test_set)] {
        let path = args.out_dir.join(name);
        data.write_xy_csv(&path)?;
        println!("wrote {} ({} points)", path.display(), data.len());
    }
    Ok(())
}
