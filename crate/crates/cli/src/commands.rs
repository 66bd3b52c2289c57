use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Utc;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use hybfer::data::{
    augment_ten, kfold_indices, load_csv, synthetic_samples, write_csv, DatasetSplits, LabelSet, LabeledSample,
    Split,
};
use hybfer::model::{
    aggregate, build_model, evaluate, load_checkpoint, predict_label, predict_probs, prepare_fine_tune,
    save_checkpoint, Arch, EpochRecord, FeatureSource, ModelCheckpoint, ModelGraph, ModelVariant, TrainConfig,
    Trainer,
};
use hybfer::sift::{keypoint_descriptors, kmeans_fit, load_codebook, save_codebook, DENSE_LEN};
use hybfer::Rng;

use crate::args::*;
use crate::manifest::RunManifest;
use crate::Failure;

type Outcome = Result<(), Failure>;

struct Ctx {
    out_dir: Option<PathBuf>,
}

impl Ctx {
    fn out(&self, p: &Path) -> PathBuf {
        match &self.out_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Outputs must never overwrite inputs.
fn check_distinct(inputs: &[&Path], outputs: &[&Path]) -> Outcome {
    for o in outputs {
        if inputs.iter().any(|i| absolute(i) == absolute(o)) {
            return Err(Failure::Usage(format!("output {} would overwrite an input", o.display())));
        }
    }
    Ok(())
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut name = p.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    p.with_file_name(name)
}

fn label_set(classes: usize) -> Result<LabelSet, Failure> {
    LabelSet::for_classes(classes).ok_or_else(|| Failure::Usage(format!("unsupported class count {classes}")))
}

fn load(path: &Path, classes: usize) -> Result<DatasetSplits, Failure> {
    Ok(load_csv(path, label_set(classes)?)?)
}

fn variant_of(kind: ModelKind) -> ModelVariant {
    match kind {
        ModelKind::Cnn => ModelVariant::CnnOnly,
        ModelKind::CnnSift => ModelVariant::CnnSift,
        ModelKind::CnnDsift => ModelVariant::CnnDsift,
    }
}

fn split_of(s: SplitName) -> Split {
    match s {
        SplitName::Train => Split::Train,
        SplitName::Public => Split::PublicTest,
        SplitName::Private => Split::PrivateTest,
    }
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<ModelGraph<f32>>, Failure> {
    let models = paths
        .iter()
        .map(|p| Ok(ModelGraph::from_checkpoint(&load_checkpoint(p)?)?))
        .collect::<Result<Vec<_>, Failure>>()?;
    let c = models[0].num_classes();
    if models.iter().any(|m| m.num_classes() != c) {
        return Err(Failure::Data("checkpoints disagree on the number of classes".into()));
    }
    Ok(models)
}

#[derive(Serialize)]
struct HistoryLine {
    epoch: usize,
    train_loss: f64,
    train_acc: f64,
    val_acc: Option<f64>,
}

impl From<&EpochRecord> for HistoryLine {
    fn from(r: &EpochRecord) -> Self {
        HistoryLine {
            epoch: r.epoch,
            train_loss: r.train_loss,
            train_acc: r.train_acc,
            val_acc: r.val_acc,
        }
    }
}

/// Runs the epoch loop, streaming one JSON line per epoch, then saves the
/// checkpoint.
fn run_training(
    model: ModelGraph<f32>,
    data: &DatasetSplits,
    config: TrainConfig,
    out: &Path,
    history: &Path,
) -> Result<ModelCheckpoint, Failure> {
    let epochs = config.epochs;
    let mut trainer = Trainer::new(model, data, config)?;
    let mut log = BufWriter::new(File::create(history).map_err(|e| io_fail(history, e))?);
    for _ in 0..epochs {
        let result = trainer.run_epoch();
        let r = match result {
            Ok(r) => r,
            Err(e) => {
                log.flush().map_err(|e| io_fail(history, e))?;
                return Err(e.into());
            }
        };
        let line = serde_json::to_string(&HistoryLine::from(&r)).expect("history serializes");
        writeln!(log, "{line}").map_err(|e| io_fail(history, e))?;
        log.flush().map_err(|e| io_fail(history, e))?;
        let val = r.val_acc.map(|v| format!(" val_acc={v:.4}")).unwrap_or_default();
        eprintln!(
            "epoch {}/{epochs} train_loss={:.4} train_acc={:.4}{val}",
            r.epoch, r.train_loss, r.train_acc
        );
    }
    let ckpt = trainer.checkpoint();
    save_checkpoint(&ckpt, out)?;
    Ok(ckpt)
}

fn truncate_train(data: &mut DatasetSplits, max: Option<usize>) {
    if let Some(n) = max {
        data.train.truncate(n);
    }
}

fn train(ctx: &Ctx, a: &TrainArgs) -> Outcome {
    let started = Utc::now();
    let out = ctx.out(&a.out);
    let history = ctx.out(&a.hyper.history.clone().unwrap_or_else(|| with_suffix(&a.out, ".history.jsonl")));
    let mut inputs = vec![a.data.clone()];
    inputs.extend(a.codebook.clone());
    check_distinct(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>(), &[&out, &history])?;

    let variant = variant_of(a.model);
    let (features, side_in) = match variant {
        ModelVariant::CnnOnly => (FeatureSource::None, DENSE_LEN),
        ModelVariant::CnnDsift => (FeatureSource::DenseSift, DENSE_LEN),
        ModelVariant::CnnSift => {
            let path = a.codebook.as_ref().ok_or_else(|| Failure::Usage("cnn-sift needs --codebook".into()))?;
            let cb = load_codebook(path)?;
            let k = cb.k();
            (FeatureSource::SiftBag(cb), k)
        }
    };
    let mut data = load(&a.data, a.classes as usize)?;
    truncate_train(&mut data, a.hyper.max_train);
    let model = build_model(variant, a.classes as usize, Arch::standard(side_in), &mut Rng::new(a.hyper.seed))?;
    let params = model.param_count();
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.hyper.batch_size,
        lr: a.hyper.lr,
        seed: a.hyper.seed,
        augment: !a.hyper.no_augment,
        features,
    };
    let (n_train, n_pub, n_priv) = data.sizes();
    eprintln!("{variant}: {params} parameters, {n_train} training samples, {n_pub} validation samples");
    run_training(model, &data, config, &out, &history)?;
    println!("saved {}", out.display());
    RunManifest::write(
        "train",
        json!({
            "model": variant.name(), "epochs": a.epochs, "batch_size": a.hyper.batch_size,
            "lr": a.hyper.lr, "augment": !a.hyper.no_augment, "classes": a.classes,
            "max_train": a.hyper.max_train, "split_sizes": [n_train, n_pub, n_priv],
        }),
        Some(a.hyper.seed),
        &inputs,
        &[out, history],
        started,
    )?;
    Ok(())
}

fn fine_tune(ctx: &Ctx, a: &FineTuneArgs) -> Outcome {
    let started = Utc::now();
    let out = ctx.out(&a.out);
    let history = ctx.out(&a.hyper.history.clone().unwrap_or_else(|| with_suffix(&a.out, ".history.jsonl")));
    check_distinct(&[&a.checkpoint, &a.data], &[&out, &history])?;
    if a.epochs == 0 {
        return Err(Failure::Usage("--epochs must be at least 1".into()));
    }
    let source = load_checkpoint(&a.checkpoint)?;
    let mut data = load(&a.data, 6)?;
    truncate_train(&mut data, a.hyper.max_train);
    let model = prepare_fine_tune(&source, 6, a.hyper.seed)?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.hyper.batch_size,
        lr: a.hyper.lr,
        seed: a.hyper.seed,
        augment: !a.hyper.no_augment,
        features: FeatureSource::None,
    };
    run_training(model, &data, config, &out, &history)?;
    println!("saved {}", out.display());
    RunManifest::write(
        "fine-tune",
        json!({
            "source_variant": source.variant.name(), "epochs": a.epochs, "batch_size": a.hyper.batch_size,
            "lr": a.hyper.lr, "augment": !a.hyper.no_augment, "max_train": a.hyper.max_train,
        }),
        Some(a.hyper.seed),
        &[a.checkpoint.clone(), a.data.clone()],
        &[out, history],
        started,
    )?;
    Ok(())
}

fn write_confusion(path: &Path, labels: LabelSet, confusion: &[Vec<u64>]) -> Outcome {
    let mut text = String::from("true\\predicted");
    for e in labels.expressions() {
        text.push(',');
        text.push_str(e.name());
    }
    text.push('\n');
    for (e, row) in labels.expressions().iter().zip(confusion) {
        text.push_str(e.name());
        for v in row {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_fail(path, e))
}

fn evaluate_cmd(ctx: &Ctx, a: &EvaluateArgs) -> Outcome {
    let started = Utc::now();
    let confusion = ctx.out(&a.confusion);
    let mut inputs = a.checkpoint.clone();
    inputs.push(a.data.clone());
    check_distinct(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>(), &[&confusion])?;
    let mut models = load_models(&a.checkpoint)?;
    let classes = models[0].num_classes();
    let data = load(&a.data, classes)?;
    let mut samples = data.split(split_of(a.split)).to_vec();
    if let Some(n) = a.max_samples {
        samples.truncate(n);
    }
    if samples.is_empty() {
        return Err(Failure::Data(format!("split {:?} of {} is empty", a.split, a.data.display())));
    }
    let metrics = evaluate(&mut models, &samples)?;
    println!("accuracy={:.4}", metrics.accuracy);
    write_confusion(&confusion, label_set(classes)?, &metrics.confusion)?;
    RunManifest::write(
        "evaluate",
        json!({
            "split": split_of(a.split).usage_tag(), "models": models.len(), "samples": metrics.total,
            "accuracy": metrics.accuracy, "max_samples": a.max_samples,
        }),
        None,
        &inputs,
        &[confusion],
        started,
    )?;
    Ok(())
}

fn fit_codebook(ctx: &Ctx, a: &FitCodebookArgs) -> Outcome {
    let started = Utc::now();
    let out = ctx.out(&a.out);
    check_distinct(&[&a.data], &[&out])?;
    if a.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let mut data = load(&a.data, 7)?;
    truncate_train(&mut data, a.max_train);
    let per_image = data
        .train
        .par_iter()
        .map(|s| keypoint_descriptors(&s.image))
        .collect::<Result<Vec<_>, _>>()?;
    let descriptors: Vec<_> = per_image.into_iter().flatten().collect();
    println!("descriptors={} images={}", descriptors.len(), data.train.len());
    if descriptors.len() < a.k {
        return Err(Failure::Data(format!(
            "only {} descriptors for K = {}; use a smaller --k",
            descriptors.len(),
            a.k
        )));
    }
    let fit = kmeans_fit(&descriptors, a.k, &mut Rng::new(a.seed))?;
    println!("objective={:.6} iterations={}", fit.objective(), fit.objective_history.len());
    save_codebook(&fit.codebook, &out)?;
    RunManifest::write(
        "fit-codebook",
        json!({
            "k": a.k, "descriptors": descriptors.len(), "images": data.train.len(),
            "objective": fit.objective(), "max_train": a.max_train,
        }),
        Some(a.seed),
        std::slice::from_ref(&a.data),
        &[out],
        started,
    )?;
    Ok(())
}

fn cross_validate(ctx: &Ctx, a: &CrossValidateArgs) -> Outcome {
    let started = Utc::now();
    let report = ctx.out(&a.report);
    let mut inputs = vec![a.data.clone()];
    inputs.extend(a.checkpoint.clone());
    check_distinct(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>(), &[&report])?;
    let data = load(&a.data, 6)?;
    let samples: Vec<LabeledSample> = data.all().cloned().collect();
    let folds = kfold_indices(samples.len(), a.folds, &mut Rng::new(a.seed))?;
    let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
    println!(
        "fold_sizes={}",
        sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
    );
    let mut body = json!({ "samples": samples.len(), "folds": a.folds, "fold_sizes": sizes, "fold_indices": folds });
    if !a.plan_only {
        let path = a.checkpoint.as_ref().expect("clap requires --checkpoint");
        let source = load_checkpoint(path)?;
        let mut accuracies = Vec::new();
        for (f, held) in folds.iter().enumerate() {
            let mut split = DatasetSplits::default();
            for (i, s) in samples.iter().enumerate() {
                if held.contains(&i) {
                    split.private_test.push(s.clone());
                } else {
                    split.train.push(s.clone());
                }
            }
            let config = TrainConfig {
                epochs: a.epochs,
                batch_size: a.batch_size,
                lr: a.lr,
                seed: a.seed,
                augment: !a.no_augment,
                features: FeatureSource::None,
            };
            let (ckpt, _) = hybfer::model::fine_tune(&source, &split, &config)?;
            let mut model = ModelGraph::from_checkpoint(&ckpt)?;
            let acc = evaluate(std::slice::from_mut(&mut model), &split.private_test)?.accuracy;
            eprintln!("fold {}/{} accuracy={acc:.4}", f + 1, folds.len());
            accuracies.push(acc);
        }
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let std = (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        println!("accuracy_mean={mean:.4} accuracy_std={std:.4}");
        body["accuracies"] = json!(accuracies);
        body["accuracy_mean"] = json!(mean);
        body["accuracy_std"] = json!(std);
    }
    let text = serde_json::to_string_pretty(&body).expect("report serializes");
    fs::write(&report, text + "\n").map_err(|e| io_fail(&report, e))?;
    RunManifest::write(
        "cross-validate",
        json!({
            "folds": a.folds, "epochs": a.epochs, "batch_size": a.batch_size, "lr": a.lr,
            "augment": !a.no_augment, "plan_only": a.plan_only,
        }),
        Some(a.seed),
        &inputs,
        &[report],
        started,
    )?;
    Ok(())
}

fn predict(ctx: &Ctx, a: &PredictArgs) -> Outcome {
    let started = Utc::now();
    let out = ctx.out(&a.out);
    let mut inputs = a.checkpoint.clone();
    inputs.push(a.data.clone());
    check_distinct(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>(), &[&out])?;
    let mut models = load_models(&a.checkpoint)?;
    let classes = models[0].num_classes();
    let labels = label_set(classes)?;
    let samples: Vec<LabeledSample> = load(&a.data, classes)?.all().cloned().collect();
    let per_model = models
        .iter_mut()
        .map(|m| predict_probs(m, &samples))
        .collect::<Result<Vec<_>, _>>()?;
    let mut text = String::from("index,usage,label,predicted,expression");
    for c in 0..classes {
        text.push_str(&format!(",p{c}"));
    }
    text.push('\n');
    for (i, s) in samples.iter().enumerate() {
        let rows: Vec<&[f64]> = per_model.iter().map(|m| m[i].as_slice()).collect();
        let p = aggregate(&rows)?;
        let k = predict_label(&p);
        let name = labels.expression(k).map(|e| e.name()).unwrap_or("?");
        text.push_str(&format!("{i},{},{},{k},{name}", s.split.usage_tag(), s.label));
        for v in &p {
            text.push_str(&format!(",{v:.6}"));
        }
        text.push('\n');
    }
    fs::write(&out, text).map_err(|e| io_fail(&out, e))?;
    println!("predictions={} written to {}", samples.len(), out.display());
    RunManifest::write(
        "predict",
        json!({ "models": models.len(), "samples": samples.len() }),
        None,
        &inputs,
        &[out],
        started,
    )?;
    Ok(())
}

fn augment(ctx: &Ctx, a: &AugmentArgs) -> Outcome {
    let started = Utc::now();
    let out = ctx.out(&a.out);
    check_distinct(&[&a.data], &[&out])?;
    let data = load(&a.data, a.classes as usize)?;
    let root = Rng::new(a.seed);
    let rows = data
        .train
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let set = augment_ten(&s.image, &mut root.fork(i as u64))?;
            let mut rows = vec![s.clone()];
            rows.extend(set.images.into_iter().map(|image| LabeledSample {
                image: image.map(|v| v.clamp(0.0, 1.0)),
                label: s.label,
                split: Split::Train,
            }));
            Ok(rows)
        })
        .collect::<Result<Vec<_>, hybfer::Error>>()?;
    let rows: Vec<LabeledSample> = rows.into_iter().flatten().collect();
    write_csv(&out, &rows)?;
    println!("rows={} written to {}", rows.len(), out.display());
    RunManifest::write(
        "augment",
        json!({ "source_images": data.train.len(), "rows": rows.len() }),
        Some(a.seed),
        std::slice::from_ref(&a.data),
        &[out],
        started,
    )?;
    Ok(())
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> Outcome {
    let started = Utc::now();
    let out = ctx.out(&a.out);
    let classes = a.classes as usize;
    let mut rng = Rng::new(a.seed);
    let mut rows = Vec::new();
    for (n, split) in [(a.train, Split::Train), (a.public, Split::PublicTest), (a.private, Split::PrivateTest)] {
        rows.extend(synthetic_samples(n, classes, split, &mut rng));
    }
    write_csv(&out, &rows)?;
    println!("rows={} written to {}", rows.len(), out.display());
    RunManifest::write(
        "synth",
        json!({ "classes": classes, "train": a.train, "public": a.public, "private": a.private }),
        Some(a.seed),
        &[],
        &[out],
        started,
    )?;
    Ok(())
}

pub fn run(cli: Cli) -> Outcome {
    if let Some(d) = &cli.out_dir {
        fs::create_dir_all(d).map_err(|e| io_fail(d, e))?;
    }
    let ctx = Ctx { out_dir: cli.out_dir };
    match &cli.command {
        Command::Train(a) => train(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::FitCodebook(a) => fit_codebook(&ctx, a),
        Command::FineTune(a) => fine_tune(&ctx, a),
        Command::CrossValidate(a) => cross_validate(&ctx, a),
        Command::Predict(a) => predict(&ctx, a),
        Command::Augment(a) => augment(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
    }
}
