use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ensemble_dr::backbones::has_pretrained_weights;
use ensemble_dr::dataset::{carve_validation, load_image, load_manifest, stratified_split};
use ensemble_dr::ensemble::{load_checkpoint_with_meta, save_checkpoint, save_checkpoint_with_meta, CheckpointMeta};
use ensemble_dr::experiments::{compare_models, emit_confusion, emit_curves, emit_figures, reference_variants, Protocol};
use ensemble_dr::metrics::{argmax_rows, compute_metrics_named, predict_images, predict_labels};
use ensemble_dr::synthetic::{generate, SyntheticSpec};
use ensemble_dr::training::train_with;
use ensemble_dr::{
    DatasetManifest, EnsembleConfig, EnsembleModel, MetricsReport, Split, TrainConfig, TrainHistory,
    DEFAULT_CLASS_NAMES,
};
use serde_json::json;

use crate::config::RunConfigFile;
use crate::{CliError, Command, DataArgs, ModelArgs};

const DEFAULT_OUTPUT_DIR: &str = "ensemble-dr-out";

pub fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Prepare { data, seed, out } => prepare(&data, seed, out),
        Command::Train { data, model, manifest, keep_best_val, checkpoint_every } => {
            train(&data, &model, manifest.as_deref(), keep_best_val, checkpoint_every)
        }
        Command::Evaluate { checkpoint, data, manifest, seed, split, batch_size } => {
            evaluate(&checkpoint, &data, manifest.as_deref(), seed, split, batch_size)
        }
        Command::Compare { data, model, n_runs, base_seed, parallel, no_checkpoints } => {
            compare(&data, &model, n_runs, base_seed, parallel, !no_checkpoints)
        }
        Command::Predict { checkpoint, images, batch_size } => predict(&checkpoint, &images, batch_size),
        Command::Plot { history, metrics, output_dir } => plot(history.as_deref(), metrics.as_deref(), &output_dir),
        Command::Synth { output_dir, n_images, seed, size } => {
            let spec = SyntheticSpec { n_images, seed, size, ..SyntheticSpec::default() };
            let data = generate(&output_dir, &spec)?;
            println!("wrote {} images to {}", data.manifest.len(), data.image_dir.display());
            println!("labels: {}", data.labels_file.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Config file merged with command-line overrides.
struct Settings {
    file: RunConfigFile,
    data: DataArgs,
}

impl Settings {
    fn load(data: &DataArgs) -> Result<Self, CliError> {
        Ok(Self { file: RunConfigFile::load_optional(data.config.as_deref())?, data: data.clone() })
    }

    fn labels_and_images(&self) -> Result<(PathBuf, PathBuf), CliError> {
        let labels = self.data.labels_file.clone().or_else(|| self.file.dataset.labels_file.clone());
        let images = self.data.image_dir.clone().or_else(|| self.file.dataset.image_dir.clone());
        match (labels, images) {
            (Some(l), Some(i)) => Ok((l, i)),
            _ => Err(CliError::Input(
                "a labels file and image directory are required (--labels-file/--image-dir or the config's dataset section)"
                    .into(),
            )),
        }
    }

    fn test_fraction(&self) -> f64 {
        self.data.test_fraction.or(self.file.dataset.test_fraction).unwrap_or(Protocol::default().test_fraction)
    }

    fn val_fraction(&self) -> f64 {
        self.data.val_fraction.or(self.file.dataset.val_fraction).unwrap_or(Protocol::default().val_fraction)
    }

    fn output_dir(&self) -> PathBuf {
        self.data
            .output_dir
            .clone()
            .or_else(|| self.file.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    fn train_config(&self, m: &ModelArgs) -> TrainConfig {
        let mut cfg = self.file.train.clone().unwrap_or_default();
        if let Some(v) = m.epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = m.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = m.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = m.seed {
            cfg.seed = v;
        }
        cfg
    }

    fn ensemble_config(&self, m: &ModelArgs) -> EnsembleConfig {
        let mut cfg = self.file.ensemble.clone().unwrap_or_default();
        if let Some(names) = &m.backbones {
            cfg.backbone_names = names.iter().map(|s| s.trim().to_string()).collect();
            // Test backbones have no published weights, so choosing them
            // implies random initialisation unless asked otherwise.
            cfg.pretrained = cfg.backbone_names.iter().all(|n| has_pretrained_weights(n));
        }
        if let Some(v) = m.pretrained {
            cfg.pretrained = v;
        }
        if let Some(v) = m.freeze_fraction {
            cfg.freeze_fraction = v;
        }
        if let Some(v) = m.dropout {
            cfg.dropout_rate = v;
        }
        cfg
    }

    /// Loads the labels file and assigns test and validation splits.
    fn split_manifest(&self, seed: u64) -> Result<DatasetManifest, CliError> {
        let (labels, images) = self.labels_and_images()?;
        let class_names: Vec<String> = DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect();
        let manifest = load_manifest(&labels, &images, &class_names)?;
        let split = stratified_split(&manifest, self.test_fraction(), seed)?;
        Ok(carve_validation(&split, self.val_fraction(), seed)?)
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))
}

fn print_split_table(m: &DatasetManifest) {
    let counts = [Split::Train, Split::Val, Split::Test].map(|s| m.split_counts(s));
    println!("{:<16} {:>7} {:>7} {:>7} {:>7}", "class", "total", "train", "val", "test");
    for (k, name) in m.class_names.iter().enumerate() {
        println!(
            "{:<16} {:>7} {:>7} {:>7} {:>7}",
            name, m.class_counts[k], counts[0][k], counts[1][k], counts[2][k]
        );
    }
    let sums = counts.map(|c| c.iter().sum::<usize>());
    println!("{:<16} {:>7} {:>7} {:>7} {:>7}", "total", m.len(), sums[0], sums[1], sums[2]);
}

fn prepare(data: &DataArgs, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExitCode, CliError> {
    let s = Settings::load(data)?;
    let seed = seed.unwrap_or_else(|| s.file.train.as_ref().map_or(0, |t| t.seed));
    let manifest = s.split_manifest(seed)?;
    let path = out.unwrap_or_else(|| s.output_dir().join("manifest.json"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    manifest.save_json(&path)?;
    print_split_table(&manifest);
    println!("manifest: {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn evaluate_split(
    model: &EnsembleModel,
    manifest: &DatasetManifest,
    split: Split,
    batch_size: usize,
) -> Result<MetricsReport, CliError> {
    let pred = predict_labels(model, manifest, split, batch_size)?;
    Ok(compute_metrics_named(&pred.true_labels, &pred.pred_labels, &manifest.class_names)?)
}

fn print_metrics(r: &MetricsReport) {
    println!("accuracy        {:.4}", r.accuracy);
    println!("top-1 error (%) {:.2}", r.top1_error_pct);
    println!("precision       {:.4}", r.macro_avg.precision);
    println!("recall          {:.4}", r.macro_avg.recall);
    println!("f1              {:.4}", r.macro_avg.f1);
}

fn train(
    data: &DataArgs,
    m: &ModelArgs,
    manifest_path: Option<&Path>,
    keep_best_val: bool,
    checkpoint_every: Option<usize>,
) -> Result<ExitCode, CliError> {
    let s = Settings::load(data)?;
    let mut tc = s.train_config(m);
    tc.keep_best_val |= keep_best_val;
    tc.validate()?;
    let ec = s.ensemble_config(m);
    ec.validate_variant()?;
    if checkpoint_every == Some(0) {
        return Err(CliError::Input("--checkpoint-every must be >= 1".into()));
    }
    let manifest = match manifest_path {
        Some(p) => {
            let m = DatasetManifest::load_json(p)?;
            m.validate(true)?;
            m
        }
        None => s.split_manifest(tc.seed)?,
    };
    let out = s.output_dir();
    create_dir(&out)?;
    manifest.save_json(&out.join("manifest.json"))?;

    let mut model = EnsembleModel::build_variant(&ec, tc.seed)?;
    let history = train_with(&mut model, &manifest, &tc, |end| {
        if let Some(n) = checkpoint_every {
            if end.epoch % n == 0 {
                let dir = out.join("checkpoints");
                std::fs::create_dir_all(&dir).map_err(|e| ensemble_dr::Error::Io { path: dir.clone(), source: e })?;
                save_checkpoint(end.model, &dir.join(format!("epoch_{:03}.ckpt", end.epoch)))?;
            }
        }
        Ok(())
    })?;
    history.write(&out)?;
    emit_curves(&history, &out)?;

    let mut meta = CheckpointMeta { class_names: manifest.class_names.clone(), metrics: None };
    if manifest.indices(Split::Test).is_empty() {
        println!("no test split; skipping evaluation");
    } else {
        let report = evaluate_split(&model, &manifest, Split::Test, tc.batch_size)?;
        report.write(&out)?;
        emit_confusion(&report, &out)?;
        print_metrics(&report);
        meta.metrics = Some(serde_json::to_value(&report).map_err(|e| CliError::Runtime(e.to_string()))?);
    }
    save_checkpoint_with_meta(&model, &out.join("checkpoint.ckpt"), &meta)?;
    println!("outputs: {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn evaluate(
    checkpoint: &Path,
    data: &DataArgs,
    manifest_path: Option<&Path>,
    seed: Option<u64>,
    split: Split,
    batch_size: usize,
) -> Result<ExitCode, CliError> {
    if batch_size == 0 {
        return Err(CliError::Input("--batch-size must be >= 1".into()));
    }
    let s = Settings::load(data)?;
    let (model, _) = load_checkpoint_with_meta(checkpoint)?;
    let manifest = match manifest_path {
        Some(p) => DatasetManifest::load_json(p)?,
        None => {
            let seed = seed.unwrap_or_else(|| s.file.train.as_ref().map_or(model.init_seed(), |t| t.seed));
            s.split_manifest(seed)?
        }
    };
    if manifest.indices(split).is_empty() {
        return Err(CliError::Input(format!("split `{split}` is empty")));
    }
    let report = evaluate_split(&model, &manifest, split, batch_size)?;
    let out = data.output_dir.clone().unwrap_or_else(|| {
        checkpoint.parent().unwrap_or(Path::new(".")).join(format!("eval_{split}"))
    });
    create_dir(&out)?;
    report.write(&out)?;
    emit_confusion(&report, &out)?;
    print_metrics(&report);
    println!("outputs: {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn compare(
    data: &DataArgs,
    m: &ModelArgs,
    n_runs: Option<usize>,
    base_seed: Option<u64>,
    parallel: usize,
    save_checkpoints: bool,
) -> Result<ExitCode, CliError> {
    let s = Settings::load(data)?;
    let defaults = Protocol::default();
    let protocol = Protocol {
        train: s.train_config(m),
        test_fraction: s.test_fraction(),
        val_fraction: s.val_fraction(),
        n_runs: n_runs.or(s.file.experiment.n_runs).unwrap_or(defaults.n_runs),
        base_seed: base_seed.or(s.file.experiment.base_seed).unwrap_or(defaults.base_seed),
        save_checkpoints,
        parallel: parallel.max(1),
    };
    protocol.train.validate()?;
    let variants = match &s.file.variants {
        Some(v) if m.backbones.is_none() => v.clone(),
        _ => {
            let base = s.ensemble_config(m);
            base.validate()?;
            reference_variants(&base)
        }
    };
    let (labels, images) = s.labels_and_images()?;
    let class_names: Vec<String> = DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect();
    let manifest = load_manifest(&labels, &images, &class_names)?;
    let out = s.output_dir();
    create_dir(&out)?;
    let (table, _) = compare_models(&variants, &protocol, &manifest, Some(&out))?;
    println!("{:<16} {:>10} {:>10}", "model", "mean acc %", "std %");
    for r in &table.rows {
        println!("{:<16} {:>10.2} {:>10.2}", r.model_name, r.mean_accuracy_pct, r.std_accuracy_pct);
    }
    println!("table: {}", out.join("comparison.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn predict(checkpoint: &Path, images: &[PathBuf], batch_size: usize) -> Result<ExitCode, CliError> {
    if batch_size == 0 {
        return Err(CliError::Input("--batch-size must be >= 1".into()));
    }
    let (model, meta) = load_checkpoint_with_meta(checkpoint)?;
    let names: Vec<String> = if meta.class_names.len() == model.config().num_classes {
        meta.class_names
    } else {
        DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    };
    let mut failed = false;
    for chunk in images.chunks(batch_size) {
        let loaded: Vec<_> = chunk.iter().map(|p| load_image(p)).collect();
        let ok: Vec<_> = loaded.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
        let mut probs = predict_images(&model, &ok)?.into_iter();
        for (path, result) in chunk.iter().zip(&loaded) {
            let line = match result {
                Ok(_) => {
                    let p = probs.next().expect("one probability row per decoded image");
                    let k = argmax_rows(std::slice::from_ref(&p))[0];
                    json!({"path": path, "class": names[k], "class_index": k, "probs": p})
                }
                Err(e) => {
                    failed = true;
                    json!({"path": path, "error": e.to_string()})
                }
            };
            println!("{line}");
        }
    }
    Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn plot(history: Option<&Path>, metrics: Option<&Path>, out: &Path) -> Result<ExitCode, CliError> {
    if history.is_none() && metrics.is_none() {
        return Err(CliError::Input("nothing to plot: pass --history and/or --metrics".into()));
    }
    create_dir(out)?;
    let history = history.map(TrainHistory::read_json).transpose()?;
    let report = metrics.map(MetricsReport::read_json).transpose()?;
    let written = match (&history, &report) {
        (Some(h), Some(r)) => emit_figures(h, r, out)?,
        (Some(h), None) => emit_curves(h, out)?,
        (None, Some(r)) => vec![emit_confusion(r, out)?],
        (None, None) => unreachable!(),
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}
