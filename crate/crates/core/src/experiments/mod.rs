//! Repeated simulations and paired model comparisons.
//!
//! Run `i` of an experiment uses seed `base_seed + i` for everything random
//! in that run: the train/test split, the validation carve-out, weight
//! initialisation, batch order and dropout. Every configuration in a
//! comparison therefore sees the same train/test membership in run `i`.

mod figures;
mod plot;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{carve_validation, stratified_split, DatasetManifest, Split};
use crate::ensemble::{save_checkpoint_with_meta, CheckpointMeta, EnsembleConfig, EnsembleModel};
use crate::metrics::{compute_metrics_named, predict_labels, MetricsReport};
use crate::training::{train, TrainConfig, TrainHistory};
use crate::{Error, Result};

pub use figures::{emit_confusion, emit_curves, emit_figures};

/// Split and training settings shared by every run of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub train: TrainConfig,
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub n_runs: usize,
    pub base_seed: u64,
    /// Write `runs/<i>/checkpoint.ckpt` when an output directory is given.
    pub save_checkpoints: bool,
    /// Runs executed concurrently.
    pub parallel: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            test_fraction: 0.2,
            val_fraction: 0.1,
            n_runs: 20,
            base_seed: 0,
            save_checkpoints: true,
            parallel: 1,
        }
    }
}

impl Protocol {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_runs as u64).map(|i| self.base_seed.wrapping_add(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Path of the run's `history.json`, relative to the experiment
    /// directory, when one was written.
    pub history: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub accuracy: f64,
    pub top1_error_pct: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

/// Per-run reports plus mean and population standard deviation of accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub runs: Vec<RunSummary>,
    pub mean_accuracy: f64,
    /// Population standard deviation (divides by the number of runs).
    pub std_accuracy: f64,
    pub means: MetricMeans,
    #[serde(skip)]
    pub histories: Vec<TrainHistory>,
}

/// Mean computed as `x0 + mean(x - x0)`, which is exact when every value is
/// identical.
pub fn mean(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else { return f64::NAN };
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

impl RunAggregate {
    pub fn from_runs(runs: Vec<RunSummary>, histories: Vec<TrainHistory>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::InvalidConfig("an aggregate needs at least one run".into()));
        }
        let col = |f: fn(&MetricsReport) -> f64| runs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>();
        let acc = col(|m| m.accuracy);
        Ok(Self {
            mean_accuracy: mean(&acc),
            std_accuracy: population_std(&acc),
            means: MetricMeans {
                accuracy: mean(&acc),
                top1_error_pct: mean(&col(|m| m.top1_error_pct)),
                macro_precision: mean(&col(|m| m.macro_avg.precision)),
                macro_recall: mean(&col(|m| m.macro_avg.recall)),
                macro_f1: mean(&col(|m| m.macro_avg.f1)),
            },
            runs,
            histories,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Everything a single run produces.
pub struct RunOutput {
    pub model: EnsembleModel,
    pub manifest: DatasetManifest,
    pub history: TrainHistory,
    pub metrics: MetricsReport,
}

/// Split, build, train and evaluate on the test split, all seeded by `seed`.
pub fn run_once(ensemble: &EnsembleConfig, protocol: &Protocol, manifest: &DatasetManifest, seed: u64) -> Result<RunOutput> {
    let split = stratified_split(manifest, protocol.test_fraction, seed)?;
    let split = carve_validation(&split, protocol.val_fraction, seed)?;
    let mut model = EnsembleModel::build_variant(ensemble, seed)?;
    let cfg = TrainConfig { seed, ..protocol.train.clone() };
    let history = train(&mut model, &split, &cfg)?;
    let pred = predict_labels(&model, &split, Split::Test, cfg.batch_size)?;
    let metrics = compute_metrics_named(&pred.true_labels, &pred.pred_labels, &split.class_names)?;
    Ok(RunOutput { model, manifest: split, history, metrics })
}

fn write_run(out: &RunOutput, dir: &Path, save_checkpoint: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    out.metrics.write(dir)?;
    out.history.write(dir)?;
    out.manifest.save_json(&dir.join("manifest.json"))?;
    emit_figures(&out.history, &out.metrics, dir)?;
    if save_checkpoint {
        let meta = CheckpointMeta {
            class_names: out.manifest.class_names.clone(),
            metrics: Some(serde_json::to_value(&out.metrics)?),
        };
        save_checkpoint_with_meta(&out.model, &dir.join("checkpoint.ckpt"), &meta)?;
    }
    Ok(())
}

/// Runs the protocol once per seed in `seeds` and aggregates the test
/// metrics. With `out_dir`, writes `runs/<i>/…` and `aggregate.json`.
pub fn run_with_seeds(
    ensemble: &EnsembleConfig,
    protocol: &Protocol,
    manifest: &DatasetManifest,
    seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<RunAggregate> {
    ensemble.validate_variant()?;
    protocol.train.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("n_runs must be >= 1".into()));
    }
    let run = |i: usize| -> Result<(RunSummary, TrainHistory)> {
        let wrap = |e: Error| Error::Run { run: i, source: Box::new(e) };
        let out = run_once(ensemble, protocol, manifest, seeds[i]).map_err(wrap)?;
        let history_ref = match out_dir {
            Some(root) => {
                let rel = PathBuf::from("runs").join(i.to_string());
                write_run(&out, &root.join(&rel), protocol.save_checkpoints).map_err(wrap)?;
                Some(rel.join("history.json").to_string_lossy().replace('\\', "/"))
            }
            None => None,
        };
        log::info!("run {i} (seed {}): test accuracy {:.4}", seeds[i], out.metrics.accuracy);
        Ok((RunSummary { run: i, seed: seeds[i], metrics: out.metrics, history: history_ref }, out.history))
    };

    let results = if protocol.parallel > 1 {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<(RunSummary, TrainHistory)>>>> =
            Mutex::new((0..seeds.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..protocol.parallel.min(seeds.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= seeds.len() {
                        break;
                    }
                    let r = run(i);
                    slots.lock().expect("run slots poisoned")[i] = Some(r);
                });
            }
        });
        slots.into_inner().expect("run slots poisoned").into_iter().map(|r| r.expect("every run executed")).collect()
    } else {
        (0..seeds.len()).map(run).collect::<Vec<_>>()
    };

    let mut runs = Vec::with_capacity(seeds.len());
    let mut histories = Vec::with_capacity(seeds.len());
    for r in results {
        let (summary, history) = r?;
        runs.push(summary);
        histories.push(history);
    }
    let aggregate = RunAggregate::from_runs(runs, histories)?;
    if let Some(root) = out_dir {
        aggregate.write_json(&root.join("aggregate.json"))?;
    }
    Ok(aggregate)
}

/// `protocol.n_runs` runs with seeds `base_seed + i`.
pub fn run_repeated(
    ensemble: &EnsembleConfig,
    protocol: &Protocol,
    manifest: &DatasetManifest,
    out_dir: Option<&Path>,
) -> Result<RunAggregate> {
    run_with_seeds(ensemble, protocol, manifest, &protocol.seeds(), out_dir)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_name: String,
    pub mean_accuracy_pct: f64,
    pub std_accuracy_pct: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model_name,mean_accuracy_pct,std_accuracy_pct\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", csv_field(&r.model_name), r.mean_accuracy_pct, r.std_accuracy_pct));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A named model configuration for [`compare_models`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub ensemble: EnsembleConfig,
}

/// Evaluates every variant under the same seed schedule, so run `i` of each
/// variant uses the same split. Rows keep the order of `variants`.
pub fn compare_models(
    variants: &[Variant],
    protocol: &Protocol,
    manifest: &DatasetManifest,
    out_dir: Option<&Path>,
) -> Result<(ComparisonTable, Vec<RunAggregate>)> {
    if variants.is_empty() {
        return Err(Error::InvalidConfig("compare needs at least one model variant".into()));
    }
    let mut table = ComparisonTable::default();
    let mut aggregates = Vec::new();
    for v in variants {
        let dir = out_dir.map(|d| d.join(sanitize(&v.name)));
        let agg = run_repeated(&v.ensemble, protocol, manifest, dir.as_deref())?;
        table.rows.push(ComparisonRow {
            model_name: v.name.clone(),
            mean_accuracy_pct: 100.0 * agg.mean_accuracy,
            std_accuracy_pct: 100.0 * agg.std_accuracy,
        });
        aggregates.push(agg);
    }
    if let Some(d) = out_dir {
        let path = d.join("comparison.csv");
        std::fs::write(&path, table.to_csv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok((table, aggregates))
}

/// Directory name for a variant.
pub fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// The three configurations of the reference comparison: each backbone on
/// its own, then both fused.
pub fn reference_variants(base: &EnsembleConfig) -> Vec<Variant> {
    let single = |name: &str| EnsembleConfig { backbone_names: vec![name.to_string()], ..base.clone() };
    let [a, b] = [&base.backbone_names[0], &base.backbone_names[1]];
    vec![
        Variant { name: display_name(a), ensemble: single(a) },
        Variant { name: display_name(b), ensemble: single(b) },
        Variant { name: "Ensemble".into(), ensemble: base.clone() },
    ]
}

fn display_name(key: &str) -> String {
    match key {
        "vgg16" => "VGG16".into(),
        "inception_v3" => "InceptionV3".into(),
        other => other.to_string(),
    }
}
