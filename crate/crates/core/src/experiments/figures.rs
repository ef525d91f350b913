use std::path::{Path, PathBuf};

use super::plot::{heatmap, line_chart, Series, BLUE, ORANGE};
use crate::metrics::MetricsReport;
use crate::training::TrainHistory;
use crate::{Error, Result};

fn save(img: image::RgbImage, path: PathBuf) -> Result<PathBuf> {
    img.save(&path).map_err(|e| Error::Image { path: path.clone(), message: e.to_string() })?;
    Ok(path)
}

fn ensure_dir(out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))
}

/// Writes `accuracy_curve.png` and `loss_curve.png`.
pub fn emit_curves(history: &TrainHistory, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if history.is_empty() {
        return Err(Error::InvalidConfig("cannot plot an empty history".into()));
    }
    ensure_dir(out_dir)?;
    let some = |v: &[f64]| v.iter().copied().map(Some).collect::<Vec<_>>();
    let acc = line_chart(
        "Training and validation accuracy",
        "accuracy",
        &[
            Series { label: "train", color: BLUE, values: some(&history.train_accuracy) },
            Series { label: "validation", color: ORANGE, values: history.val_accuracy.clone() },
        ],
    );
    let loss = line_chart(
        "Training and validation loss",
        "loss",
        &[
            Series { label: "train", color: BLUE, values: some(&history.train_loss) },
            Series { label: "validation", color: ORANGE, values: history.val_loss.clone() },
        ],
    );
    Ok(vec![save(acc, out_dir.join("accuracy_curve.png"))?, save(loss, out_dir.join("loss_curve.png"))?])
}

/// Writes `confusion_matrix.png`.
pub fn emit_confusion(report: &MetricsReport, out_dir: &Path) -> Result<PathBuf> {
    if report.confusion.is_empty() {
        return Err(Error::InvalidConfig("cannot plot an empty confusion matrix".into()));
    }
    ensure_dir(out_dir)?;
    let img = heatmap("Confusion matrix", &report.class_names, &report.class_names, &report.confusion);
    save(img, out_dir.join("confusion_matrix.png"))
}

/// Training curves plus the confusion heatmap.
pub fn emit_figures(history: &TrainHistory, report: &MetricsReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = emit_curves(history, out_dir)?;
    paths.push(emit_confusion(report, out_dir)?);
    Ok(paths)
}
