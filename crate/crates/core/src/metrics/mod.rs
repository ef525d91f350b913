//! Classification metrics: confusion matrix, per-class and averaged
//! precision/recall/F1, accuracy and top-1 error.
//!
//! Undefined ratios (no predictions for a class, or no support) are reported
//! as 0. The canonical single-number precision/recall/F1 is the macro
//! (unweighted) average; micro and support-weighted averages are also
//! reported.

mod predict;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use predict::{argmax_rows, predict_images, predict_labels, Predictions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_names: Vec<String>,
    pub total: u64,
    pub accuracy: f64,
    pub top1_error_pct: f64,
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    #[serde(rename = "micro")]
    pub micro_avg: Averages,
    #[serde(rename = "weighted")]
    pub weighted_avg: Averages,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
}

/// `confusion[i][j]` counts samples of true class `i` predicted as `j`.
pub fn confusion_matrix(true_labels: &[usize], pred_labels: &[usize], num_classes: usize) -> Result<Vec<Vec<u64>>> {
    if true_labels.len() != pred_labels.len() {
        return Err(Error::InvalidConfig(format!(
            "label lists differ in length: {} true vs {} predicted",
            true_labels.len(),
            pred_labels.len()
        )));
    }
    let mut m = vec![vec![0u64; num_classes]; num_classes];
    for (i, (&t, &p)) in true_labels.iter().zip(pred_labels).enumerate() {
        if t >= num_classes || p >= num_classes {
            return Err(Error::InvalidConfig(format!(
                "sample {i}: label pair ({t}, {p}) outside [0, {num_classes})"
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Metrics over the five grades with the default class names.
pub fn compute_metrics(true_labels: &[usize], pred_labels: &[usize]) -> Result<MetricsReport> {
    compute_metrics_named(true_labels, pred_labels, &crate::default_class_names())
}

pub fn compute_metrics_named(true_labels: &[usize], pred_labels: &[usize], class_names: &[String]) -> Result<MetricsReport> {
    let k = class_names.len();
    let confusion = confusion_matrix(true_labels, pred_labels, k)?;
    Ok(MetricsReport::from_confusion(confusion, class_names.to_vec()))
}

impl MetricsReport {
    pub fn from_confusion(confusion: Vec<Vec<u64>>, class_names: Vec<String>) -> Self {
        let k = confusion.len();
        let total: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let mut per_class = Vec::with_capacity(k);
        for c in 0..k {
            let tp = confusion[c][c];
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            per_class.push(ClassMetrics { precision, recall, f1: harmonic(precision, recall), support });
        }
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
        let macro_avg = Averages { precision: mean(|m| m.precision), recall: mean(|m| m.recall), f1: mean(|m| m.f1) };
        let weighted = |f: fn(&ClassMetrics) -> f64| {
            if total == 0 {
                0.0
            } else {
                per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
            }
        };
        let weighted_avg =
            Averages { precision: weighted(|m| m.precision), recall: weighted(|m| m.recall), f1: weighted(|m| m.f1) };
        // Single-label: micro precision = micro recall = accuracy.
        let accuracy = ratio(correct, total);
        let micro_avg = Averages { precision: accuracy, recall: accuracy, f1: harmonic(accuracy, accuracy) };
        Self {
            class_names,
            total,
            accuracy,
            top1_error_pct: 100.0 * (1.0 - accuracy),
            per_class,
            macro_avg,
            micro_avg,
            weighted_avg,
            confusion,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.confusion.len()
    }

    /// 5×5 grid with a class-name header row and column.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in &self.class_names {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Writes `metrics.json` and `confusion.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = dir.join("metrics.json");
        std::fs::write(&json, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("confusion.csv");
        std::fs::write(&csv, self.confusion_csv()).map_err(|e| Error::io(&csv, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let labels: Vec<usize> = (0..5).flat_map(|c| [c, c]).collect();
        let r = compute_metrics(&labels, &labels).unwrap();
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 2 } else { 0 });
            }
        }
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.top1_error_pct, 0.0);
        assert_eq!(r.macro_avg, Averages { precision: 1.0, recall: 1.0, f1: 1.0 });
    }

    #[test]
    fn empty_lists() {
        let r = compute_metrics(&[], &[]).unwrap();
        assert_eq!(r.confusion, vec![vec![0; 5]; 5]);
        assert_eq!(r.total, 0);
        assert_eq!(r.macro_avg.f1, 0.0);
    }

    #[test]
    fn hand_counted_confusion() {
        let m = confusion_matrix(&[0, 0, 1], &[0, 1, 1], 5).unwrap();
        assert_eq!(m[0], vec![1, 1, 0, 0, 0]);
        assert_eq!(m[1], vec![0, 1, 0, 0, 0]);
        assert!(m[2..].iter().flatten().all(|&v| v == 0));
        let r = compute_metrics(&[0, 0, 1], &[0, 1, 1]).unwrap();
        // class 0: P = 1/1, R = 1/2; class 1: P = 1/2, R = 1/1.
        assert_eq!(r.per_class[0].precision, 1.0);
        assert_eq!(r.per_class[0].recall, 0.5);
        assert_eq!(r.per_class[1].precision, 0.5);
        assert!((r.per_class[1].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.macro_avg.f1 - (4.0 / 3.0) / 5.0).abs() < 1e-15);
        assert!((r.weighted_avg.recall - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(confusion_matrix(&[0, 1], &[0], 5).is_err());
        assert!(confusion_matrix(&[5], &[0], 5).is_err());
        assert!(confusion_matrix(&[0], &[7], 5).is_err());
    }

    #[test]
    fn top1_error_from_accuracy() {
        // 964 of 1000 correct.
        let truth = vec![0usize; 1000];
        let mut pred = vec![0usize; 1000];
        pred[..36].iter_mut().for_each(|p| *p = 1);
        let r = compute_metrics(&truth, &pred).unwrap();
        assert_eq!(r.accuracy, 0.964);
        assert!((r.top1_error_pct - 3.6).abs() < 1e-9);
        // Rounded to whole percent this is the 96 / 4.0 pairing.
        assert_eq!((100.0 * r.accuracy).round(), 96.0);
        assert_eq!(r.top1_error_pct.round(), 4.0);
    }

    #[test]
    fn csv_and_json_outputs() {
        let r = compute_metrics(&[0, 1, 2, 3, 4], &[0, 1, 2, 3, 3]).unwrap();
        let csv = r.confusion_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "true\\predicted,No DR,Mild DR,Moderate DR,Severe DR,Proliferate DR");
        assert_eq!(lines[5], "Proliferate DR,0,0,0,1,0");
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        let back = MetricsReport::read_json(&dir.path().join("metrics.json")).unwrap();
        assert_eq!(back, r);
        let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
        assert!(raw["macro"]["f1"].is_number() && raw["micro"]["precision"].is_number());
    }
}
