use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-epoch curves. Validation entries are `None` when the run had no
/// validation split. Wall-clock times are kept out of the JSON form so that
/// reruns produce byte-identical files; see [`TrainHistory::timing_json`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_loss: Vec<Option<f64>>,
    pub val_accuracy: Vec<Option<f64>>,
    #[serde(skip)]
    pub wall_time_secs: Vec<f64>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_loss.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for i in 0..self.epochs() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                self.train_loss[i],
                self.train_accuracy[i],
                cell(self.val_loss[i]),
                cell(self.val_accuracy[i])
            );
        }
        out
    }

    pub fn timing_json(&self) -> serde_json::Value {
        serde_json::json!({ "wall_time_secs": self.wall_time_secs })
    }

    /// Writes `history.json` and `history.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = dir.join("history.json");
        std::fs::write(&json, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("history.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let h: Self = serde_json::from_str(&text)?;
        let n = h.train_loss.len();
        if h.train_accuracy.len() != n || h.val_loss.len() != n || h.val_accuracy.len() != n {
            return Err(Error::InvalidConfig(format!("{}: history lists differ in length", path.display())));
        }
        Ok(h)
    }
}
