//! Labeled image inventory, preprocessing, stratified splitting and batching.

mod batch;
mod manifest;
mod preprocess;
mod split;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use batch::{batch_iterator, images_to_tensor, one_hot, Batch, BatchIter};
pub use manifest::load_manifest;
pub use preprocess::{load_image, preprocess_dynamic, preprocess_image, PreprocessedImage};
pub use split::{allocate_largest_remainder, carve_validation, stratified_split};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Split {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(crate::Error::InvalidConfig(format!(
                "unknown split `{other}` (expected train, val, test or unassigned)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    #[serde(rename = "id")]
    pub image_id: String,
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

/// Fractions that produced the current split assignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub test: Option<f64>,
    pub val: Option<f64>,
}

/// Labeled image inventory. Records are kept sorted by `image_id`, and the
/// snapshot written by [`DatasetManifest::save_json`] is sufficient to
/// reconstruct a split exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<ImageRecord>,
    pub class_names: Vec<String>,
    pub class_counts: Vec<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub fractions: SplitFractions,
}

impl DatasetManifest {
    /// Builds a manifest from records, sorting them by id and computing the
    /// per-class counts.
    pub fn from_records(mut records: Vec<ImageRecord>, class_names: Vec<String>) -> crate::Result<Self> {
        validate_class_names(&class_names)?;
        records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let mut class_counts = vec![0; class_names.len()];
        for r in &records {
            if r.label >= class_names.len() {
                return Err(crate::Error::InvalidManifest(format!(
                    "record `{}` has label {} outside [0, {}]",
                    r.image_id,
                    r.label,
                    class_names.len() - 1
                )));
            }
            class_counts[r.label] += 1;
        }
        Ok(Self { records, class_names, class_counts, seed: None, fractions: SplitFractions::default() })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks the structural invariants. With `check_files`, also requires
    /// every record's path to be an existing file.
    pub fn validate(&self, check_files: bool) -> crate::Result<()> {
        validate_class_names(&self.class_names)?;
        if self.class_counts.len() != self.class_names.len() {
            return Err(crate::Error::InvalidManifest("class_counts length differs from class_names".into()));
        }
        let mut counts = vec![0; self.class_names.len()];
        let mut seen = std::collections::HashSet::new();
        for r in &self.records {
            if r.label >= counts.len() {
                return Err(crate::Error::InvalidManifest(format!(
                    "record `{}` has label {} outside [0, {}]",
                    r.image_id,
                    r.label,
                    counts.len() - 1
                )));
            }
            if !seen.insert(r.image_id.as_str()) {
                return Err(crate::Error::InvalidManifest(format!("duplicate id `{}`", r.image_id)));
            }
            counts[r.label] += 1;
            if check_files && !r.path.is_file() {
                return Err(crate::Error::InvalidManifest(format!(
                    "image for `{}` not found at {}",
                    r.image_id,
                    r.path.display()
                )));
            }
        }
        if counts != self.class_counts {
            return Err(crate::Error::InvalidManifest(format!(
                "class_counts {:?} do not match the records ({:?})",
                self.class_counts, counts
            )));
        }
        Ok(())
    }

    /// Indices of the records assigned to `split`, in manifest order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.records.iter().enumerate().filter(|(_, r)| r.split == split).map(|(i, _)| i).collect()
    }

    /// Per-class record counts within `split`.
    pub fn split_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for r in self.records.iter().filter(|r| r.split == split) {
            counts[r.label] += 1;
        }
        counts
    }

    pub fn save_json(&self, path: &std::path::Path) -> crate::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| crate::Error::io(path, e))
    }

    pub fn load_json(path: &std::path::Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        let manifest: Self = serde_json::from_str(&text)?;
        manifest.validate(false)?;
        Ok(manifest)
    }
}

fn validate_class_names(names: &[String]) -> crate::Result<()> {
    if names.len() != crate::NUM_CLASSES {
        return Err(crate::Error::InvalidManifest(format!(
            "expected {} class names, got {}",
            crate::NUM_CLASSES,
            names.len()
        )));
    }
    let distinct: std::collections::HashSet<_> = names.iter().collect();
    if distinct.len() != names.len() {
        return Err(crate::Error::InvalidManifest(format!("class names are not distinct: {names:?}")));
    }
    Ok(())
}
