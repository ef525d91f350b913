//! JSON run configuration. Relative paths are resolved against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use ensemble_dr::experiments::Variant;
use ensemble_dr::{EnsembleConfig, TrainConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub labels_file: Option<PathBuf>,
    pub image_dir: Option<PathBuf>,
    pub test_fraction: Option<f64>,
    pub val_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub n_runs: Option<usize>,
    pub base_seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub dataset: DatasetSection,
    pub ensemble: Option<EnsembleConfig>,
    pub train: Option<TrainConfig>,
    pub experiment: ExperimentSection,
    pub output_dir: Option<PathBuf>,
    pub variants: Option<Vec<Variant>>,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        resolve(&mut cfg.dataset.labels_file);
        resolve(&mut cfg.dataset.image_dir);
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"dataset": {"labels": "x.csv"}}"#).unwrap();
        let err = RunConfigFile::load(&path).unwrap_err().to_string();
        assert!(err.contains("`labels`"), "{err}");
        std::fs::write(&path, r#"{"train": {"epochs": 3}}"#).unwrap();
        assert!(RunConfigFile::load(&path).unwrap_err().to_string().contains("`epochs`"));
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"dataset": {"labels_file": "data/labels.csv", "image_dir": "/abs/img"}, "output_dir": "out"}"#)
            .unwrap();
        let cfg = RunConfigFile::load(&path).unwrap();
        assert_eq!(cfg.dataset.labels_file.unwrap(), dir.path().join("data/labels.csv"));
        assert_eq!(cfg.dataset.image_dir.unwrap(), PathBuf::from("/abs/img"));
        assert_eq!(cfg.output_dir.unwrap(), dir.path().join("out"));
    }
}
