//! Dual-backbone transfer ensemble for five-grade diabetic retinopathy
//! classification.
//!
//! Two convolutional backbones (pretrained VGG16 and InceptionV3 in the full
//! configuration, or small seeded CNNs for offline work) have the earliest
//! fraction of their weight-bearing layers frozen. Each backbone's final
//! feature map is reduced by global average pooling, the pooled vectors are
//! concatenated, and a shared head (dense 256 + ReLU, dropout, dense +
//! softmax) produces class probabilities.
//!
//! The crate also carries the data pipeline (APTOS-style CSV manifests,
//! preprocessing, stratified splits), the Adam training loop, evaluation
//! metrics, and a repeated-simulation harness.

pub mod backbones;
pub mod dataset;
pub mod ensemble;
mod error;
mod seed;
pub mod experiments;
pub mod metrics;
pub mod synthetic;
pub mod training;

pub use backbones::{BackboneSpec, FreezePolicy};
pub use dataset::{DatasetManifest, ImageRecord, PreprocessedImage, Split};
pub use ensemble::{build_ensemble, EnsembleConfig, EnsembleModel, Mode};

pub use error::{Error, Result};
pub use experiments::{ComparisonTable, Protocol, RunAggregate};
pub use metrics::{compute_metrics, MetricsReport};
pub use training::{train, TrainConfig, TrainHistory};

/// Side length of the square network input.
pub const INPUT_SIZE: usize = 224;

/// Number of retinopathy grades.
pub const NUM_CLASSES: usize = 5;

/// Grade names indexed by the APTOS `diagnosis` code.
pub const DEFAULT_CLASS_NAMES: [&str; NUM_CLASSES] =
    ["No DR", "Mild DR", "Moderate DR", "Severe DR", "Proliferate DR"];

pub(crate) fn default_class_names() -> Vec<String> {
    DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect()
}
