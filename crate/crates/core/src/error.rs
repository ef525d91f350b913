use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("labels file {path}: {message}")]
    LabelsFile { path: PathBuf, message: String },

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("line {line}: diagnosis {value} is outside [0, {max}]")]
    LabelOutOfRange { line: u64, value: i64, max: usize },

    #[error("line {line}: duplicate id_code `{id}`")]
    DuplicateId { line: u64, id: String },

    #[error("no image file found for id_code `{id}` under {dir}")]
    MissingImage { id: String, dir: PathBuf },

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("unsupported pixel layout {layout}: convert the image to 8-bit 3-channel RGB first")]
    ChannelLayout { layout: String },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid fraction {name} = {value}: {reason}")]
    InvalidFraction { name: &'static str, value: f64, reason: &'static str },

    #[error("class {class} would receive 0 train records")]
    EmptyTrainClass { class: usize },

    #[error("split `{0}` is empty")]
    EmptySplit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown backbone `{name}`; registry keys are {known:?}")]
    UnknownBackbone { name: String, known: Vec<&'static str> },

    #[error("pretrained weights for `{name}` unavailable: {reason}")]
    WeightsUnavailable { name: String, reason: String },

    #[error("expected input of shape {expected}, got {got:?}")]
    Shape { expected: String, got: Vec<usize> },

    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("corrupt checkpoint {path}: {message}")]
    CorruptCheckpoint { path: PathBuf, message: String },

    #[error("run {run} failed: {source}")]
    Run { run: usize, source: Box<Error> },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    /// True when the failure stems from caller-supplied input (files,
    /// configuration, arguments) rather than from the computation itself.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::NonFiniteLoss { .. } | Error::Tensor(_) => false,
            Error::Run { source, .. } => source.is_input_error(),
            _ => true,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
