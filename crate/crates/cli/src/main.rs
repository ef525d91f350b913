mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Train and evaluate a two-backbone ensemble that grades diabetic
/// retinopathy from fundus photographs.
#[derive(Parser)]
#[command(name = "ensemble-dr", version)]
struct Cli {
    /// More log output (repeat for debug level). RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a labels file, split it and write a manifest snapshot.
    Prepare {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Manifest path (default: <output-dir>/manifest.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model and write checkpoint, history, metrics and figures.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Use the splits of an existing manifest snapshot.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Restore the epoch with the best validation accuracy at the end.
        #[arg(long)]
        keep_best_val: bool,
        /// Also write checkpoints/epoch_<n>.ckpt every N epochs.
        #[arg(long, value_name = "N")]
        checkpoint_every: Option<usize>,
    },
    /// Evaluate a checkpoint on one split of a manifest.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Manifest snapshot written by `prepare` or `train`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Split seed when the manifest is rebuilt from a labels file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "test")]
        split: ensemble_dr::Split,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
    },
    /// Repeated runs of several model variants under paired seeds.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n_runs: Option<usize>,
        #[arg(long)]
        base_seed: Option<u64>,
        /// Runs executed concurrently.
        #[arg(long, default_value_t = 1, value_name = "N")]
        parallel: usize,
        /// Skip writing per-run checkpoints.
        #[arg(long)]
        no_checkpoints: bool,
    },
    /// Print class probabilities for images as JSON lines.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
    },
    /// Render curves and the confusion heatmap from saved JSON outputs.
    Plot {
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Write a seeded synthetic five-class image set with labels.csv.
    Synth {
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 500)]
        n_images: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 224)]
        size: u32,
    },
}

#[derive(Args, Clone, Debug, Default)]
struct DataArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    labels_file: Option<PathBuf>,
    #[arg(long)]
    image_dir: Option<PathBuf>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default)]
struct ModelArgs {
    /// Comma-separated registry keys, e.g. `vgg16,inception_v3`.
    #[arg(long, value_delimiter = ',')]
    backbones: Option<Vec<String>>,
    #[arg(long)]
    freeze_fraction: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Force pretrained weights on or off.
    #[arg(long)]
    pretrained: Option<bool>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ensemble_dr::Error> for CliError {
    fn from(e: ensemble_dr::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Input(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(3),
            }
        }
    }
}
