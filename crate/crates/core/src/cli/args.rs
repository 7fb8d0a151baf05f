//! Command-line and config-file options. Every option is optional so the
//! same structs serve as CLI layer, file layer and resolved snapshot.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "stmforge", version, about = "Simulate STM lattice images and train autoencoders on them")]
pub struct Cli {
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; 1 gives bit-reproducible runs, 0 uses every core.
    #[arg(long, global = true, env = "STMFORGE_THREADS")]
    pub threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// TOML/JSON config file, a run manifest to replay, or a built-in
    /// training config name.
    #[arg(long, global = true)]
    pub config: Option<String>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Render noisy lattice images.
    Simulate(SimulateArgs),
    /// Cut normalised patches from images into an archive.
    Dataset(DatasetArgs),
    /// Train an autoencoder on a patch archive.
    Train(TrainArgs),
    /// Score a checkpoint on a patch archive.
    Eval(EvalArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Dataset(_) => "dataset",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
        }
    }
}

/// Fills every `None` in `self` from `fallback`.
pub trait Layered {
    fn or(self, fallback: Self) -> Self;
}

macro_rules! layered {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl Layered for $ty {
            fn or(self, fallback: Self) -> Self {
                $ty { $($field: self.$field.or(fallback.$field),)* }
            }
        }
    };
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Lattice type or `all`.
    #[arg(long)]
    pub lattice: Option<String>,
    /// Images per lattice type.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub lattice_constant: Option<f64>,
    /// Grid half-width in cells; defaults to just overfilling the canvas.
    #[arg(long)]
    pub extent: Option<u32>,
    #[arg(long)]
    pub psf_sigma: Option<f64>,
    #[arg(long)]
    pub brightness_falloff: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub use_floor: Option<bool>,
    #[arg(long)]
    pub gaussian: Option<f64>,
    #[arg(long)]
    pub poisson: Option<f64>,
    #[arg(long)]
    pub striation: Option<f64>,
    #[arg(long)]
    pub pos_jitter: Option<f64>,
    #[arg(long)]
    pub brightness_jitter: Option<f64>,
    /// Skip every noise stage.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub clean: Option<bool>,
}

layered!(SimulateArgs {
    lattice,
    count,
    lattice_constant,
    extent,
    psf_sigma,
    brightness_falloff,
    use_floor,
    gaussian,
    poisson,
    striation,
    pos_jitter,
    brightness_jitter,
    clean,
});

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetArgs {
    /// Directory of images (JSON sidecars, or plain PGMs).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Patch edge in pixels.
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Patches kept per image; all when absent.
    #[arg(long)]
    pub subsample: Option<usize>,
    /// Archive file name inside the output directory.
    #[arg(long)]
    pub archive: Option<PathBuf>,
}

layered!(DatasetArgs {
    input,
    patch,
    stride,
    subsample,
    archive,
});

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// `cae-a` or `cae-b`.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub archive: Option<PathBuf>,
    /// Built-in config to start from.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub patches_per_image: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub lr_decay: Option<bool>,
    /// Fraction of patches used for training.
    #[arg(long)]
    pub split: Option<f64>,
    /// Print the built-in config names and exit.
    #[arg(long)]
    #[serde(skip)]
    pub list_configs: bool,
}

impl Layered for TrainArgs {
    fn or(self, f: Self) -> Self {
        TrainArgs {
            arch: self.arch.or(f.arch),
            archive: self.archive.or(f.archive),
            preset: self.preset.or(f.preset),
            name: self.name.or(f.name),
            lr: self.lr.or(f.lr),
            batch: self.batch.or(f.batch),
            patches_per_image: self.patches_per_image.or(f.patches_per_image),
            epochs: self.epochs.or(f.epochs),
            lr_decay: self.lr_decay.or(f.lr_decay),
            split: self.split.or(f.split),
            list_configs: self.list_configs || f.list_configs,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub archive: Option<PathBuf>,
    /// Config name written to the metrics table.
    #[arg(long)]
    pub label: Option<String>,
    /// Evaluate a seeded subset of this many patches.
    #[arg(long)]
    pub max_patches: Option<usize>,
    /// Original/reconstruction image pairs to write.
    #[arg(long)]
    pub samples: Option<usize>,
}

layered!(EvalArgs {
    checkpoint,
    archive,
    label,
    max_patches,
    samples,
});

/// Config file layout; also the `config` block of a run manifest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub simulate: Option<SimulateArgs>,
    pub dataset: Option<DatasetArgs>,
    pub train: Option<TrainArgs>,
    pub eval: Option<EvalArgs>,
}
