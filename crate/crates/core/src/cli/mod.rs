//! Command-line front end.
//!
//! Settings resolve in this order, later entries winning: the named profile,
//! the `--config` file, `SRNAS_*` environment variables, then flags.

mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;

pub use config::{Profile, RunConfig};

/// Successful completion.
pub const EXIT_OK: i32 = 0;
/// A command failed while running.
pub const EXIT_RUNTIME: i32 = 1;
/// Bad flags, configuration or inputs.
pub const EXIT_USAGE: i32 = 2;

macro_rules! overrides {
    ($( $field:ident, $long:literal, $env:literal, $key:literal, $help:literal; )*) => {
        /// Settings shared by every command.
        #[derive(Debug, Clone, Default, Args)]
        pub struct Overrides {
            $(
                #[arg(long = $long, env = $env, global = true, help = $help)]
                pub $field: Option<String>,
            )*
        }

        impl Overrides {
            fn pairs(&self) -> Vec<(String, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push(($key.to_string(), v.clone()));
                    }
                )*
                out
            }
        }
    };
}

overrides! {
    seed, "seed", "SRNAS_SEED", "seed", "Root seed for every random stream";
    out, "out", "SRNAS_OUT", "out", "Output directory";
    data, "data", "SRNAS_DATA", "data", "Image source: synthetic:<seed> or dir:<path>";
    train_images, "train-images", "SRNAS_TRAIN_IMAGES", "train_images", "Synthetic training images";
    val_images, "val-images", "SRNAS_VAL_IMAGES", "val_images", "Synthetic validation images";
    image_size, "image-size", "SRNAS_IMAGE_SIZE", "image_size", "Synthetic HR image edge length";
    num_blocks, "N", "SRNAS_N", "N", "Densely connected blocks";
    mix_nodes, "M", "SRNAS_M", "M", "Mix nodes per block";
    num_ops, "K", "SRNAS_K", "K", "Candidate operations per edge";
    channels, "G", "SRNAS_G", "G", "Feature channels";
    scale, "scale", "SRNAS_SCALE", "scale", "Upscaling factor";
    ops, "ops", "SRNAS_OPS", "ops", "Comma-separated operation list";
    local_residual, "local-residual", "SRNAS_LOCAL_RESIDUAL", "local_residual", "Add each block input to its fused output (true/false)";
    alpha, "alpha", "SRNAS_ALPHA", "alpha", "Complexity penalty weight";
    child_lr, "child-lr", "SRNAS_CHILD_LR", "child_lr", "Shared-weight learning rate";
    controller_lr, "controller-lr", "SRNAS_CONTROLLER_LR", "controller_lr", "Controller learning rate";
    child_steps, "child-steps", "SRNAS_CHILD_STEPS", "child_steps", "Child steps per search epoch";
    controller_steps, "controller-steps", "SRNAS_CONTROLLER_STEPS", "controller_steps", "Controller steps per search epoch";
    epochs, "epochs", "SRNAS_EPOCHS", "epochs", "Search epochs";
    monte_carlo_samples, "monte-carlo-samples", "SRNAS_MONTE_CARLO_SAMPLES", "monte_carlo_samples", "Architectures averaged per child gradient";
    controller_batch, "controller-batch", "SRNAS_CONTROLLER_BATCH", "controller_batch", "Architectures per controller update";
    baseline_decay, "baseline-decay", "SRNAS_BASELINE_DECAY", "baseline_decay", "Reward moving-average decay";
    lr_halving_interval, "lr-halving-interval", "SRNAS_LR_HALVING_INTERVAL", "lr_halving_interval", "Child steps per learning-rate halving (0 = never)";
    pool, "pool", "SRNAS_POOL", "pool", "Candidates sampled for selection";
    reward, "reward", "SRNAS_REWARD", "reward", "Reward source: psnr or surrogate";
    surrogate_scale, "surrogate-scale", "SRNAS_SURROGATE_SCALE", "surrogate_scale", "Multiplier on the surrogate score";
    batch_size, "batch-size", "SRNAS_BATCH_SIZE", "batch_size", "Patches per child batch";
    patch_size, "patch-size", "SRNAS_PATCH_SIZE", "patch_size", "LR patch edge length";
    val_subset, "val-subset", "SRNAS_VAL_SUBSET", "val_subset", "Validation images per search reward";
    hidden, "hidden", "SRNAS_HIDDEN", "hidden", "Controller LSTM width";
    final_steps, "final-steps", "SRNAS_FINAL_STEPS", "final_steps", "Steps of final training";
    final_lr, "final-lr", "SRNAS_FINAL_LR", "final_lr", "Final-training learning rate";
    final_lr_halving_interval, "final-lr-halving-interval", "SRNAS_FINAL_LR_HALVING_INTERVAL", "final_lr_halving_interval", "Final-training steps per halving";
    eval_interval, "eval-interval", "SRNAS_EVAL_INTERVAL", "eval_interval", "Steps between validation passes";
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Named defaults: paper or desk.
    #[arg(long, env = "SRNAS_PROFILE", global = true, default_value = "desk")]
    pub profile: String,
    /// Flat key = value or JSON file of settings.
    #[arg(long, env = "SRNAS_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Omit timestamps so reruns produce identical files.
    #[arg(long, env = "SRNAS_DETERMINISTIC", global = true)]
    pub deterministic: bool,
    #[arg(long, global = true, conflicts_with = "no_fusion")]
    pub fusion: bool,
    #[arg(long = "no-fusion", global = true)]
    pub no_fusion: bool,
    /// Use the raw reward as the advantage.
    #[arg(long = "no-baseline", global = true)]
    pub no_baseline: bool,
    /// Disable flips and rotations of training patches.
    #[arg(long = "no-augment", global = true)]
    pub no_augment: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct ArchArgs {
    /// Decimal digest, one digit per mix block.
    #[arg(long)]
    pub digits: Option<String>,
    /// Local fusion gates as bits, e.g. 1011.
    #[arg(long = "local-gates")]
    pub local_gates: Option<String>,
    /// Global fusion gates as bits.
    #[arg(long = "global-gates")]
    pub global_gates: Option<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Alternate child and controller training, then select a candidate.
    Search,
    /// Search against the synthetic surrogate reward and compare with brute force.
    SurrogateSearch {
        /// Largest space enumerated for the brute-force comparison.
        #[arg(long, default_value_t = 1 << 20)]
        limit: u128,
    },
    /// Sample candidates from a controller checkpoint and pick the best.
    Sample {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Weight-bank checkpoint for PSNR rewards.
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Train one architecture from scratch.
    Train {
        #[command(flatten)]
        arch: ArchArgs,
    },
    /// Report PSNR as CSV.
    Eval {
        #[command(flatten)]
        arch: ArchArgs,
        /// Trained model checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Prediction image or directory of images.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Target image or directory matching `--pred`.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Dataset split: val or train.
        #[arg(long, default_value = "val")]
        split: String,
    },
    /// Parameter breakdown of an architecture.
    Count {
        #[command(flatten)]
        arch: ArchArgs,
        #[arg(long)]
        json: bool,
    },
    /// List every architecture of the space.
    Enumerate {
        #[arg(long, default_value_t = 1_000_000)]
        limit: u128,
    },
    /// Expand a decimal digest into op bits.
    Decode {
        #[command(flatten)]
        arch: ArchArgs,
        /// Print the block graph in DOT instead.
        #[arg(long)]
        dot: bool,
        /// Print one `{b,b,b}` line per mix block instead of JSON.
        #[arg(long)]
        braces: bool,
    },
}

#[derive(Debug, Clone, Parser)]
#[command(name = "srnas", version, about = "Architecture search for lightweight super-resolution networks")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::Validation(_)
            | Error::Length(_)
            | Error::Range(_)
            | Error::SpaceTooLarge { .. } => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::from(Error::Io(e))
    }
}

impl Common {
    /// Merges the profile, config file, environment and flags.
    pub fn resolve(&self) -> Result<RunConfig, Error> {
        let profile: Profile = self.profile.parse()?;
        let mut layers = Vec::new();
        if let Some(path) = &self.config {
            layers.push(config::read_config_file(path)?);
        }
        let mut flags = self.overrides.pairs();
        let mut set = |k: &str, v: &str| flags.push((k.to_string(), v.to_string()));
        if self.deterministic {
            set("deterministic", "true");
        }
        if self.fusion {
            set("fusion", "true");
        }
        if self.no_fusion {
            set("fusion", "false");
        }
        if self.no_baseline {
            set("baseline", "false");
        }
        if self.no_augment {
            set("augment", "false");
        }
        layers.push(flags);
        RunConfig::build(profile, &layers)
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match commands::dispatch(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

/// Entry point used by the binary.
pub fn main_exit() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
