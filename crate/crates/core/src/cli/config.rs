//! Run configuration and its layering: profile defaults, then a config
//! file, then environment variables, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::arch_space::{num_mix_blocks, OpKind, SearchSpaceConfig};
use crate::error::{Error, Result};
use crate::sr_data::{DataSource, SynthSpec};
use crate::trainer::{RewardMode, TrainerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::Config(format!("unknown profile {other:?} (expected paper or desk)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub train_images: usize,
    pub val_images: usize,
    pub image_size: usize,
}

/// Everything a command needs, merged from all configuration layers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub space: SearchSpaceConfig,
    pub trainer: TrainerConfig,
    pub data: String,
    pub synth: SynthConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub deterministic: bool,
    /// Whether `M` was set explicitly by any layer above the profile.
    #[serde(skip)]
    pub mix_nodes_explicit: bool,
}

/// Keys accepted in config files and as flags (flag names use dashes).
pub const KEYS: &[&str] = &[
    "seed",
    "out",
    "deterministic",
    "data",
    "train_images",
    "val_images",
    "image_size",
    "N",
    "M",
    "K",
    "G",
    "scale",
    "fusion",
    "ops",
    "local_residual",
    "alpha",
    "child_lr",
    "controller_lr",
    "child_steps",
    "controller_steps",
    "epochs",
    "monte_carlo_samples",
    "controller_batch",
    "baseline_decay",
    "baseline",
    "lr_halving_interval",
    "pool",
    "reward",
    "surrogate_scale",
    "batch_size",
    "patch_size",
    "val_subset",
    "augment",
    "hidden",
    "final_steps",
    "final_lr",
    "final_lr_halving_interval",
    "eval_interval",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn op_kind(name: &str) -> Result<OpKind> {
    OpKind::DEFAULT_ORDER
        .into_iter()
        .find(|op| op.name() == name || op.short() == name)
        .ok_or_else(|| Error::Config(format!("unknown operation {name:?}")))
}

/// Normalises `child-lr` / `CHILD_LR` style keys to the canonical spelling.
pub fn canonical_key(key: &str) -> Result<&'static str> {
    let k = key.trim().replace('-', "_");
    KEYS.iter()
        .find(|c| **c == k || (c.len() > 1 && c.eq_ignore_ascii_case(&k)))
        .copied()
        .ok_or_else(|| Error::Config(format!("unknown configuration key {key:?}")))
}

/// Reads a flat `key = value` file (`#` comments) or a JSON object.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("--config {}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let map: BTreeMap<String, serde_json::Value> = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("--config {}: {e}", path.display())))?;
        return Ok(map
            .into_iter()
            .map(|(k, v)| {
                let s = match v {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Array(items) => items
                        .iter()
                        .map(|i| i.as_str().map(str::to_string).unwrap_or_else(|| i.to_string()))
                        .collect::<Vec<_>>()
                        .join(","),
                    other => other.to_string(),
                };
                (k, s)
            })
            .collect());
    }
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("--config {}:{}: expected key = value", path.display(), n + 1))
        })?;
        pairs.push((k.trim().to_string(), v.trim().trim_matches('"').to_string()));
    }
    Ok(pairs)
}

impl RunConfig {
    pub fn from_profile(profile: Profile) -> Self {
        let (space, trainer, synth) = match profile {
            Profile::Paper => (
                SearchSpaceConfig::paper(),
                TrainerConfig::paper(),
                SynthConfig {
                    train_images: 800,
                    val_images: 100,
                    image_size: 256,
                },
            ),
            Profile::Desk => (
                SearchSpaceConfig::desk(),
                TrainerConfig::desk(),
                SynthConfig {
                    train_images: 32,
                    val_images: 8,
                    image_size: 64,
                },
            ),
        };
        Self {
            profile,
            space,
            trainer,
            data: "synthetic:0".into(),
            synth,
            seed: 0,
            out: PathBuf::from("srnas-out"),
            deterministic: false,
            mix_nodes_explicit: false,
        }
    }

    /// Applies layers in order; later layers win. Each layer is a list of
    /// `(key, value)` pairs.
    pub fn build(profile: Profile, layers: &[Vec<(String, String)>]) -> Result<Self> {
        let mut cfg = Self::from_profile(profile);
        let mut ops: Option<Vec<OpKind>> = None;
        let mut k_set = false;
        for layer in layers {
            for (key, value) in layer {
                let key = canonical_key(key)?;
                match key {
                    "ops" => {
                        ops = Some(
                            value
                                .split(',')
                                .map(str::trim)
                                .filter(|s| !s.is_empty())
                                .map(op_kind)
                                .collect::<Result<_>>()?,
                        )
                    }
                    "K" => {
                        k_set = true;
                        cfg.apply(key, value)?;
                    }
                    _ => cfg.apply(key, value)?,
                }
            }
        }
        match ops {
            Some(list) => {
                if k_set && list.len() != cfg.space.num_ops {
                    return Err(Error::Config(format!(
                        "K = {} conflicts with {} listed operations",
                        cfg.space.num_ops,
                        list.len()
                    )));
                }
                cfg.space.num_ops = list.len();
                cfg.space.op_list = list;
            }
            None => {
                if cfg.space.num_ops > OpKind::DEFAULT_ORDER.len() {
                    return Err(Error::Config(format!(
                        "K = {} exceeds the {} available operations",
                        cfg.space.num_ops,
                        OpKind::DEFAULT_ORDER.len()
                    )));
                }
                cfg.space.op_list = OpKind::DEFAULT_ORDER[..cfg.space.num_ops].to_vec();
            }
        }
        cfg.space.check()?;
        cfg.trainer.check()?;
        cfg.data_source()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.trainer;
        let s = &mut self.space;
        match key {
            "seed" => self.seed = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "deterministic" => self.deterministic = flag(key, v)?,
            "data" => self.data = v.to_string(),
            "train_images" => self.synth.train_images = num(key, v)?,
            "val_images" => self.synth.val_images = num(key, v)?,
            "image_size" => self.synth.image_size = num(key, v)?,
            "N" => s.num_blocks = num(key, v)?,
            "M" => {
                s.mix_nodes = num(key, v)?;
                self.mix_nodes_explicit = true;
            }
            "K" => s.num_ops = num(key, v)?,
            "G" => s.feature_channels = num(key, v)?,
            "scale" => s.scale = num(key, v)?,
            "fusion" => s.fusion_search = flag(key, v)?,
            "local_residual" => s.local_residual = flag(key, v)?,
            "alpha" => t.alpha = num(key, v)?,
            "child_lr" => t.child_lr = num(key, v)?,
            "controller_lr" => t.controller_lr = num(key, v)?,
            "child_steps" => t.child_steps_per_epoch = num(key, v)?,
            "controller_steps" => t.controller_steps_per_epoch = num(key, v)?,
            "epochs" => t.epochs = num(key, v)?,
            "monte_carlo_samples" => t.monte_carlo_samples = num(key, v)?,
            "controller_batch" => t.controller_batch = num(key, v)?,
            "baseline_decay" => t.baseline_decay = num(key, v)?,
            "baseline" => t.baseline_enabled = flag(key, v)?,
            "lr_halving_interval" => t.lr_halving_interval = num(key, v)?,
            "pool" => t.candidate_pool = num(key, v)?,
            "reward" => t.reward_mode = v.trim().parse::<RewardMode>()?,
            "surrogate_scale" => t.surrogate_scale = num(key, v)?,
            "batch_size" => t.batch_size = num(key, v)?,
            "patch_size" => t.patch_size = num(key, v)?,
            "val_subset" => t.val_subset = num(key, v)?,
            "augment" => t.augment = flag(key, v)?,
            "hidden" => t.controller_hidden = num(key, v)?,
            "final_steps" => t.final_steps = num(key, v)?,
            "final_lr" => t.final_lr = num(key, v)?,
            "final_lr_halving_interval" => t.final_lr_halving_interval = num(key, v)?,
            "eval_interval" => t.eval_interval = num(key, v)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    pub fn data_source(&self) -> Result<DataSource> {
        self.data
            .parse()
            .map_err(|e: Error| Error::Config(format!("--data: {e}")))
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            train: self.synth.train_images,
            val: self.synth.val_images,
            size: self.synth.image_size,
        }
    }

    /// Adjusts `M` to fit `digits` when no layer fixed it.
    pub fn fit_digits(&mut self, digits: usize) -> Result<()> {
        if digits == num_mix_blocks(self.space.mix_nodes) {
            return Ok(());
        }
        if self.mix_nodes_explicit {
            return Err(Error::Validation(format!(
                "{digits} digits given, M = {} needs {}",
                self.space.mix_nodes,
                num_mix_blocks(self.space.mix_nodes)
            )));
        }
        let m = (1..=64)
            .find(|&m| num_mix_blocks(m) == digits)
            .ok_or_else(|| Error::Validation(format!("{digits} digits is not M(M+1)/2 for any M")))?;
        self.space.mix_nodes = m;
        self.space.check()
    }
}
