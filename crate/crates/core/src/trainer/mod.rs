//! Alternating optimisation of the shared child weights and the controller,
//! reward shaping with the complexity penalty, candidate selection and final
//! retraining.

mod final_train;
mod reward;
mod search;

use serde::{Deserialize, Serialize};

use crate::arch_space::{encode_decimal, ArchitectureSequence, SearchSpaceConfig};
use crate::error::{Error, Result};

pub use final_train::{final_train, FinalReport, HistoryRow};
pub use reward::{evaluate_psnr, select_best, surrogate_argmax, Candidate, RewardSource, Surrogate};
pub use search::{child_gradients, child_step, controller_step, search, EpochSummary, SearchOutcome, SearchReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Psnr,
    Surrogate,
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psnr" => Ok(RewardMode::Psnr),
            "surrogate" => Ok(RewardMode::Surrogate),
            other => Err(Error::Config(format!("unknown reward mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    /// Weight of the complexity penalty in the reward.
    pub alpha: f64,
    pub child_lr: f64,
    pub controller_lr: f64,
    pub child_steps_per_epoch: usize,
    pub controller_steps_per_epoch: usize,
    pub epochs: usize,
    /// Architectures averaged per child gradient.
    pub monte_carlo_samples: usize,
    /// Architectures sampled per controller update.
    pub controller_batch: usize,
    pub baseline_decay: f64,
    /// Disables the moving-average baseline (advantage = reward).
    pub baseline_enabled: bool,
    /// Child steps between learning-rate halvings; 0 never halves.
    pub lr_halving_interval: usize,
    pub candidate_pool: usize,
    pub reward_mode: RewardMode,
    /// Multiplier on the surrogate bit-weight sum; 0 makes the reward constant.
    pub surrogate_scale: f64,
    pub batch_size: usize,
    /// LR patch edge length.
    pub patch_size: usize,
    /// Validation images scored per reward during search.
    pub val_subset: usize,
    pub augment: bool,
    pub controller_hidden: usize,
    pub final_steps: usize,
    pub final_lr: f64,
    pub final_lr_halving_interval: usize,
    /// Child steps between validation passes in final training.
    pub eval_interval: usize,
}

impl TrainerConfig {
    pub fn paper() -> Self {
        Self {
            alpha: 2.0,
            child_lr: 1e-4,
            controller_lr: 3e-4,
            child_steps_per_epoch: 1000,
            controller_steps_per_epoch: 100,
            epochs: 200,
            monte_carlo_samples: 1,
            controller_batch: 1,
            baseline_decay: 0.95,
            baseline_enabled: true,
            lr_halving_interval: 500_000,
            candidate_pool: 100,
            reward_mode: RewardMode::Psnr,
            surrogate_scale: 1.0,
            batch_size: 16,
            patch_size: 64,
            val_subset: 8,
            augment: true,
            controller_hidden: crate::controller::DEFAULT_HIDDEN,
            final_steps: 1_000_000,
            final_lr: 1e-4,
            final_lr_halving_interval: 200_000,
            eval_interval: 1000,
        }
    }

    pub fn desk() -> Self {
        Self {
            child_lr: 1e-3,
            controller_batch: 4,
            child_steps_per_epoch: 50,
            controller_steps_per_epoch: 10,
            epochs: 20,
            lr_halving_interval: 0,
            patch_size: 16,
            final_steps: 2000,
            final_lr: 4e-3,
            final_lr_halving_interval: 800,
            eval_interval: 250,
            ..Self::paper()
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be a finite non-negative number, got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad(format!("baseline decay must lie in [0, 1), got {}", self.baseline_decay));
        }
        for (name, v) in [
            ("child_lr", self.child_lr),
            ("controller_lr", self.controller_lr),
            ("final_lr", self.final_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("monte_carlo_samples", self.monte_carlo_samples),
            ("controller_batch", self.controller_batch),
            ("batch_size", self.batch_size),
            ("patch_size", self.patch_size),
            ("val_subset", self.val_subset),
            ("controller_hidden", self.controller_hidden),
            ("eval_interval", self.eval_interval),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    /// Learning rate after `step` steps of a halving schedule.
    pub fn halved(lr: f64, interval: usize, step: usize) -> f64 {
        if interval == 0 {
            lr
        } else {
            lr * 0.5f64.powi((step / interval) as i32)
        }
    }
}

/// Exponential moving average of rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub decay: f64,
    pub enabled: bool,
    value: Option<f64>,
}

impl Baseline {
    /// Starts unset; the first observed reward becomes the baseline.
    pub fn new(decay: f64, enabled: bool) -> Self {
        Self {
            decay,
            enabled,
            value: None,
        }
    }

    pub fn with_initial(decay: f64, b0: f64) -> Self {
        Self {
            decay,
            enabled: true,
            value: Some(b0),
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    /// Returns `R - b` for the current baseline, then folds `R` into it.
    pub fn advance(&mut self, reward: f64) -> f64 {
        if !self.enabled {
            return reward;
        }
        let b = self.value.unwrap_or(reward);
        self.value = Some(self.decay * b + (1.0 - self.decay) * reward);
        reward - b
    }
}

/// One scored architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub epoch: usize,
    pub step: usize,
    /// Quality term: validation PSNR in dB, or the surrogate score.
    pub psnr: f64,
    pub n_params: usize,
    pub cb: f64,
    pub reward: f64,
    pub baseline: f64,
    pub digits: Vec<u32>,
    pub local_fusion: Vec<bool>,
    pub global_fusion: Vec<bool>,
}

pub const REWARD_CSV_HEADER: &str = "epoch,step,psnr,n_params,cb,reward,baseline,digits,local_fusion,global_fusion";

fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

impl RewardRecord {
    /// Scores `arch` with `reward = psnr - alpha * cb`.
    pub fn new(
        arch: &ArchitectureSequence,
        config: &SearchSpaceConfig,
        psnr: f64,
        n_params: usize,
        cb: f64,
        alpha: f64,
    ) -> Result<Self> {
        Ok(Self {
            epoch: 0,
            step: 0,
            psnr,
            n_params,
            cb,
            reward: psnr - alpha * cb,
            baseline: f64::NAN,
            digits: encode_decimal(arch, config)?,
            local_fusion: arch.local_fusion.clone(),
            global_fusion: arch.global_fusion.clone(),
        })
    }

    pub fn csv_row(&self) -> String {
        let digits: Vec<String> = self.digits.iter().map(u32::to_string).collect();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.step,
            self.psnr,
            self.n_params,
            self.cb,
            self.reward,
            self.baseline,
            digits.join(" "),
            bit_string(&self.local_fusion),
            bit_string(&self.global_fusion),
        )
    }
}

pub fn reward_csv(records: &[RewardRecord]) -> String {
    let mut s = String::from(REWARD_CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_recursion_from_zero() {
        let mut b = Baseline::with_initial(0.95, 0.0);
        b.advance(3.0);
        b.advance(-1.0);
        let expected = 0.95 * (0.95 * 0.0 + 0.05 * 3.0) + 0.05 * -1.0;
        assert!((b.value().unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn first_reward_initialises_baseline() {
        let mut b = Baseline::new(0.95, true);
        assert_eq!(b.advance(4.0), 0.0);
        assert_eq!(b.value(), Some(4.0));
        let mut off = Baseline::new(0.95, false);
        assert_eq!(off.advance(4.0), 4.0);
    }

    #[test]
    fn reward_arithmetic() {
        let cfg = SearchSpaceConfig::new(1, 2, 2, 4, 2, false).unwrap();
        let arch = ArchitectureSequence::all_ones(&cfg);
        let r = RewardRecord::new(&arch, &cfg, 35.0, 10, 0.5, 2.0).unwrap();
        assert_eq!(r.reward, 34.0);
        let r = RewardRecord::new(&arch, &cfg, 35.0, 10, 0.5, 0.0).unwrap();
        assert_eq!(r.reward, 35.0);
    }

    #[test]
    fn halving_schedule() {
        assert_eq!(TrainerConfig::halved(1.0, 10, 9), 1.0);
        assert_eq!(TrainerConfig::halved(1.0, 10, 25), 0.25);
        assert_eq!(TrainerConfig::halved(1.0, 0, 1000), 1.0);
    }
}
