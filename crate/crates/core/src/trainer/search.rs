use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch_space::{ArchitectureSequence, SearchSpaceConfig};
use crate::child_net::{build, SharedWeightBank};
use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::numeric::{adam_step, Adam, Gradients, Graph};
use crate::param_count::PenaltyModel;
use crate::rng::{stream_rng, stream_seed, Stream};
use crate::sr_data::{extract_patches, Batch, Dataset};

use super::reward::{select_best, Candidate, RewardSource, Surrogate};
use super::{Baseline, RewardMode, RewardRecord, TrainerConfig};

/// L1 loss of `arch` on `batch` and its gradients on the keys it activates.
pub fn child_gradients(
    bank: &SharedWeightBank,
    arch: &ArchitectureSequence,
    config: &SearchSpaceConfig,
    batch: &Batch,
) -> Result<(f64, Gradients)> {
    let net = build(arch, config, bank)?;
    let mut g = Graph::new();
    let x = g.constant(batch.lr.clone());
    let y = g.constant(batch.hr.clone());
    let pred = net.forward(&mut g, x)?;
    let loss = g.l1_loss(pred, y)?;
    g.backward(loss)?;
    Ok((g.value(loss).data()[0], g.param_grads()))
}

/// One Adam step on the bank with gradients averaged over `samples`
/// architectures drawn from the fixed policy. Returns the mean loss.
pub fn child_step(
    bank: &mut SharedWeightBank,
    controller: &Controller,
    batch: &Batch,
    adam: &Adam,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Range("need at least one architecture sample".into()));
    }
    let config = controller.space().clone();
    let mut total = Gradients::new();
    let mut loss = 0.0;
    for _ in 0..samples {
        let trace = controller.sample(rng)?;
        let (l, grads) = child_gradients(bank, &trace.arch, &config, batch)?;
        total.merge(&grads);
        loss += l;
    }
    total.scale(1.0 / samples as f64);
    adam_step(bank.store_mut(), &total, adam)?;
    Ok(loss / samples as f64)
}

/// REINFORCE update from `(arch, reward)` pairs. Each pair's advantage uses
/// the baseline before that reward is folded in; the policy gradient is
/// averaged over the batch. Returns the baseline used for each pair.
pub fn controller_step(
    controller: &mut Controller,
    baseline: &mut Baseline,
    batch: &[(ArchitectureSequence, f64)],
    adam: &Adam,
) -> Result<Vec<f64>> {
    let mut total = Gradients::new();
    let mut used = Vec::with_capacity(batch.len());
    let mut any = false;
    for (arch, reward) in batch {
        let advantage = baseline.advance(*reward);
        used.push(reward - advantage);
        if advantage != 0.0 {
            any = true;
            total.merge(&controller.backward_policy_loss(arch, advantage)?);
        }
    }
    if any {
        total.scale(1.0 / batch.len() as f64);
        adam_step(controller.store_mut(), &total, adam)?;
    }
    Ok(used)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_reward: f64,
    pub max_reward: f64,
    pub mean_n_params: f64,
    pub baseline: Option<f64>,
    pub child_loss: Option<f64>,
    /// Greedy decoding of the policy at the end of the epoch.
    pub greedy_digits: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchReport {
    pub seed: u64,
    pub space: SearchSpaceConfig,
    pub trainer: TrainerConfig,
    pub epochs_run: usize,
    pub history: Vec<EpochSummary>,
    pub greedy: RewardRecord,
    pub selected: RewardRecord,
    pub candidates: Vec<Candidate>,
}

pub struct SearchOutcome {
    pub report: SearchReport,
    pub records: Vec<RewardRecord>,
    pub controller: Controller,
    pub bank: Option<SharedWeightBank>,
    pub selected: ArchitectureSequence,
}

struct Checkpoints<'a> {
    dir: &'a Path,
    deterministic: bool,
    best: f64,
}

impl Checkpoints<'_> {
    fn write(&mut self, controller: &Controller, bank: Option<&SharedWeightBank>, score: f64) -> Result<()> {
        let mut tags = vec!["latest"];
        if score > self.best || self.best.is_nan() {
            self.best = score;
            tags.push("best");
        }
        for tag in tags {
            controller.save(&self.dir.join(format!("controller_{tag}.ckpt")), self.deterministic)?;
            if let Some(bank) = bank {
                bank.save(&self.dir.join(format!("bank_{tag}.ckpt")), self.deterministic)?;
            }
        }
        Ok(())
    }
}

/// Runs the alternating search. In PSNR mode each epoch trains the bank
/// with architectures from the current policy, then trains the policy on
/// validation rewards; surrogate mode skips the child phase. Checkpoints go to
/// `out_dir` after every epoch.
pub fn search(
    space: &SearchSpaceConfig,
    trainer: &TrainerConfig,
    seed: u64,
    data: Option<&Dataset>,
    out_dir: Option<&Path>,
    deterministic: bool,
) -> Result<SearchOutcome> {
    space.check()?;
    trainer.check()?;
    let mut controller = Controller::new(space, trainer.controller_hidden, stream_seed(seed, Stream::Controller))?;
    let penalty = PenaltyModel::new(space)?;
    let surrogate = Surrogate::new(space, seed, trainer.surrogate_scale);
    let (mut bank, val) = match trainer.reward_mode {
        RewardMode::Psnr => {
            let data = data.ok_or_else(|| Error::Config("PSNR rewards need a dataset".into()))?;
            if data.val.is_empty() || data.train.is_empty() {
                return Err(Error::Data("dataset needs training and validation images".into()));
            }
            let n = trainer.val_subset.min(data.val.len());
            (
                Some(SharedWeightBank::new(space, stream_seed(seed, Stream::Bank))?),
                data.val[..n].to_vec(),
            )
        }
        RewardMode::Surrogate => (None, Vec::new()),
    };
    let mut sample_rng = stream_rng(seed, Stream::Trainer);
    let mut patch_rng = stream_rng(seed, Stream::Augment);
    let ctrl_adam = Adam::with_lr(trainer.controller_lr);
    let mut baseline = Baseline::new(trainer.baseline_decay, trainer.baseline_enabled);
    let mut records = Vec::new();
    let mut history = Vec::new();
    let mut checkpoints = out_dir.map(|dir| Checkpoints {
        dir,
        deterministic,
        best: f64::NAN,
    });
    let mut child_steps = 0usize;

    for epoch in 0..trainer.epochs {
        let mut child_loss = None;
        if let (Some(bank), Some(data)) = (bank.as_mut(), data) {
            let mut sum = 0.0;
            for _ in 0..trainer.child_steps_per_epoch {
                let lr = TrainerConfig::halved(trainer.child_lr, trainer.lr_halving_interval, child_steps);
                let batch = extract_patches(
                    &data.train,
                    trainer.patch_size,
                    trainer.batch_size,
                    space.scale,
                    &mut patch_rng,
                    trainer.augment,
                )?;
                sum += child_step(
                    bank,
                    &controller,
                    &batch,
                    &Adam::with_lr(lr),
                    trainer.monte_carlo_samples,
                    &mut sample_rng,
                )?;
                child_steps += 1;
            }
            if trainer.child_steps_per_epoch > 0 {
                child_loss = Some(sum / trainer.child_steps_per_epoch as f64);
            }
        }

        let source = match &bank {
            Some(bank) => RewardSource::Psnr { bank, val: &val },
            None => RewardSource::Surrogate(&surrogate),
        };
        let first = records.len();
        for step in 0..trainer.controller_steps_per_epoch {
            let mut batch = Vec::with_capacity(trainer.controller_batch);
            let mut pending = Vec::with_capacity(trainer.controller_batch);
            for _ in 0..trainer.controller_batch {
                let trace = controller.sample(&mut sample_rng)?;
                let mut record = source.evaluate(&trace.arch, space, &penalty, trainer.alpha)?;
                record.epoch = epoch;
                record.step = step;
                batch.push((trace.arch, record.reward));
                pending.push(record);
            }
            let used = controller_step(&mut controller, &mut baseline, &batch, &ctrl_adam)?;
            for (mut record, b) in pending.into_iter().zip(used) {
                record.baseline = if trainer.baseline_enabled { b } else { 0.0 };
                records.push(record);
            }
        }

        let epoch_records = &records[first..];
        let count = epoch_records.len().max(1) as f64;
        let mean_reward = epoch_records.iter().map(|r| r.reward).sum::<f64>() / count;
        let greedy = controller.greedy()?;
        history.push(EpochSummary {
            epoch,
            mean_reward,
            max_reward: epoch_records.iter().map(|r| r.reward).fold(f64::NEG_INFINITY, f64::max),
            mean_n_params: epoch_records.iter().map(|r| r.n_params as f64).sum::<f64>() / count,
            baseline: baseline.value(),
            child_loss,
            greedy_digits: crate::arch_space::encode_decimal(&greedy.arch, space)?,
        });
        if let Some(cp) = checkpoints.as_mut() {
            cp.write(&controller, bank.as_ref(), mean_reward)?;
        }
    }

    let source = match &bank {
        Some(bank) => RewardSource::Psnr { bank, val: &val },
        None => RewardSource::Surrogate(&surrogate),
    };
    let greedy = controller.greedy()?;
    let greedy_record = source.evaluate(&greedy.arch, space, &penalty, trainer.alpha)?;
    let mut select_rng = stream_rng(seed, Stream::Selection);
    let (selected, candidates) = select_best(
        &controller,
        source,
        &penalty,
        trainer.alpha,
        trainer.candidate_pool,
        &mut select_rng,
    )?;
    let selected_record = source.evaluate(&selected, space, &penalty, trainer.alpha)?;
    let report = SearchReport {
        seed,
        space: space.clone(),
        trainer: trainer.clone(),
        epochs_run: trainer.epochs,
        history,
        greedy: greedy_record,
        selected: selected_record,
        candidates,
    };
    Ok(SearchOutcome {
        report,
        records,
        controller,
        bank,
        selected,
    })
}
