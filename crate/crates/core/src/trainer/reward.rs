use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch_space::{encode_decimal, enumerate_space, ArchitectureSequence, SearchSpaceConfig};
use crate::child_net::{build, SharedWeightBank};
use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::param_count::PenaltyModel;
use crate::rng::{stream_rng, Stream};
use crate::sr_data::{psnr, ImagePair};

use super::RewardRecord;

/// Deterministic stand-in for validation PSNR: a seeded weight in `[0, 1)`
/// per decision bit, summed over the set bits and multiplied by `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    weights: Vec<f64>,
    scale: f64,
}

impl Surrogate {
    pub fn new(config: &SearchSpaceConfig, seed: u64, scale: f64) -> Self {
        let mut rng = stream_rng(seed, Stream::Surrogate);
        let weights = (0..config.decision_count()).map(|_| rng.random::<f64>()).collect();
        Self { weights, scale }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn score(&self, arch: &ArchitectureSequence, config: &SearchSpaceConfig) -> f64 {
        let bits = arch.decision_bits(config);
        let sum: f64 = bits.iter().zip(&self.weights).filter(|(b, _)| **b).map(|(_, w)| w).sum();
        sum * self.scale
    }
}

/// Where the quality term of the reward comes from.
#[derive(Debug, Clone, Copy)]
pub enum RewardSource<'a> {
    Psnr {
        bank: &'a SharedWeightBank,
        val: &'a [ImagePair],
    },
    Surrogate(&'a Surrogate),
}

impl RewardSource<'_> {
    /// Scores `arch`; the record's epoch, step and baseline are left for the caller.
    pub fn evaluate(
        &self,
        arch: &ArchitectureSequence,
        config: &SearchSpaceConfig,
        penalty: &PenaltyModel,
        alpha: f64,
    ) -> Result<RewardRecord> {
        let quality = match self {
            RewardSource::Psnr { bank, val } => evaluate_psnr(arch, config, bank, val)?,
            RewardSource::Surrogate(s) => s.score(arch, config),
        };
        let (n, cb) = penalty.evaluate(arch)?;
        RewardRecord::new(arch, config, quality, n, cb, alpha)
    }
}

/// Mean luma PSNR of the child network over `val`, predictions clamped to `[0, 1]`.
pub fn evaluate_psnr(
    arch: &ArchitectureSequence,
    config: &SearchSpaceConfig,
    bank: &SharedWeightBank,
    val: &[ImagePair],
) -> Result<f64> {
    if val.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    let net = build(arch, config, bank)?;
    let mut total = 0.0;
    for pair in val {
        let lr = Tensor::stack(std::slice::from_ref(&pair.lr))?;
        let sr = net.predict(&lr)?.map(|v| v.clamp(0.0, 1.0));
        let hr = Tensor::stack(std::slice::from_ref(&pair.hr))?;
        total += psnr(&sr.batch_item(0)?, &hr.batch_item(0)?)?;
    }
    Ok(total / val.len() as f64)
}

/// A sampled candidate and its score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub log_prob: f64,
    pub record: RewardRecord,
    #[serde(skip)]
    pub arch: Option<ArchitectureSequence>,
}

fn better(a: &RewardRecord, b: &RewardRecord) -> bool {
    if a.reward != b.reward {
        return a.reward > b.reward;
    }
    if a.n_params != b.n_params {
        return a.n_params < b.n_params;
    }
    (&a.digits, &a.local_fusion, &a.global_fusion) < (&b.digits, &b.local_fusion, &b.global_fusion)
}

/// Samples `pool` candidates, scores each, and returns the best with all
/// candidates in sampling order. Ties go to fewer parameters, then to the
/// lexicographically smaller digit list.
pub fn select_best(
    controller: &Controller,
    source: RewardSource<'_>,
    penalty: &PenaltyModel,
    alpha: f64,
    pool: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(ArchitectureSequence, Vec<Candidate>)> {
    if pool == 0 {
        return Err(Error::Range("candidate pool must be at least 1".into()));
    }
    let config = controller.space();
    let mut candidates: Vec<Candidate> = Vec::with_capacity(pool);
    let mut best: Option<usize> = None;
    for _ in 0..pool {
        let trace = controller.sample(rng)?;
        let record = source.evaluate(&trace.arch, config, penalty, alpha)?;
        if best.is_none_or(|b| better(&record, &candidates[b].record)) {
            best = Some(candidates.len());
        }
        candidates.push(Candidate {
            log_prob: trace.log_prob,
            record,
            arch: Some(trace.arch),
        });
    }
    let arch = candidates[best.expect("pool is non-empty")]
        .arch
        .clone()
        .expect("candidates carry their genome");
    Ok((arch, candidates))
}

/// Brute-force best architecture of the surrogate reward with the same tie
/// rules as [`select_best`], plus every reward in enumeration order.
pub fn surrogate_argmax(
    config: &SearchSpaceConfig,
    surrogate: &Surrogate,
    alpha: f64,
    limit: u128,
) -> Result<(ArchitectureSequence, Vec<f64>)> {
    let penalty = PenaltyModel::new(config)?;
    let source = RewardSource::Surrogate(surrogate);
    let mut best: Option<(ArchitectureSequence, RewardRecord)> = None;
    let mut rewards = Vec::new();
    for arch in enumerate_space(config, limit)? {
        let record = source.evaluate(&arch, config, &penalty, alpha)?;
        rewards.push(record.reward);
        if best.as_ref().is_none_or(|(_, b)| better(&record, b)) {
            best = Some((arch, record));
        }
    }
    let (arch, _) = best.ok_or_else(|| Error::Range("empty search space".into()))?;
    debug_assert!(encode_decimal(&arch, config).is_ok());
    Ok((arch, rewards))
}
