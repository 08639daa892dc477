//! Exact and sampled statistics of a controller's policy.

use srnas::arch_space::{enumerate_space, SearchSpaceConfig};
use srnas::controller::Controller;
use srnas::numeric::logistic;

use super::rng;

/// `|Σ exp(log P(a)) - 1|` over every architecture of the space.
pub fn normalization_error(controller: &Controller) -> f64 {
    let total: f64 = enumerate_space(controller.space(), 1 << 16)
        .unwrap()
        .map(|a| controller.log_prob(&a).unwrap().exp())
        .sum();
    (total - 1.0).abs()
}

/// Exact marginal `P(bit_i = 1)` of every decision, by enumeration.
pub fn exact_marginals(controller: &Controller) -> Vec<f64> {
    let space = controller.space();
    let mut marginals = vec![0.0; space.decision_count()];
    for a in enumerate_space(space, 1 << 16).unwrap() {
        let p = controller.log_prob(&a).unwrap().exp();
        for (m, b) in marginals.iter_mut().zip(a.decision_bits(space)) {
            if b {
                *m += p;
            }
        }
    }
    marginals
}

/// Frequency statistics over `draws` samples.
pub struct Frequencies {
    /// Largest `|count - n·p| / sqrt(n·p(1-p))` against the exact marginals.
    pub marginal_z: f64,
    /// Largest `|Σ(bit - σ(logit))| / sqrt(Σ σ(1-σ))`, using the logit each
    /// bit was drawn from.
    pub conditional_z: f64,
    /// Samples whose replayed log-probability differs from the sampled one.
    pub replay_mismatches: usize,
}

pub fn frequencies(controller: &Controller, draws: usize, seed: u64) -> Frequencies {
    let space: &SearchSpaceConfig = controller.space();
    let t = space.decision_count();
    let marginals = exact_marginals(controller);
    let mut counts = vec![0usize; t];
    let mut resid = vec![0.0; t];
    let mut var = vec![0.0; t];
    let mut replay_mismatches = 0;
    let mut r = rng(seed);
    for _ in 0..draws {
        let s = controller.sample(&mut r).unwrap();
        let bits = s.arch.decision_bits(space);
        let probs: Vec<f64> = s.logits.iter().flatten().map(|&l| logistic(l)).collect();
        for i in 0..t {
            counts[i] += bits[i] as usize;
            resid[i] += bits[i] as u8 as f64 - probs[i];
            var[i] += probs[i] * (1.0 - probs[i]);
        }
        if controller.log_prob(&s.arch).unwrap() != s.log_prob {
            replay_mismatches += 1;
        }
    }
    let n = draws as f64;
    let z = |dev: f64, v: f64| if v > 0.0 { dev.abs() / v.sqrt() } else if dev == 0.0 { 0.0 } else { f64::INFINITY };
    let marginal_z = (0..t)
        .map(|i| z(counts[i] as f64 - n * marginals[i], n * marginals[i] * (1.0 - marginals[i])))
        .fold(0.0, f64::max);
    let conditional_z = (0..t).map(|i| z(resid[i], var[i])).fold(0.0, f64::max);
    Frequencies {
        marginal_z,
        conditional_z,
        replay_mismatches,
    }
}
