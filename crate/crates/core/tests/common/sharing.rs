//! Probes of how architectures share bank storage.

use std::collections::BTreeSet;

use srnas::arch_space::{ArchitectureSequence, SearchSpaceConfig};
use srnas::child_net::{build, SharedWeightBank};
use srnas::numeric::{adam_step, Adam, ParamId, Tensor};
use srnas::sr_data::Batch;
use srnas::trainer::child_gradients;

use super::{random_tensor, rng};

pub fn space() -> SearchSpaceConfig {
    SearchSpaceConfig::new(1, 2, 2, 4, 2, true).unwrap()
}

pub fn batch(seed: u64) -> Batch {
    let mut r = rng(seed);
    Batch {
        lr: random_tensor(&[2, 3, 4, 4], &mut r).map(|v| 0.5 + 0.5 * v),
        hr: random_tensor(&[2, 3, 8, 8], &mut r).map(|v| 0.5 + 0.5 * v),
    }
}

/// Searched keys `arch` reads, fixed layers excluded.
pub fn searched_keys(bank: &SharedWeightBank, arch: &ArchitectureSequence) -> BTreeSet<ParamId> {
    let net = build(arch, bank.config(), bank).unwrap();
    let fixed = bank.fixed_keys();
    net.active_keys().difference(&fixed).copied().collect()
}

/// Keys outside `arch`'s active set that received a nonzero gradient.
pub fn leaked_gradients(bank: &SharedWeightBank, arch: &ArchitectureSequence, seed: u64) -> usize {
    let net = build(arch, bank.config(), bank).unwrap();
    let (_, grads) = child_gradients(bank, arch, bank.config(), &batch(seed)).unwrap();
    let active = net.active_keys();
    let mut leaks = 0;
    for id in bank.store().ids() {
        let nonzero = grads.get(id).is_some_and(|g| g.iter().any(|v| *v != 0.0));
        if nonzero && !active.contains(&id) {
            leaks += 1;
        }
    }
    leaks
}

fn output(bank: &SharedWeightBank, arch: &ArchitectureSequence, lr: &Tensor) -> Tensor {
    build(arch, bank.config(), bank).unwrap().predict(lr).unwrap()
}

/// Takes one Adam step on `a`'s searched keys and reports whether `b`'s
/// output moved.
pub fn training_a_moves_b(bank: &SharedWeightBank, a: &ArchitectureSequence, b: &ArchitectureSequence, seed: u64) -> bool {
    let probe = batch(seed ^ 0xb);
    let before = output(bank, b, &probe.lr);
    let mut trained = bank.clone();
    let (_, mut grads) = child_gradients(&trained, a, trained.config(), &batch(seed)).unwrap();
    let fixed = trained.fixed_keys();
    grads.retain(|id| !fixed.contains(&id));
    adam_step(trained.store_mut(), &grads, &Adam::with_lr(1e-2)).unwrap();
    output(&trained, b, &probe.lr).max_abs_diff(&before) > 0.0
}
