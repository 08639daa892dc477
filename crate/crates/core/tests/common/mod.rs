//! Finite-difference gradient oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srnas::child_net::SharedWeightBank;
use srnas::numeric::{Graph, ParamId, ParamStore, Tensor, Var};
use srnas::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Normwise relative error accepted by every gradient check.
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Values bounded away from zero, for inputs of kinked functions.
pub fn away_from_zero(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.05..1.0);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// `‖a - b‖ / max(‖a‖ + ‖b‖, 1e-12)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-12)
}

fn project(g: &mut Graph, out: Var, weights: &Tensor) -> Result<Var> {
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w)?;
    Ok(g.sum_all(prod))
}

fn projection_for(shape: &[usize], seed: u64) -> Tensor {
    random_tensor(shape, &mut rng(seed ^ 0x5eed))
}

/// Checks the gradient of `Σ r ⊙ f(inputs)` for a fixed random `r` against
/// central differences in every input element. Returns the relative error.
pub fn check_inputs(inputs: &[Tensor], seed: u64, f: impl Fn(&mut Graph, &[Var]) -> Result<Var>) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars).expect("forward");
    let r = projection_for(g.shape(out), seed);
    let loss = project(&mut g, out, &r).expect("projection");
    g.backward(loss).expect("backward");
    let mut analytic = Vec::new();
    for (v, t) in vars.iter().zip(inputs) {
        match g.grad(*v) {
            Some(gr) => analytic.extend_from_slice(gr),
            None => analytic.extend(std::iter::repeat_n(0.0, t.len())),
        }
    }

    let eval = |values: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &vars).expect("forward");
        let loss = project(&mut g, out, &r).expect("projection");
        g.value(loss).data()[0]
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut work = inputs.to_vec();
    for i in 0..inputs.len() {
        for e in 0..inputs[i].len() {
            let orig = work[i].data()[e];
            work[i].data_mut()[e] = orig + FD_STEP;
            let plus = eval(&work);
            work[i].data_mut()[e] = orig - FD_STEP;
            let minus = eval(&work);
            work[i].data_mut()[e] = orig;
            numeric.push((plus - minus) / (2.0 * FD_STEP));
        }
    }
    relative_error(&analytic, &numeric)
}

/// As [`check_inputs`] but differentiating parameters `ids` of `store`, read
/// by `f` through [`Graph::param`].
pub fn check_params(
    store: &mut ParamStore,
    ids: &[ParamId],
    seed: u64,
    f: impl Fn(&mut Graph, &ParamStore) -> Result<Var>,
) -> f64 {
    let mut g = Graph::new();
    let out = f(&mut g, store).expect("forward");
    let r = projection_for(g.shape(out), seed);
    let loss = project(&mut g, out, &r).expect("projection");
    g.backward(loss).expect("backward");
    let grads = g.param_grads();
    let mut analytic = Vec::new();
    for &id in ids {
        match grads.get(id) {
            Some(gr) => analytic.extend_from_slice(gr),
            None => analytic.extend(std::iter::repeat_n(0.0, store.value(id).len())),
        }
    }
    let eval = |store: &ParamStore| -> f64 {
        let mut g = Graph::new();
        let out = f(&mut g, store).expect("forward");
        let loss = project(&mut g, out, &r).expect("projection");
        g.value(loss).data()[0]
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    for &id in ids {
        for e in 0..store.value(id).len() {
            let orig = store.value(id).data()[e];
            store.value_mut(id).data_mut()[e] = orig + FD_STEP;
            let plus = eval(store);
            store.value_mut(id).data_mut()[e] = orig - FD_STEP;
            let minus = eval(store);
            store.value_mut(id).data_mut()[e] = orig;
            numeric.push((plus - minus) / (2.0 * FD_STEP));
        }
    }
    relative_error(&analytic, &numeric)
}

/// Overwrites every bank value, biases included, with uniform noise of the
/// given amplitude.
pub fn randomize_bank(bank: &mut SharedWeightBank, amplitude: f64, seed: u64) {
    let mut r = rng(seed);
    let ids: Vec<ParamId> = bank.store().ids().collect();
    for id in ids {
        for v in bank.store_mut().value_mut(id).data_mut() {
            *v = r.random_range(-amplitude..amplitude);
        }
    }
}

pub mod cases;
pub mod oracles;
pub mod policy;
pub mod sharing;

/// Parameters `f` reads, found by recording it once.
pub fn used_ids(store: &ParamStore, f: impl Fn(&mut Graph, &ParamStore) -> Result<Var>) -> Vec<ParamId> {
    let mut g = Graph::new();
    f(&mut g, store).expect("forward");
    g.used_params().into_iter().collect()
}

/// A uniformly random genome of `config`.
pub fn random_arch(config: &srnas::arch_space::SearchSpaceConfig, rng: &mut impl Rng) -> srnas::arch_space::ArchitectureSequence {
    let bits: Vec<bool> = (0..config.decision_count()).map(|_| rng.random()).collect();
    srnas::arch_space::ArchitectureSequence::from_decision_bits(config, &bits).expect("length matches")
}
