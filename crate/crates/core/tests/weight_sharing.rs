mod common;

use common::sharing::{batch, leaked_gradients, searched_keys, space, training_a_moves_b};
use srnas::arch_space::ArchitectureSequence;
use srnas::child_net::{build, SharedWeightBank};
use srnas::numeric::Graph;

#[test]
fn inactive_keys_get_exactly_zero_gradient() {
    let config = space();
    let mut bank = SharedWeightBank::new(&config, 0).unwrap();
    common::randomize_bank(&mut bank, 0.5, 0);
    let mut r = common::rng(1);
    for seed in 0..20 {
        let arch = common::random_arch(&config, &mut r);
        assert_eq!(leaked_gradients(&bank, &arch, seed), 0, "{arch:?}");
    }
}

#[test]
fn forward_reads_exactly_the_active_keys() {
    let config = space();
    let bank = SharedWeightBank::new(&config, 0).unwrap();
    let mut r = common::rng(2);
    for _ in 0..20 {
        let arch = common::random_arch(&config, &mut r);
        let net = build(&arch, &config, &bank).unwrap();
        let mut g = Graph::new();
        let x = g.constant(batch(0).lr);
        net.forward(&mut g, x).unwrap();
        assert_eq!(&g.used_params(), net.active_keys());
    }
}

#[test]
fn overlapping_architectures_share_storage() {
    let config = space();
    let bank = SharedWeightBank::new(&config, 0).unwrap();
    let mut a = ArchitectureSequence::all_zeros(&config);
    a.mix[0] = vec![true, false];
    let mut b = a.clone();
    b.mix[2] = vec![false, true];
    let (ka, kb) = (searched_keys(&bank, &a), searched_keys(&bank, &b));
    let shared: Vec<_> = ka.intersection(&kb).collect();
    assert!(!shared.is_empty());
    let edge = bank.edge_keys(0, 1, 0, 0);
    let na = build(&a, &config, &bank).unwrap();
    let nb = build(&b, &config, &bank).unwrap();
    if let srnas::child_net::EdgeKeys::Dense(id) = edge {
        assert!(na.active_keys().contains(&id) && nb.active_keys().contains(&id));
        assert!(std::ptr::eq(na.bank().store().value(id), nb.bank().store().value(id)));
    } else {
        panic!("op 0 is a dense convolution");
    }
}

#[test]
fn training_one_architecture_moves_another_iff_keys_overlap() {
    let config = space();
    let mut bank = SharedWeightBank::new(&config, 3).unwrap();
    common::randomize_bank(&mut bank, 0.5, 3);

    // Node 1 only versus node 2 only, all local gates closed: disjoint.
    let mut a = ArchitectureSequence::all_zeros(&config);
    a.mix[0] = vec![true, true];
    let mut b = ArchitectureSequence::all_zeros(&config);
    b.mix[1] = vec![true, false];
    b.mix[2] = vec![false, true];
    assert!(searched_keys(&bank, &a).is_disjoint(&searched_keys(&bank, &b)));
    assert!(!training_a_moves_b(&bank, &a, &b, 0));
    assert!(!training_a_moves_b(&bank, &b, &a, 0));

    let mut r = common::rng(4);
    let mut overlapping = 0;
    for seed in 0..40 {
        let a = common::random_arch(&config, &mut r);
        let b = common::random_arch(&config, &mut r);
        let shares = !searched_keys(&bank, &a).is_disjoint(&searched_keys(&bank, &b));
        assert_eq!(training_a_moves_b(&bank, &a, &b, seed), shares, "{a:?} {b:?}");
        overlapping += shares as usize;
    }
    assert!(overlapping > 0);
}

#[test]
fn every_active_key_receives_gradient() {
    let config = space();
    let mut bank = SharedWeightBank::new(&config, 5).unwrap();
    common::randomize_bank(&mut bank, 0.5, 5);
    // Keep the single attention bottleneck unit out of its dead ReLU region.
    let ids: Vec<_> = bank.store().ids().filter(|&id| bank.store().name(id).ends_with("ca.down.b")).collect();
    for id in ids {
        bank.store_mut().value_mut(id).data_mut().fill(1.0);
    }
    let arch = ArchitectureSequence::all_ones(&config);
    let net = build(&arch, &config, &bank).unwrap();
    let (_, grads) = srnas::trainer::child_gradients(&bank, &arch, &config, &batch(1)).unwrap();
    for id in net.active_keys() {
        let g = grads.get(*id).expect("active key has a gradient");
        assert!(g.iter().any(|v| *v != 0.0), "{}", bank.store().name(*id));
    }
}

#[test]
fn all_zero_architecture_trains_only_fixed_layers() {
    let config = space();
    let mut bank = SharedWeightBank::new(&config, 5).unwrap();
    common::randomize_bank(&mut bank, 0.5, 5);
    let arch = ArchitectureSequence::all_zeros(&config);
    let (_, grads) = srnas::trainer::child_gradients(&bank, &arch, &config, &batch(2)).unwrap();
    let fixed = bank.fixed_keys();
    for (id, g) in grads.iter() {
        if g.iter().any(|v| *v != 0.0) {
            assert!(fixed.contains(&id), "{}", bank.store().name(id));
        }
    }
}

#[test]
fn closed_global_gates_ignore_their_features() {
    let config = srnas::arch_space::SearchSpaceConfig::new(3, 1, 1, 2, 2, true).unwrap();
    let mut bank = SharedWeightBank::new(&config, 0).unwrap();
    common::randomize_bank(&mut bank, 0.5, 0);
    let mut r = common::rng(0);
    let run = |feats: &[srnas::numeric::Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<_> = feats.iter().map(|t| g.constant(t.clone())).collect();
        let y = srnas::child_net::global_fusion(&mut g, &bank, &vars, &[false; 3]).unwrap();
        g.value(y).clone()
    };
    let mut feats: Vec<_> = (0..4).map(|_| common::random_tensor(&[1, 2, 3, 3], &mut r)).collect();
    let before = run(&feats);
    for f in feats.iter_mut().take(3) {
        *f = common::random_tensor(&[1, 2, 3, 3], &mut r);
    }
    assert_eq!(run(&feats), before);
    feats[3] = common::random_tensor(&[1, 2, 3, 3], &mut r);
    assert_ne!(run(&feats), before);
}
