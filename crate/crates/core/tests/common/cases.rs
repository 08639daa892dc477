//! Randomised gradient checks, one per primitive or composed block. Each case
//! draws its own shapes from the seed and returns the relative error.

use rand::Rng;
use srnas::arch_space::SearchSpaceConfig;
use srnas::child_net::{build, channel_attention, global_fusion, local_fusion, mix_node_forward, SharedWeightBank};
use srnas::numeric::{lstm_cell, Graph, LstmParams, ParamStore, Tensor};

use super::{away_from_zero, check_inputs, check_params, random_arch, random_tensor, randomize_bank, rng, used_ids};

pub type Case = (&'static str, fn(u64) -> f64);

pub const PRIMITIVES: &[Case] = &[
    ("conv2d", conv2d),
    ("conv2d_dilated", conv2d_dilated),
    ("conv2d_depthwise", conv2d_depthwise),
    ("conv2d_pointwise", conv2d_pointwise),
    ("add", add),
    ("add_n", add_n),
    ("scale", scale),
    ("mul", mul),
    ("mean_over", mean_over),
    ("relu", relu),
    ("sigmoid", sigmoid),
    ("tanh", tanh),
    ("bias_add", bias_add),
    ("channel_scale", channel_scale),
    ("global_avg_pool", global_avg_pool),
    ("concat_channels", concat_channels),
    ("pixel_shuffle", pixel_shuffle),
    ("l1_loss", l1_loss),
    ("linear", linear),
    ("bernoulli_log_prob", bernoulli_log_prob),
    ("sum_all", sum_all),
    ("gather_row", gather_row),
    ("lstm_cell", lstm),
];

pub const COMPOSED: &[Case] = &[
    ("channel_attention", attention),
    ("mix_node", mix_node),
    ("local_fusion", local),
    ("global_fusion", global),
    ("child_forward", child_forward),
];

fn dims(seed: u64) -> (rand_chacha::ChaCha8Rng, usize, usize, usize, usize) {
    let mut r = rng(seed);
    let b = r.random_range(1..=2);
    let c = r.random_range(1..=3);
    let h = r.random_range(2..=5);
    let w = r.random_range(2..=5);
    (r, b, c, h, w)
}

fn conv_case(seed: u64, dilation: usize, depthwise: bool, k: usize) -> f64 {
    let (mut r, b, c, h, w) = dims(seed);
    let cout = if depthwise { c } else { r.random_range(1..=3) };
    let kin = if depthwise { 1 } else { c };
    let x = random_tensor(&[b, c, h, w], &mut r);
    let kern = random_tensor(&[cout, kin, k, k], &mut r);
    let bias = random_tensor(&[cout], &mut r);
    check_inputs(&[x, kern, bias], seed, |g, v| g.conv2d(v[0], v[1], Some(v[2]), dilation, depthwise))
}

fn conv2d(seed: u64) -> f64 {
    conv_case(seed, 1, false, 3)
}

fn conv2d_dilated(seed: u64) -> f64 {
    conv_case(seed, 3, false, 3)
}

fn conv2d_depthwise(seed: u64) -> f64 {
    conv_case(seed, 1, true, 3)
}

fn conv2d_pointwise(seed: u64) -> f64 {
    conv_case(seed, 1, false, 1)
}

fn pair(seed: u64) -> (rand_chacha::ChaCha8Rng, Vec<usize>) {
    let (r, b, c, h, w) = dims(seed);
    (r, vec![b, c, h, w])
}

fn add(seed: u64) -> f64 {
    let (mut r, s) = pair(seed);
    let a = random_tensor(&s, &mut r);
    let b = random_tensor(&s, &mut r);
    check_inputs(&[a, b], seed, |g, v| g.add(v[0], v[1]))
}

fn add_n(seed: u64) -> f64 {
    let (mut r, s) = pair(seed);
    let n = r.random_range(1..=4);
    let xs: Vec<Tensor> = (0..n).map(|_| random_tensor(&s, &mut r)).collect();
    check_inputs(&xs, seed, |g, v| g.add_n(v))
}

fn scale(seed: u64) -> f64 {
    let (mut r, s) = pair(seed);
    let a = random_tensor(&s, &mut r);
    let f = r.random_range(-3.0..3.0);
    check_inputs(&[a], seed, |g, v| Ok(g.scale(v[0], f)))
}

fn mul(seed: u64) -> f64 {
    let (mut r, s) = pair(seed);
    let a = random_tensor(&s, &mut r);
    let b = random_tensor(&s, &mut r);
    check_inputs(&[a, b], seed, |g, v| g.mul(v[0], v[1]))
}

fn mean_over(seed: u64) -> f64 {
    let (mut r, s) = pair(seed);
    let n = r.random_range(1..=4);
    let xs: Vec<Tensor> = (0..n).map(|_| random_tensor(&s, &mut r)).collect();
    check_inputs(&xs, seed, |g, v| g.mean_over(v))
}

fn relu(seed: u64) -> f64 {
    let (mut r, s) = pair(seed);
    let a = away_from_zero(&s, &mut r);
    check_inputs(&[a], seed, |g, v| Ok(g.relu(v[0])))
}

fn sigmoid(seed: u64) -> f64 {
    let (mut r, s) = pair(seed);
    let a = random_tensor(&s, &mut r).map(|x| 4.0 * x);
    check_inputs(&[a], seed, |g, v| Ok(g.sigmoid(v[0])))
}

fn tanh(seed: u64) -> f64 {
    let (mut r, s) = pair(seed);
    let a = random_tensor(&s, &mut r).map(|x| 3.0 * x);
    check_inputs(&[a], seed, |g, v| Ok(g.tanh(v[0])))
}

fn bias_add(seed: u64) -> f64 {
    let (mut r, b, c, h, w) = dims(seed);
    let x = random_tensor(&[b, c, h, w], &mut r);
    let bias = random_tensor(&[c], &mut r);
    check_inputs(&[x, bias], seed, |g, v| g.bias_add(v[0], v[1]))
}

fn channel_scale(seed: u64) -> f64 {
    let (mut r, b, c, h, w) = dims(seed);
    let x = random_tensor(&[b, c, h, w], &mut r);
    let s = random_tensor(&[b, c, 1, 1], &mut r);
    check_inputs(&[x, s], seed, |g, v| g.channel_scale(v[0], v[1]))
}

fn global_avg_pool(seed: u64) -> f64 {
    let (mut r, s) = pair(seed);
    let x = random_tensor(&s, &mut r);
    check_inputs(&[x], seed, |g, v| g.global_avg_pool(v[0]))
}

fn concat_channels(seed: u64) -> f64 {
    let (mut r, b, _, h, w) = dims(seed);
    let n = r.random_range(1..=3);
    let xs: Vec<Tensor> = (0..n)
        .map(|_| {
            let c = r.random_range(1..=3);
            random_tensor(&[b, c, h, w], &mut r)
        })
        .collect();
    check_inputs(&xs, seed, |g, v| g.concat_channels(v))
}

fn pixel_shuffle(seed: u64) -> f64 {
    let (mut r, b, c, h, w) = dims(seed);
    let f = r.random_range(2..=3);
    let x = random_tensor(&[b, c * f * f, h, w], &mut r);
    check_inputs(&[x], seed, |g, v| g.pixel_shuffle(v[0], f))
}

fn l1_loss(seed: u64) -> f64 {
    let (mut r, s) = pair(seed);
    let target = random_tensor(&s, &mut r);
    let offset = away_from_zero(&s, &mut r);
    let pred = Tensor::new(s.clone(), target.data().iter().zip(offset.data()).map(|(a, b)| a + b).collect()).unwrap();
    check_inputs(&[pred, target], seed, |g, v| g.l1_loss(v[0], v[1]))
}

fn linear(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (b, fin, fout) = (r.random_range(1..=3), r.random_range(1..=5), r.random_range(1..=5));
    let x = random_tensor(&[b, fin], &mut r);
    let w = random_tensor(&[fout, fin], &mut r);
    let bias = random_tensor(&[fout], &mut r);
    check_inputs(&[x, w, bias], seed, |g, v| g.linear(v[0], v[1], Some(v[2])))
}

fn bernoulli_log_prob(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(1..=6);
    let logits = random_tensor(&[1, n], &mut r).map(|x| 5.0 * x);
    let bits: Vec<bool> = (0..n).map(|_| r.random()).collect();
    check_inputs(&[logits], seed, move |g, v| g.bernoulli_log_prob(v[0], &bits))
}

fn sum_all(seed: u64) -> f64 {
    let (mut r, s) = pair(seed);
    let x = random_tensor(&s, &mut r);
    check_inputs(&[x], seed, |g, v| Ok(g.sum_all(v[0])))
}

fn gather_row(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (rows, dim) = (r.random_range(1..=6), r.random_range(1..=4));
    let index = r.random_range(0..rows);
    let table = random_tensor(&[rows, dim], &mut r);
    check_inputs(&[table], seed, move |g, v| g.gather_row(v[0], index))
}

fn lstm(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (fin, h) = (r.random_range(1..=4), r.random_range(1..=4));
    let mut inputs = vec![
        random_tensor(&[1, fin], &mut r),
        random_tensor(&[1, h], &mut r),
        random_tensor(&[1, h], &mut r),
    ];
    for _ in 0..4 {
        inputs.push(random_tensor(&[h, fin], &mut r));
        inputs.push(random_tensor(&[h, h], &mut r));
        inputs.push(random_tensor(&[h], &mut r));
    }
    check_inputs(&inputs, seed, |g, v| {
        let p = LstmParams {
            w: [v[3], v[6], v[9], v[12]],
            u: [v[4], v[7], v[10], v[13]],
            b: [v[5], v[8], v[11], v[14]],
        };
        let (h, c) = lstm_cell(g, v[0], v[1], v[2], &p)?;
        let hc = g.mul(h, c)?;
        g.add(hc, h)
    })
}

/// A bank over a tiny random space with every value randomised.
pub fn tiny_bank(r: &mut impl Rng, seed: u64) -> SharedWeightBank {
    let n = r.random_range(1..=2);
    let m = r.random_range(1..=3);
    let k = r.random_range(1..=3);
    let ch = r.random_range(2..=4);
    let mut config = SearchSpaceConfig::new(n, m, k, ch, 2, true).unwrap();
    config.local_residual = r.random();
    let mut bank = SharedWeightBank::new(&config, seed).unwrap();
    randomize_bank(&mut bank, 0.6, seed);
    bank
}

fn feature(r: &mut impl Rng, b: usize, ch: usize, hw: usize) -> Tensor {
    random_tensor(&[b, ch, hw, hw], r)
}

/// Checks input and parameter gradients of a bank-reading block, returning the larger error.
fn both(
    bank: &mut SharedWeightBank,
    inputs: &[Tensor],
    seed: u64,
    f: impl Fn(&mut Graph, &SharedWeightBank, &[srnas::numeric::Var]) -> srnas::Result<srnas::numeric::Var>,
) -> f64 {
    let e_in = {
        let b = &*bank;
        check_inputs(inputs, seed, |g, v| f(g, b, v))
    };
    let config = bank.config().clone();
    let by_store = |g: &mut Graph, s: &ParamStore| {
        let tmp = SharedWeightBank::with_store(&config, s.clone())?;
        let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        f(g, &tmp, &vars)
    };
    let ids = used_ids(bank.store(), by_store);
    let e_par = check_params(bank.store_mut(), &ids, seed ^ 1, by_store);
    e_in.max(e_par)
}

fn attention(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut bank = tiny_bank(&mut r, seed);
    let ch = bank.config().feature_channels;
    let m = bank.config().mix_nodes;
    let (dnb, node) = (r.random_range(0..bank.config().num_blocks), r.random_range(1..=m));
    let x = feature(&mut r, 2, ch, 3);
    both(&mut bank, &[x], seed, |g, b, v| {
        channel_attention(g, b, v[0], b.attention_keys(dnb, node))
    })
}

fn mix_node(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut bank = tiny_bank(&mut r, seed);
    let config = bank.config().clone();
    let mut arch = random_arch(&config, &mut r);
    let node = r.random_range(1..=config.mix_nodes);
    let dnb = r.random_range(0..config.num_blocks);
    // Force at least one active bit so the check exercises the edges.
    arch.mix[srnas::arch_space::block_index(node, 0)][0] = true;
    let inputs: Vec<Tensor> = (0..node).map(|_| feature(&mut r, 1, config.feature_channels, 4)).collect();
    both(&mut bank, &inputs, seed, |g, b, v| mix_node_forward(g, b, &arch, dnb, node, v))
}

fn local(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut bank = tiny_bank(&mut r, seed);
    let config = bank.config().clone();
    let gates: Vec<bool> = (0..config.mix_nodes).map(|_| r.random()).collect();
    let dnb = r.random_range(0..config.num_blocks);
    let inputs: Vec<Tensor> = (0..=config.mix_nodes)
        .map(|_| feature(&mut r, 2, config.feature_channels, 3))
        .collect();
    both(&mut bank, &inputs, seed, |g, b, v| local_fusion(g, b, dnb, v, &gates))
}

fn global(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut bank = tiny_bank(&mut r, seed);
    let config = bank.config().clone();
    let gates: Vec<bool> = (0..config.num_blocks).map(|_| r.random()).collect();
    let inputs: Vec<Tensor> = (0..=config.num_blocks)
        .map(|_| feature(&mut r, 2, config.feature_channels, 3))
        .collect();
    both(&mut bank, &inputs, seed, |g, b, v| global_fusion(g, b, v, &gates))
}

fn child_forward(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut bank = tiny_bank(&mut r, seed);
    let config = bank.config().clone();
    let arch = random_arch(&config, &mut r);
    let lr = random_tensor(&[1, 3, 3, 3], &mut r);
    both(&mut bank, &[lr], seed, |g, b, v| build(&arch, &config, b)?.forward(g, v[0]))
}
