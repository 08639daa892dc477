//! Concatenate-then-convolve reference implementations of the gated stages.
//! Each `*_gap` returns the largest elementwise difference between the
//! library block and its oracles on a random instance.

use rand::Rng;
use srnas::arch_space::{block_index, is_identity_node, ArchitectureSequence};
use srnas::child_net::{global_fusion, local_fusion, mix_node_forward, EdgeKeys, SharedWeightBank};
use srnas::numeric::{Graph, ParamId, Tensor, Var};

use super::cases::tiny_bank;
use super::{random_arch, random_tensor, rng};

/// Joins `(O, I_j, kh, kw)` kernels along the input axis.
pub fn concat_in(kernels: &[&Tensor]) -> Tensor {
    let s = kernels[0].shape();
    let (o, kh, kw) = (s[0], s[2], s[3]);
    let total: usize = kernels.iter().map(|k| k.shape()[1]).sum();
    let mut data = Vec::with_capacity(o * total * kh * kw);
    for oi in 0..o {
        for k in kernels {
            let i = k.shape()[1];
            let span = i * kh * kw;
            data.extend_from_slice(&k.data()[oi * span..(oi + 1) * span]);
        }
    }
    Tensor::new(vec![o, total, kh, kw], data).unwrap()
}

/// Stacks kernels along the output axis.
pub fn concat_out(kernels: &[&Tensor]) -> Tensor {
    let s = kernels[0].shape();
    let total: usize = kernels.iter().map(|k| k.shape()[0]).sum();
    let data = kernels.iter().flat_map(|k| k.data().iter().copied()).collect();
    Tensor::new(vec![total, s[1], s[2], s[3]], data).unwrap()
}

fn value(bank: &SharedWeightBank, id: ParamId) -> Tensor {
    bank.store().value(id).clone()
}

/// One 1×1 convolution over the channel concatenation of `sources`.
fn concat_1x1(g: &mut Graph, bank: &SharedWeightBank, sources: &[(Var, ParamId)], bias: ParamId) -> Var {
    let xs: Vec<Var> = sources.iter().map(|s| s.0).collect();
    let ks: Vec<Tensor> = sources.iter().map(|s| value(bank, s.1)).collect();
    let x = g.concat_channels(&xs).unwrap();
    let w = g.constant(concat_in(&ks.iter().collect::<Vec<_>>()));
    let b = g.constant(value(bank, bias));
    g.conv2d(x, w, Some(b), 1, false).unwrap()
}

fn scaled(g: &mut Graph, x: Var, on: bool) -> Var {
    g.scale(x, if on { 1.0 } else { 0.0 })
}

fn gap(g: &Graph, a: Var, b: Var) -> f64 {
    g.value(a).max_abs_diff(g.value(b))
}

/// Local fusion of a random block against a concat over the gated sources
/// and against a concat over every source with closed gates zeroed.
pub fn local_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let bank = tiny_bank(&mut r, seed);
    let c = bank.config().clone();
    let m = c.mix_nodes;
    let dnb = r.random_range(0..c.num_blocks);
    let gates: Vec<bool> = (0..m).map(|_| r.random()).collect();
    let mut g = Graph::new();
    let feats: Vec<Var> = (0..=m)
        .map(|_| g.constant(random_tensor(&[2, c.feature_channels, 4, 4], &mut r)))
        .collect();
    let ours = local_fusion(&mut g, &bank, dnb, &feats, &gates).unwrap();

    let (src, bias) = bank.local_fusion_keys(dnb);
    let residual = |g: &mut Graph, y: Var| if c.local_residual { g.add(y, feats[0]).unwrap() } else { y };
    let mut kept: Vec<(Var, ParamId)> = (0..m).filter(|&i| gates[i]).map(|i| (feats[i], src[i])).collect();
    kept.push((feats[m], src[m]));
    let removed = concat_1x1(&mut g, &bank, &kept, bias);
    let removed = residual(&mut g, removed);

    let zeroed: Vec<(Var, ParamId)> = (0..=m)
        .map(|i| (scaled(&mut g, feats[i], i == m || gates[i]), src[i]))
        .collect();
    let zeroed = concat_1x1(&mut g, &bank, &zeroed, bias);
    let zeroed = residual(&mut g, zeroed);
    gap(&g, ours, removed).max(gap(&g, ours, zeroed))
}

/// Global fusion against the same two oracles followed by the 3×3 conv.
pub fn global_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let bank = tiny_bank(&mut r, seed);
    let c = bank.config().clone();
    let n = c.num_blocks;
    let gates: Vec<bool> = (0..n).map(|_| r.random()).collect();
    let mut g = Graph::new();
    let feats: Vec<Var> = (0..=n)
        .map(|_| g.constant(random_tensor(&[2, c.feature_channels, 4, 4], &mut r)))
        .collect();
    let ours = global_fusion(&mut g, &bank, &feats, &gates).unwrap();

    let (src, bias) = bank.global_fusion_keys();
    let conv_w = bank.store().id("gff.conv.w").expect("global conv kernel");
    let conv_b = bank.store().id("gff.conv.b").expect("global conv bias");
    let tail = |g: &mut Graph, y: Var| {
        let w = g.constant(value(&bank, conv_w));
        let b = g.constant(value(&bank, conv_b));
        g.conv2d(y, w, Some(b), 1, false).unwrap()
    };
    let mut kept: Vec<(Var, ParamId)> = (0..n).filter(|&i| gates[i]).map(|i| (feats[i], src[i])).collect();
    kept.push((feats[n], src[n]));
    let removed = concat_1x1(&mut g, &bank, &kept, bias);
    let removed = tail(&mut g, removed);
    let zeroed: Vec<(Var, ParamId)> = (0..=n)
        .map(|i| (scaled(&mut g, feats[i], i == n || gates[i]), src[i]))
        .collect();
    let zeroed = concat_1x1(&mut g, &bank, &zeroed, bias);
    let zeroed = tail(&mut g, zeroed);
    gap(&g, ours, removed).max(gap(&g, ours, zeroed))
}

/// Operation `op` applied to the concatenation of `inputs` with its
/// per-source kernels joined into one.
fn concat_op(g: &mut Graph, bank: &SharedWeightBank, d: usize, node: usize, op: usize, inputs: &[(usize, Var)]) -> Var {
    let xs: Vec<Var> = inputs.iter().map(|s| s.1).collect();
    let x = g.concat_channels(&xs).unwrap();
    let keys: Vec<EdgeKeys> = inputs.iter().map(|&(j, _)| bank.edge_keys(d, node, j, op)).collect();
    let kind = bank.config().op_list[op];
    let y = match keys[0] {
        EdgeKeys::Dense(_) => {
            let ks: Vec<Tensor> = keys
                .iter()
                .map(|k| match k {
                    EdgeKeys::Dense(id) => value(bank, *id),
                    _ => unreachable!(),
                })
                .collect();
            let w = g.constant(concat_in(&ks.iter().collect::<Vec<_>>()));
            g.conv2d(x, w, None, kind.dilation(), false).unwrap()
        }
        EdgeKeys::Separable { .. } => {
            let (dws, pws): (Vec<Tensor>, Vec<Tensor>) = keys
                .iter()
                .map(|k| match k {
                    EdgeKeys::Separable { depthwise, pointwise } => (value(bank, *depthwise), value(bank, *pointwise)),
                    _ => unreachable!(),
                })
                .unzip();
            let dw = g.constant(concat_out(&dws.iter().collect::<Vec<_>>()));
            let mid = g.conv2d(x, dw, None, 1, true).unwrap();
            let pw = g.constant(concat_in(&pws.iter().collect::<Vec<_>>()));
            g.conv2d(mid, pw, None, 1, false).unwrap()
        }
    };
    let b = g.constant(value(bank, bank.op_bias_key(d, node, op)));
    g.bias_add(y, b).unwrap()
}

fn attend(g: &mut Graph, bank: &SharedWeightBank, d: usize, node: usize, x: Var) -> Var {
    let k = bank.attention_keys(d, node);
    let pooled = g.global_avg_pool(x).unwrap();
    let [dw, db, uw, ub] = [k.down_w, k.down_b, k.up_w, k.up_b].map(|id| g.constant(value(bank, id)));
    let s = g.conv2d(pooled, dw, Some(db), 1, false).unwrap();
    let s = g.relu(s);
    let s = g.conv2d(s, uw, Some(ub), 1, false).unwrap();
    let s = g.sigmoid(s);
    g.channel_scale(x, s).unwrap()
}

fn mix_oracle(
    g: &mut Graph,
    bank: &SharedWeightBank,
    arch: &ArchitectureSequence,
    d: usize,
    node: usize,
    inputs: &[Var],
    zero_fill: bool,
) -> Var {
    if is_identity_node(arch, node).unwrap() {
        return inputs[node - 1];
    }
    let mut per_op = Vec::new();
    for op in 0..bank.config().num_ops {
        let bits: Vec<bool> = (0..node).map(|j| arch.mix[block_index(node, j)][op]).collect();
        if !bits.iter().any(|&b| b) {
            continue;
        }
        let sources: Vec<(usize, Var)> = if zero_fill {
            (0..node).map(|j| (j, scaled(g, inputs[j], bits[j]))).collect()
        } else {
            (0..node).filter(|&j| bits[j]).map(|j| (j, inputs[j])).collect()
        };
        per_op.push(concat_op(g, bank, d, node, op, &sources));
    }
    let mean = g.mean_over(&per_op).unwrap();
    let act = g.relu(mean);
    attend(g, bank, d, node, act)
}

/// Every mix node of a random genome against the concat oracle, with
/// unselected sources either dropped or zeroed.
pub fn mix_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let bank = tiny_bank(&mut r, seed);
    let c = bank.config().clone();
    let arch = random_arch(&c, &mut r);
    let d = r.random_range(0..c.num_blocks);
    let mut g = Graph::new();
    let mut worst: f64 = 0.0;
    for node in 1..=c.mix_nodes {
        let inputs: Vec<Var> = (0..node)
            .map(|_| g.constant(random_tensor(&[2, c.feature_channels, 4, 4], &mut r)))
            .collect();
        let ours = mix_node_forward(&mut g, &bank, &arch, d, node, &inputs).unwrap();
        let removed = mix_oracle(&mut g, &bank, &arch, d, node, &inputs, false);
        let zeroed = mix_oracle(&mut g, &bank, &arch, d, node, &inputs, true);
        worst = worst.max(gap(&g, ours, removed)).max(gap(&g, ours, zeroed));
    }
    worst
}
