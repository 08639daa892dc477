//! The child super-resolution network and the shared weight bank it reads.
//!
//! Every parameter any architecture could use is allocated once in a
//! [`SharedWeightBank`]. A [`ChildNetwork`] is a view that evaluates only the
//! keys its genome activates. Concatenate-then-convolve stages are evaluated
//! as sums of per-source convolutions with one bias per output, which is the
//! same linear map but lets architectures with different fan-in share kernels.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch_space::{block_index, is_identity_node, validate, ArchitectureSequence, OpKind, SearchSpaceConfig};
use crate::error::{Error, Result};
use crate::numeric::{checkpoint, variance_scaled, Graph, ParamId, ParamStore, Tensor, Var};
use crate::param_count::{ca_hidden, IMAGE_CHANNELS};

/// Kernels of one `(block, node, source, op)` edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKeys {
    /// A full 3×3 kernel, plain or dilated.
    Dense(ParamId),
    /// Depthwise 3×3 kernel followed by a pointwise 1×1 kernel.
    Separable { depthwise: ParamId, pointwise: ParamId },
}

impl EdgeKeys {
    fn ids(self) -> Vec<ParamId> {
        match self {
            EdgeKeys::Dense(id) => vec![id],
            EdgeKeys::Separable {
                depthwise,
                pointwise,
            } => vec![depthwise, pointwise],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionKeys {
    pub down_w: ParamId,
    pub down_b: ParamId,
    pub up_w: ParamId,
    pub up_b: ParamId,
}

#[derive(Debug, Clone)]
struct BlockKeys {
    adapter_src: Vec<ParamId>,
    adapter_b: ParamId,
    /// `[block_index(node, source)][op]`
    edges: Vec<Vec<EdgeKeys>>,
    /// `[node - 1][op]`
    op_bias: Vec<Vec<ParamId>>,
    attention: Vec<AttentionKeys>,
    local_src: Vec<ParamId>,
    local_b: ParamId,
}

#[derive(Debug, Clone)]
struct BankKeys {
    sfe1_w: ParamId,
    sfe1_b: ParamId,
    sfe2_w: ParamId,
    sfe2_b: ParamId,
    blocks: Vec<BlockKeys>,
    global_src: Vec<ParamId>,
    global_b: ParamId,
    global_conv_w: ParamId,
    global_conv_b: ParamId,
    up_w: ParamId,
    up_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

/// Persistent parameters for every candidate edge and fixed layer of a space.
#[derive(Debug, Clone)]
pub struct SharedWeightBank {
    config: SearchSpaceConfig,
    store: ParamStore,
    keys: BankKeys,
}

struct Alloc<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Alloc<'_> {
    fn weight(&mut self, name: String, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let t = variance_scaled(shape, fan_in, &mut self.rng);
        self.store.insert(name, t)
    }

    fn bias(&mut self, name: String, n: usize) -> Result<ParamId> {
        self.store.insert(name, Tensor::zeros(&[n]))
    }
}

impl SharedWeightBank {
    /// Allocates and initializes every key of the space from `seed`.
    pub fn new(config: &SearchSpaceConfig, seed: u64) -> Result<Self> {
        config.check()?;
        let g = config.feature_channels;
        let (n, m) = (config.num_blocks, config.mix_nodes);
        let r = ca_hidden(g);
        let s2 = config.scale * config.scale;
        let mut store = ParamStore::new();
        let mut a = Alloc {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };

        let sfe1_w = a.weight("sfe1.w".into(), &[g, IMAGE_CHANNELS, 3, 3], 9 * IMAGE_CHANNELS)?;
        let sfe1_b = a.bias("sfe1.b".into(), g)?;
        let sfe2_w = a.weight("sfe2.w".into(), &[g, g, 3, 3], 9 * g)?;
        let sfe2_b = a.bias("sfe2.b".into(), g)?;

        let mut blocks = Vec::with_capacity(n);
        for d in 0..n {
            let p = format!("dnb{d}");
            let adapter_src = (0..=d)
                .map(|j| a.weight(format!("{p}.adapter.src{j}.w"), &[g, g, 1, 1], (d + 1) * g))
                .collect::<Result<Vec<_>>>()?;
            let adapter_b = a.bias(format!("{p}.adapter.b"), g)?;
            let mut edges = vec![Vec::new(); config.mix_blocks()];
            let mut op_bias = Vec::with_capacity(m);
            let mut attention = Vec::with_capacity(m);
            for node in 1..=m {
                for j in 0..node {
                    let mut per_op = Vec::with_capacity(config.num_ops);
                    for (k, op) in config.op_list.iter().enumerate() {
                        let base = format!("{p}.node{node}.src{j}.op{k}");
                        let keys = match op {
                            OpKind::Conv3x3 | OpKind::Dilated3x3Rate3 => {
                                EdgeKeys::Dense(a.weight(format!("{base}.w"), &[g, g, 3, 3], 9 * g * node)?)
                            }
                            OpKind::DepthwiseSeparable3x3 => EdgeKeys::Separable {
                                depthwise: a.weight(format!("{base}.dw"), &[g, 1, 3, 3], 9)?,
                                pointwise: a.weight(format!("{base}.pw"), &[g, g, 1, 1], g * node)?,
                            },
                        };
                        per_op.push(keys);
                    }
                    edges[block_index(node, j)] = per_op;
                }
                op_bias.push(
                    (0..config.num_ops)
                        .map(|k| a.bias(format!("{p}.node{node}.op{k}.b"), g))
                        .collect::<Result<Vec<_>>>()?,
                );
                attention.push(AttentionKeys {
                    down_w: a.weight(format!("{p}.node{node}.ca.down.w"), &[r, g, 1, 1], g)?,
                    down_b: a.bias(format!("{p}.node{node}.ca.down.b"), r)?,
                    up_w: a.weight(format!("{p}.node{node}.ca.up.w"), &[g, r, 1, 1], r)?,
                    up_b: a.bias(format!("{p}.node{node}.ca.up.b"), g)?,
                });
            }
            let local_src = (0..=m)
                .map(|j| a.weight(format!("{p}.lff.src{j}.w"), &[g, g, 1, 1], (m + 1) * g))
                .collect::<Result<Vec<_>>>()?;
            let local_b = a.bias(format!("{p}.lff.b"), g)?;
            blocks.push(BlockKeys {
                adapter_src,
                adapter_b,
                edges,
                op_bias,
                attention,
                local_src,
                local_b,
            });
        }

        let global_src = (0..=n)
            .map(|i| a.weight(format!("gff.src{i}.w"), &[g, g, 1, 1], (n + 1) * g))
            .collect::<Result<Vec<_>>>()?;
        let global_b = a.bias("gff.b".into(), g)?;
        let global_conv_w = a.weight("gff.conv.w".into(), &[g, g, 3, 3], 9 * g)?;
        let global_conv_b = a.bias("gff.conv.b".into(), g)?;
        let up_w = a.weight("up.conv.w".into(), &[g * s2, g, 3, 3], 9 * g)?;
        let up_b = a.bias("up.conv.b".into(), g * s2)?;
        let out_w = a.weight("up.out.w".into(), &[IMAGE_CHANNELS, g, 3, 3], 9 * g)?;
        let out_b = a.bias("up.out.b".into(), IMAGE_CHANNELS)?;

        let keys = BankKeys {
            sfe1_w,
            sfe1_b,
            sfe2_w,
            sfe2_b,
            blocks,
            global_src,
            global_b,
            global_conv_w,
            global_conv_b,
            up_w,
            up_b,
            out_w,
            out_b,
        };
        Ok(Self {
            config: config.clone(),
            store,
            keys,
        })
    }

    /// Re-attaches a store read from a checkpoint; every key must be present
    /// with the allocated shape.
    pub fn with_store(config: &SearchSpaceConfig, store: ParamStore) -> Result<Self> {
        let mut bank = Self::new(config, 0)?;
        if store.len() != bank.store.len() {
            return Err(Error::Bank(format!(
                "checkpoint holds {} tensors, the space needs {}",
                store.len(),
                bank.store.len()
            )));
        }
        for id in bank.store.ids() {
            let name = bank.store.name(id);
            let other = store
                .id(name)
                .ok_or_else(|| Error::Bank(format!("checkpoint lacks {name}")))?;
            if other != id || store.value(other).shape() != bank.store.value(id).shape() {
                return Err(Error::Bank(format!("checkpoint entry {name} does not match")));
            }
        }
        bank.store = store;
        Ok(bank)
    }

    pub fn config(&self) -> &SearchSpaceConfig {
        &self.config
    }

    pub fn save(&self, path: &std::path::Path, deterministic: bool) -> Result<()> {
        let meta = serde_json::json!({ "kind": "bank", "space": self.config });
        checkpoint::save(path, &self.store, &meta, deterministic)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (store, meta) = checkpoint::load(path)?;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("bank") {
            return Err(Error::Format(format!("{} is not a weight-bank checkpoint", path.display())));
        }
        let config: SearchSpaceConfig = serde_json::from_value(meta["space"].clone())?;
        Self::with_store(&config, store)
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Kernels of edge `source → node` for operation `op` in block `dnb` (0-based).
    pub fn edge_keys(&self, dnb: usize, node: usize, source: usize, op: usize) -> EdgeKeys {
        self.keys.blocks[dnb].edges[block_index(node, source)][op]
    }

    pub fn op_bias_key(&self, dnb: usize, node: usize, op: usize) -> ParamId {
        self.keys.blocks[dnb].op_bias[node - 1][op]
    }

    pub fn attention_keys(&self, dnb: usize, node: usize) -> AttentionKeys {
        self.keys.blocks[dnb].attention[node - 1]
    }

    /// 1×1 kernels of the local fusion stage of `dnb`, one per source `F_{d,0..M}`, and its bias.
    pub fn local_fusion_keys(&self, dnb: usize) -> (&[ParamId], ParamId) {
        let b = &self.keys.blocks[dnb];
        (&b.local_src, b.local_b)
    }

    /// 1×1 kernels of the global fusion stage, one per source `F_0..F_N`, and its bias.
    pub fn global_fusion_keys(&self) -> (&[ParamId], ParamId) {
        (&self.keys.global_src, self.keys.global_b)
    }

    /// Keys every architecture uses.
    pub fn fixed_keys(&self) -> BTreeSet<ParamId> {
        let k = &self.keys;
        let mut set: BTreeSet<ParamId> = [
            k.sfe1_w,
            k.sfe1_b,
            k.sfe2_w,
            k.sfe2_b,
            k.global_b,
            k.global_conv_w,
            k.global_conv_b,
            k.up_w,
            k.up_b,
            k.out_w,
            k.out_b,
        ]
        .into_iter()
        .collect();
        set.insert(*k.global_src.last().expect("N+1 sources"));
        for b in &k.blocks {
            set.extend(&b.adapter_src);
            set.insert(b.adapter_b);
            set.insert(*b.local_src.last().expect("M+1 sources"));
            set.insert(b.local_b);
        }
        set
    }

    fn check_config(&self, config: &SearchSpaceConfig) -> Result<()> {
        let a = &self.config;
        let same = a.num_blocks == config.num_blocks
            && a.mix_nodes == config.mix_nodes
            && a.num_ops == config.num_ops
            && a.feature_channels == config.feature_channels
            && a.scale == config.scale
            && a.op_list == config.op_list;
        if same {
            Ok(())
        } else {
            Err(Error::Bank(format!(
                "bank was allocated for N={} M={} K={} G={} x{}",
                a.num_blocks, a.mix_nodes, a.num_ops, a.feature_channels, a.scale
            )))
        }
    }
}

/// An architecture bound to a weight bank.
#[derive(Debug, Clone)]
pub struct ChildNetwork<'a> {
    bank: &'a SharedWeightBank,
    arch: ArchitectureSequence,
    config: SearchSpaceConfig,
    identity: Vec<bool>,
    active: BTreeSet<ParamId>,
}

/// Binds `arch` to `bank`, resolving the keys it activates.
pub fn build<'a>(
    arch: &ArchitectureSequence,
    config: &SearchSpaceConfig,
    bank: &'a SharedWeightBank,
) -> Result<ChildNetwork<'a>> {
    validate(arch, config).into_result()?;
    bank.check_config(config)?;
    let m = config.mix_nodes;
    let identity = (1..=m)
        .map(|node| is_identity_node(arch, node))
        .collect::<Result<Vec<_>>>()?;

    let mut active = bank.fixed_keys();
    for d in 0..config.num_blocks {
        for node in 1..=m {
            if identity[node - 1] {
                continue;
            }
            for k in 0..config.num_ops {
                let mut any = false;
                for j in 0..node {
                    if arch.edge_active(node, j, k) {
                        active.extend(bank.edge_keys(d, node, j, k).ids());
                        any = true;
                    }
                }
                if any {
                    active.insert(bank.op_bias_key(d, node, k));
                }
            }
            let ca = bank.attention_keys(d, node);
            active.extend([ca.down_w, ca.down_b, ca.up_w, ca.up_b]);
        }
        let (src, _) = bank.local_fusion_keys(d);
        for (i, &gate) in arch.local_fusion.iter().enumerate() {
            if gate {
                active.insert(src[i]);
            }
        }
    }
    let (src, _) = bank.global_fusion_keys();
    for (i, &gate) in arch.global_fusion.iter().enumerate() {
        if gate {
            active.insert(src[i]);
        }
    }
    Ok(ChildNetwork {
        bank,
        arch: arch.clone(),
        config: config.clone(),
        identity,
        active,
    })
}

fn param(g: &mut Graph, bank: &SharedWeightBank, id: ParamId) -> Var {
    g.param(bank.store(), id)
}

/// Sum of per-source 1×1 convolutions plus one bias: the decomposed form of a
/// 1×1 convolution over the concatenation of `sources`.
fn fused_1x1(g: &mut Graph, bank: &SharedWeightBank, sources: &[(Var, ParamId)], bias: ParamId) -> Result<Var> {
    let mut terms = Vec::with_capacity(sources.len());
    for &(x, key) in sources {
        let w = param(g, bank, key);
        terms.push(g.conv2d(x, w, None, 1, false)?);
    }
    let sum = g.add_n(&terms)?;
    let b = param(g, bank, bias);
    g.bias_add(sum, b)
}

fn edge_forward(g: &mut Graph, bank: &SharedWeightBank, x: Var, keys: EdgeKeys, op: OpKind) -> Result<Var> {
    match keys {
        EdgeKeys::Dense(id) => {
            let w = param(g, bank, id);
            g.conv2d(x, w, None, op.dilation(), false)
        }
        EdgeKeys::Separable {
            depthwise,
            pointwise,
        } => {
            let dw = param(g, bank, depthwise);
            let mid = g.conv2d(x, dw, None, 1, true)?;
            let pw = param(g, bank, pointwise);
            g.conv2d(mid, pw, None, 1, false)
        }
    }
}

/// Channel attention: pool, reduce, ReLU, restore, sigmoid, rescale.
pub fn channel_attention(g: &mut Graph, bank: &SharedWeightBank, x: Var, keys: AttentionKeys) -> Result<Var> {
    let pooled = g.global_avg_pool(x)?;
    let dw = param(g, bank, keys.down_w);
    let db = param(g, bank, keys.down_b);
    let squeezed = g.conv2d(pooled, dw, Some(db), 1, false)?;
    let squeezed = g.relu(squeezed);
    let uw = param(g, bank, keys.up_w);
    let ub = param(g, bank, keys.up_b);
    let restored = g.conv2d(squeezed, uw, Some(ub), 1, false)?;
    let weights = g.sigmoid(restored);
    g.channel_scale(x, weights)
}

/// Output of mix node `node` of block `dnb` given `inputs = [F_{d,0}, …, F_{d,node-1}]`.
///
/// A node with no active bit returns `F_{d,node-1}` itself. Otherwise each
/// operation with at least one selected source contributes the sum of its
/// per-edge outputs plus its bias; the contributions are averaged, rectified
/// and passed through channel attention.
pub fn mix_node_forward(
    g: &mut Graph,
    bank: &SharedWeightBank,
    arch: &ArchitectureSequence,
    dnb: usize,
    node: usize,
    inputs: &[Var],
) -> Result<Var> {
    let config = bank.config();
    if inputs.len() != node {
        return Err(Error::Shape(format!(
            "mix node {node} takes {node} inputs, got {}",
            inputs.len()
        )));
    }
    if is_identity_node(arch, node)? {
        return Ok(inputs[node - 1]);
    }
    let mut per_op = Vec::new();
    for (k, &op) in config.op_list.iter().enumerate() {
        let mut terms = Vec::new();
        for (j, &x) in inputs.iter().enumerate() {
            if arch.edge_active(node, j, k) {
                terms.push(edge_forward(g, bank, x, bank.edge_keys(dnb, node, j, k), op)?);
            }
        }
        if terms.is_empty() {
            continue;
        }
        let sum = g.add_n(&terms)?;
        let b = param(g, bank, bank.op_bias_key(dnb, node, k));
        per_op.push(g.bias_add(sum, b)?);
    }
    let mean = g.mean_over(&per_op)?;
    let act = g.relu(mean);
    channel_attention(g, bank, act, bank.attention_keys(dnb, node))
}

/// Local fusion of block `dnb` over `features = [F_{d,0}, …, F_{d,M}]`.
///
/// Gate `i` admits `F_{d,i}` for `i < M`; `F_{d,M}` always contributes. The
/// block input is added back when the residual is enabled.
pub fn local_fusion(
    g: &mut Graph,
    bank: &SharedWeightBank,
    dnb: usize,
    features: &[Var],
    gates: &[bool],
) -> Result<Var> {
    let m = bank.config().mix_nodes;
    if features.len() != m + 1 || gates.len() != m {
        return Err(Error::Shape(format!(
            "local fusion takes {} features and {m} gates",
            m + 1
        )));
    }
    let (src, bias) = bank.local_fusion_keys(dnb);
    let mut sources: Vec<(Var, ParamId)> = (0..m)
        .filter(|&i| gates[i])
        .map(|i| (features[i], src[i]))
        .collect();
    sources.push((features[m], src[m]));
    let fused = fused_1x1(g, bank, &sources, bias)?;
    if bank.config().local_residual {
        g.add(fused, features[0])
    } else {
        Ok(fused)
    }
}

/// Global fusion over `features = [F_0, …, F_N]`: gated 1×1 fusion (with `F_N`
/// unconditional) followed by a 3×3 convolution.
pub fn global_fusion(g: &mut Graph, bank: &SharedWeightBank, features: &[Var], gates: &[bool]) -> Result<Var> {
    let n = bank.config().num_blocks;
    if features.len() != n + 1 || gates.len() != n {
        return Err(Error::Shape(format!(
            "global fusion takes {} features and {n} gates",
            n + 1
        )));
    }
    let (src, bias) = bank.global_fusion_keys();
    let mut sources: Vec<(Var, ParamId)> = (0..n)
        .filter(|&i| gates[i])
        .map(|i| (features[i], src[i]))
        .collect();
    sources.push((features[n], src[n]));
    let fused = fused_1x1(g, bank, &sources, bias)?;
    let w = param(g, bank, bank.keys.global_conv_w);
    let b = param(g, bank, bank.keys.global_conv_b);
    g.conv2d(fused, w, Some(b), 1, false)
}

impl<'a> ChildNetwork<'a> {
    pub fn arch(&self) -> &ArchitectureSequence {
        &self.arch
    }

    pub fn bank(&self) -> &'a SharedWeightBank {
        self.bank
    }

    /// Bank keys this architecture reads.
    pub fn active_keys(&self) -> &BTreeSet<ParamId> {
        &self.active
    }

    /// Parameter values read by this architecture.
    pub fn active_value_count(&self) -> usize {
        self.active
            .iter()
            .map(|&id| self.bank.store().value(id).len())
            .sum()
    }

    pub fn is_identity(&self, node: usize) -> bool {
        self.identity[node - 1]
    }

    /// Records the forward pass on `g`; `lr` is `(B, 3, h, w)`, the result
    /// `(B, 3, h·s, w·s)`.
    pub fn forward(&self, g: &mut Graph, lr: Var) -> Result<Var> {
        let shape = g.shape(lr).to_vec();
        if shape.len() != 4 || shape[1] != IMAGE_CHANNELS {
            return Err(Error::Shape(format!(
                "expected a (B, {IMAGE_CHANNELS}, h, w) input, got {shape:?}"
            )));
        }
        let bank = self.bank;
        let k = &bank.keys;
        let cfg = &self.config;

        let w = param(g, bank, k.sfe1_w);
        let b = param(g, bank, k.sfe1_b);
        let shallow = g.conv2d(lr, w, Some(b), 1, false)?;
        let w = param(g, bank, k.sfe2_w);
        let b = param(g, bank, k.sfe2_b);
        let f0 = g.conv2d(shallow, w, Some(b), 1, false)?;

        let mut blocks_out = vec![f0];
        for d in 0..cfg.num_blocks {
            let keys = &k.blocks[d];
            let sources: Vec<(Var, ParamId)> = blocks_out
                .iter()
                .zip(&keys.adapter_src)
                .map(|(&x, &id)| (x, id))
                .collect();
            let input = fused_1x1(g, bank, &sources, keys.adapter_b)?;
            let mut nodes = vec![input];
            for node in 1..=cfg.mix_nodes {
                let out = mix_node_forward(g, bank, &self.arch, d, node, &nodes)?;
                nodes.push(out);
            }
            let fd = local_fusion(g, bank, d, &nodes, &self.arch.local_fusion)?;
            blocks_out.push(fd);
        }

        let fused = global_fusion(g, bank, &blocks_out, &self.arch.global_fusion)?;
        let skip = g.add(fused, shallow)?;
        let w = param(g, bank, k.up_w);
        let b = param(g, bank, k.up_b);
        let up = g.conv2d(skip, w, Some(b), 1, false)?;
        let up = g.pixel_shuffle(up, cfg.scale)?;
        let w = param(g, bank, k.out_w);
        let b = param(g, bank, k.out_b);
        g.conv2d(up, w, Some(b), 1, false)
    }

    /// Inference without keeping the graph.
    pub fn predict(&self, lr: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(lr.clone());
        let y = self.forward(&mut g, x)?;
        Ok(g.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch_space::{decode_decimal, PUBLISHED_DIGITS};
    use crate::param_count::count_params;

    fn small() -> SearchSpaceConfig {
        SearchSpaceConfig::new(2, 2, 3, 4, 2, true).unwrap()
    }

    #[test]
    fn output_shape_follows_scale() {
        let config = SearchSpaceConfig::new(1, 2, 3, 4, 2, false).unwrap();
        let bank = SharedWeightBank::new(&config, 1).unwrap();
        let net = build(&ArchitectureSequence::all_ones(&config), &config, &bank).unwrap();
        let y = net.predict(&Tensor::zeros(&[1, 3, 16, 16])).unwrap();
        assert_eq!(y.shape(), &[1, 3, 32, 32]);
    }

    #[test]
    fn degenerate_architecture_still_maps_lr_to_hr() {
        let config = small();
        let bank = SharedWeightBank::new(&config, 3).unwrap();
        let arch = ArchitectureSequence::all_zeros(&config);
        let net = build(&arch, &config, &bank).unwrap();
        assert!(net.is_identity(1) && net.is_identity(2));
        let x = Tensor::from_fn(&[2, 3, 5, 6], |i| (i as f64 * 0.37).sin());
        let y = net.predict(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 10, 12]);
        assert!(y.is_finite());
    }

    #[test]
    fn identity_node_returns_the_same_node() {
        let config = small();
        let bank = SharedWeightBank::new(&config, 3).unwrap();
        let arch = ArchitectureSequence::all_zeros(&config);
        let mut g = Graph::new();
        let a = g.input(Tensor::full(&[1, 4, 3, 3], 0.5));
        let b = g.input(Tensor::full(&[1, 4, 3, 3], 0.25));
        let out = mix_node_forward(&mut g, &bank, &arch, 0, 2, &[a, b]).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn mismatched_bank_is_rejected() {
        let bank = SharedWeightBank::new(&small(), 0).unwrap();
        let other = SearchSpaceConfig::new(2, 2, 3, 8, 2, true).unwrap();
        let arch = ArchitectureSequence::all_ones(&other);
        assert!(matches!(build(&arch, &other, &bank), Err(Error::Bank(_))));
    }

    #[test]
    fn published_architecture_matches_closed_form_count() {
        let config = SearchSpaceConfig::paper();
        let bank = SharedWeightBank::new(&config, 0).unwrap();
        let arch = decode_decimal(&PUBLISHED_DIGITS, &config).unwrap();
        let net = build(&arch, &config, &bank).unwrap();
        assert_eq!(net.active_value_count(), count_params(&arch, &config).unwrap().total);
    }
}
