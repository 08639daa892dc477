//! The densely connected search space: configuration, the bit-level
//! architecture genome, its decimal digest, validation and enumeration.
//!
//! A genome holds, for every mix node `i` in `1..=M` and every earlier node
//! `j < i`, one bit per candidate operation (the node reads `F_j` through
//! operation `k` when the bit is set), followed by `M` local and `N` global
//! fusion gates. Mix blocks are ordered `(1,0), (2,0), (2,1), (3,0), …`,
//! which is also the order the controller emits them in.

use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Candidate operation on a mix-node edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    #[serde(rename = "conv3x3")]
    Conv3x3,
    #[serde(rename = "depthwise_separable3x3")]
    DepthwiseSeparable3x3,
    #[serde(rename = "dilated3x3_rate3")]
    Dilated3x3Rate3,
}

impl OpKind {
    pub const DEFAULT_ORDER: [OpKind; 3] = [
        OpKind::Conv3x3,
        OpKind::DepthwiseSeparable3x3,
        OpKind::Dilated3x3Rate3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Conv3x3 => "conv3x3",
            OpKind::DepthwiseSeparable3x3 => "depthwise_separable3x3",
            OpKind::Dilated3x3Rate3 => "dilated3x3_rate3",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            OpKind::Conv3x3 => "conv",
            OpKind::DepthwiseSeparable3x3 => "sep",
            OpKind::Dilated3x3Rate3 => "dil3",
        }
    }

    pub fn dilation(self) -> usize {
        match self {
            OpKind::Dilated3x3Rate3 => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpaceConfig {
    /// Number of densely connected blocks (N).
    #[serde(rename = "N")]
    pub num_blocks: usize,
    /// Mix nodes per block (M).
    #[serde(rename = "M")]
    pub mix_nodes: usize,
    /// Candidate operations per edge (K).
    #[serde(rename = "K")]
    pub num_ops: usize,
    /// Feature width of the shallow extractor and every block (G).
    #[serde(rename = "G")]
    pub feature_channels: usize,
    pub scale: usize,
    pub fusion_search: bool,
    pub op_list: Vec<OpKind>,
    /// Add the block input to the local-fusion output.
    #[serde(default = "default_true")]
    pub local_residual: bool,
}

fn default_true() -> bool {
    true
}

impl SearchSpaceConfig {
    /// Builds a config whose op list is the first `num_ops` default operations.
    pub fn new(
        num_blocks: usize,
        mix_nodes: usize,
        num_ops: usize,
        feature_channels: usize,
        scale: usize,
        fusion_search: bool,
    ) -> Result<Self> {
        if num_ops > OpKind::DEFAULT_ORDER.len() {
            return Err(Error::Config(format!(
                "K = {num_ops} exceeds the {} available operations",
                OpKind::DEFAULT_ORDER.len()
            )));
        }
        let cfg = Self {
            num_blocks,
            mix_nodes,
            num_ops,
            feature_channels,
            scale,
            fusion_search,
            op_list: OpKind::DEFAULT_ORDER[..num_ops].to_vec(),
            local_residual: true,
        };
        cfg.check()?;
        Ok(cfg)
    }

    /// Four blocks of four mix nodes, three operations, 64 channels, ×2.
    pub fn paper() -> Self {
        Self::new(4, 4, 3, 64, 2, false).expect("valid preset")
    }

    /// The desk-scale preset: two blocks of two mix nodes, 8 channels, ×2.
    pub fn desk() -> Self {
        Self::new(2, 2, 3, 8, 2, false).expect("valid preset")
    }

    pub fn check(&self) -> Result<()> {
        if self.num_blocks == 0 || self.mix_nodes == 0 || self.num_ops == 0 {
            return Err(Error::Config("N, M and K must be positive".into()));
        }
        if self.feature_channels == 0 {
            return Err(Error::Config("feature_channels must be positive".into()));
        }
        if self.scale == 0 {
            return Err(Error::Config("scale must be at least 1".into()));
        }
        if self.op_list.len() != self.num_ops {
            return Err(Error::Config(format!(
                "op_list has {} entries but K = {}",
                self.op_list.len(),
                self.num_ops
            )));
        }
        Ok(())
    }

    /// Number of mix blocks, `M(M+1)/2`.
    pub fn mix_blocks(&self) -> usize {
        num_mix_blocks(self.mix_nodes)
    }

    /// Total number of binary controller decisions.
    pub fn decision_count(&self) -> usize {
        self.num_ops * self.mix_blocks()
            + if self.fusion_search {
                self.mix_nodes + self.num_blocks
            } else {
                0
            }
    }
}

pub fn num_mix_blocks(mix_nodes: usize) -> usize {
    mix_nodes * (mix_nodes + 1) / 2
}

/// Position of block `(node, source)` in the canonical order, `1 ≤ node`, `source < node`.
pub fn block_index(node: usize, source: usize) -> usize {
    debug_assert!(node >= 1 && source < node);
    node * (node - 1) / 2 + source
}

/// Inverse of [`block_index`].
pub fn block_coords(index: usize) -> (usize, usize) {
    let mut node = 1;
    while block_index(node, 0) + node <= index {
        node += 1;
    }
    (node, index - block_index(node, 0))
}

/// Bit-level architecture genome.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArchitectureSequence {
    /// One entry per mix block in canonical order, each holding K op bits.
    pub mix: Vec<Vec<bool>>,
    /// Local fusion gates `S_l^0..S_l^{M-1}`.
    pub local_fusion: Vec<bool>,
    /// Global fusion gates `S_g^0..S_g^{N-1}`.
    pub global_fusion: Vec<bool>,
}

impl ArchitectureSequence {
    pub fn filled(config: &SearchSpaceConfig, mix: bool, gates: bool) -> Self {
        Self {
            mix: vec![vec![mix; config.num_ops]; config.mix_blocks()],
            local_fusion: vec![gates; config.mix_nodes],
            global_fusion: vec![gates; config.num_blocks],
        }
    }

    /// Every mix bit and every fusion gate cleared (gates stay set when fusion
    /// search is off).
    pub fn all_zeros(config: &SearchSpaceConfig) -> Self {
        Self::filled(config, false, !config.fusion_search)
    }

    pub fn all_ones(config: &SearchSpaceConfig) -> Self {
        Self::filled(config, true, true)
    }

    /// Op bits of the edge `source → node`.
    pub fn edge_bits(&self, node: usize, source: usize) -> &[bool] {
        &self.mix[block_index(node, source)]
    }

    pub fn edge_active(&self, node: usize, source: usize, op: usize) -> bool {
        self.mix[block_index(node, source)][op]
    }

    /// Controller decisions in emission order: mix bits, global gates, local gates.
    pub fn decision_bits(&self, config: &SearchSpaceConfig) -> Vec<bool> {
        let mut bits: Vec<bool> = self.mix.iter().flatten().copied().collect();
        if config.fusion_search {
            bits.extend(&self.global_fusion);
            bits.extend(&self.local_fusion);
        }
        bits
    }

    /// Inverse of [`decision_bits`](Self::decision_bits).
    pub fn from_decision_bits(config: &SearchSpaceConfig, bits: &[bool]) -> Result<Self> {
        if bits.len() != config.decision_count() {
            return Err(Error::Length(format!(
                "{} decisions given, the space has {}",
                bits.len(),
                config.decision_count()
            )));
        }
        let k = config.num_ops;
        let n_mix = k * config.mix_blocks();
        let mix = bits[..n_mix].chunks(k).map(<[bool]>::to_vec).collect();
        let (global_fusion, local_fusion) = if config.fusion_search {
            let g = bits[n_mix..n_mix + config.num_blocks].to_vec();
            let l = bits[n_mix + config.num_blocks..].to_vec();
            (g, l)
        } else {
            (vec![true; config.num_blocks], vec![true; config.mix_nodes])
        };
        Ok(Self {
            mix,
            local_fusion,
            global_fusion,
        })
    }

    pub fn count_set_bits(&self) -> usize {
        self.mix.iter().flatten().filter(|b| **b).count()
            + self.local_fusion.iter().filter(|b| **b).count()
            + self.global_fusion.iter().filter(|b| **b).count()
    }
}

fn bits_to_digit(bits: &[bool]) -> u32 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as u32)
}

/// Expands `digit` MSB-first into `width` bits.
pub fn digit_to_bits(digit: u32, width: usize) -> Vec<bool> {
    (0..width).rev().map(|s| (digit >> s) & 1 == 1).collect()
}

/// Decodes the decimal digest (one digit per mix block, MSB = first op) into a
/// genome with every fusion gate set.
pub fn decode_decimal(digits: &[u32], config: &SearchSpaceConfig) -> Result<ArchitectureSequence> {
    config.check()?;
    let blocks = config.mix_blocks();
    if digits.len() != blocks {
        return Err(Error::Length(format!(
            "{} digits given, M = {} needs {}",
            digits.len(),
            config.mix_nodes,
            blocks
        )));
    }
    let k = config.num_ops;
    let limit = 1u64 << k;
    if let Some(&bad) = digits.iter().find(|&&d| d as u64 >= limit) {
        return Err(Error::Range(format!("digit {bad} does not fit in {k} bits")));
    }
    let arch = ArchitectureSequence {
        mix: digits.iter().map(|&d| digit_to_bits(d, k)).collect(),
        local_fusion: vec![true; config.mix_nodes],
        global_fusion: vec![true; config.num_blocks],
    };
    validate(&arch, config).into_result()?;
    Ok(arch)
}

/// Decimal digest of the mix-node bits; fusion gates are not part of it.
pub fn encode_decimal(arch: &ArchitectureSequence, config: &SearchSpaceConfig) -> Result<Vec<u32>> {
    validate(arch, config).into_result()?;
    Ok(arch.mix.iter().map(|b| bits_to_digit(b)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationIssue {
    /// A bit group has the wrong number of entries.
    Length {
        what: String,
        expected: usize,
        found: usize,
    },
    /// A fusion gate is cleared while fusion search is off.
    Gate { which: &'static str, index: usize },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::Length {
                what,
                expected,
                found,
            } => write!(f, "LengthError: {what} has {found} entries, expected {expected}"),
            ValidationIssue::Gate { which, index } => write!(
                f,
                "GateError: {which} gate {index} is 0 but fusion search is off"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            let msg: Vec<String> = self.issues.iter().map(ToString::to_string).collect();
            Err(Error::Validation(msg.join("; ")))
        }
    }
}

pub fn validate(arch: &ArchitectureSequence, config: &SearchSpaceConfig) -> ValidationReport {
    let mut issues = Vec::new();
    let mut len_issue = |what: String, expected: usize, found: usize| {
        if expected != found {
            issues.push(ValidationIssue::Length {
                what,
                expected,
                found,
            });
        }
    };
    len_issue("mix blocks".into(), config.mix_blocks(), arch.mix.len());
    for (b, bits) in arch.mix.iter().enumerate() {
        len_issue(format!("mix block {b}"), config.num_ops, bits.len());
    }
    len_issue("local_fusion".into(), config.mix_nodes, arch.local_fusion.len());
    len_issue("global_fusion".into(), config.num_blocks, arch.global_fusion.len());
    if !config.fusion_search {
        for (which, gates) in [("local", &arch.local_fusion), ("global", &arch.global_fusion)] {
            for (index, _) in gates.iter().enumerate().filter(|(_, g)| !**g) {
                issues.push(ValidationIssue::Gate { which, index });
            }
        }
    }
    ValidationReport { issues }
}

/// True iff mix node `node` (1-based) reads nothing and falls through to its
/// predecessor.
pub fn is_identity_node(arch: &ArchitectureSequence, node: usize) -> Result<bool> {
    let m = mix_nodes_of(arch)?;
    if node == 0 || node > m {
        return Err(Error::Range(format!("mix node {node} outside 1..={m}")));
    }
    Ok((0..node).all(|j| arch.edge_bits(node, j).iter().all(|b| !b)))
}

fn mix_nodes_of(arch: &ArchitectureSequence) -> Result<usize> {
    let blocks = arch.mix.len();
    let mut m = 0;
    while num_mix_blocks(m) < blocks {
        m += 1;
    }
    if num_mix_blocks(m) != blocks {
        return Err(Error::Length(format!("{blocks} mix blocks is not triangular")));
    }
    Ok(m)
}

/// Number of architectures in the space, saturating at `u128::MAX`.
pub fn space_size(config: &SearchSpaceConfig) -> u128 {
    let t = config.decision_count();
    if t >= 128 {
        u128::MAX
    } else {
        1u128 << t
    }
}

/// Iterator over every architecture of a space, in binary counting order of
/// the decision bits.
#[derive(Debug)]
pub struct SpaceIter {
    config: SearchSpaceConfig,
    next: u128,
    end: u128,
}

impl Iterator for SpaceIter {
    type Item = ArchitectureSequence;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.end {
            return None;
        }
        let t = self.config.decision_count();
        let code = self.next;
        self.next += 1;
        let bits: Vec<bool> = (0..t).map(|i| (code >> (t - 1 - i)) & 1 == 1).collect();
        Some(ArchitectureSequence::from_decision_bits(&self.config, &bits).expect("length matches"))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.next).min(usize::MAX as u128) as usize;
        (left, Some(left))
    }
}

pub fn enumerate_space(config: &SearchSpaceConfig, limit: u128) -> Result<SpaceIter> {
    config.check()?;
    let size = space_size(config);
    if size > limit {
        return Err(Error::SpaceTooLarge { size, limit });
    }
    Ok(SpaceIter {
        config: config.clone(),
        next: 0,
        end: size,
    })
}

/// Serialized form of a genome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchJson {
    pub digits: Vec<u32>,
    pub local_fusion: Vec<u8>,
    pub global_fusion: Vec<u8>,
    pub config: SearchSpaceConfig,
}

fn gate_bytes(g: &[bool]) -> Vec<u8> {
    g.iter().map(|&b| b as u8).collect()
}

fn gate_bools(g: &[u8], what: &str) -> Result<Vec<bool>> {
    g.iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Range(format!("{what} gate value {other} is not a bit"))),
        })
        .collect()
}

impl ArchJson {
    pub fn from_arch(arch: &ArchitectureSequence, config: &SearchSpaceConfig) -> Result<Self> {
        Ok(Self {
            digits: encode_decimal(arch, config)?,
            local_fusion: gate_bytes(&arch.local_fusion),
            global_fusion: gate_bytes(&arch.global_fusion),
            config: config.clone(),
        })
    }

    pub fn to_arch(&self) -> Result<ArchitectureSequence> {
        let mut arch = decode_decimal(&self.digits, &self.config)?;
        arch.local_fusion = gate_bools(&self.local_fusion, "local")?;
        arch.global_fusion = gate_bools(&self.global_fusion, "global")?;
        validate(&arch, &self.config).into_result()?;
        Ok(arch)
    }
}

/// Graphviz rendering of one block's wiring: solid labelled edges are active
/// operations, dashed edges are fusion connections (grey when gated off).
pub fn to_dot(arch: &ArchitectureSequence, config: &SearchSpaceConfig) -> Result<String> {
    validate(arch, config).into_result()?;
    let m = config.mix_nodes;
    let mut s = String::from("digraph dnb {\n  rankdir=LR;\n");
    let _ = writeln!(s, "  n0 [label=\"F_d,0 (input)\", shape=box];");
    for node in 1..=m {
        let ident = is_identity_node(arch, node)?;
        let _ = writeln!(
            s,
            "  n{node} [label=\"mix {node}{}\"];",
            if ident { " (identity)" } else { "" }
        );
    }
    let _ = writeln!(s, "  lff [label=\"local fusion\", shape=box];");
    for node in 1..=m {
        for j in 0..node {
            for (k, op) in config.op_list.iter().enumerate() {
                if arch.edge_active(node, j, k) {
                    let _ = writeln!(s, "  n{j} -> n{node} [label=\"{}\"];", op.short());
                }
            }
        }
        if is_identity_node(arch, node)? {
            let _ = writeln!(s, "  n{} -> n{node} [label=\"identity\", style=dotted];", node - 1);
        }
    }
    for (i, &gate) in arch.local_fusion.iter().enumerate() {
        let colour = if gate { "black" } else { "grey" };
        let _ = writeln!(s, "  n{i} -> lff [style=dashed, color={colour}];");
    }
    let _ = writeln!(s, "  n{m} -> lff [style=dashed];");
    s.push_str("}\n");
    Ok(s)
}

pub fn format_digits(digits: &[u32]) -> String {
    digits
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_digits(text: &str) -> Result<Vec<u32>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<u32>()
                .map_err(|_| Error::Range(format!("{t:?} is not a non-negative integer digit")))
        })
        .collect()
}

/// Digits of the published four-node architecture.
pub const PUBLISHED_DIGITS: [u32; 10] = [7, 6, 4, 3, 0, 2, 2, 3, 4, 1];
