//! Closed-form parameter counts and the complexity penalty `n_m / n_cm`.

use serde::Serialize;

use crate::arch_space::{is_identity_node, validate, ArchitectureSequence, OpKind, SearchSpaceConfig};
use crate::error::Result;

/// Colour channels of input and output images.
pub const IMAGE_CHANNELS: usize = 3;

/// Width of the channel-attention bottleneck: `G/16`, or `G/4` below 16 channels.
pub fn ca_hidden(feature_channels: usize) -> usize {
    let ratio = if feature_channels >= 16 { 16 } else { 4 };
    (feature_channels / ratio).max(1)
}

/// Weights of one edge for operation `op` at width `g` (bias excluded).
pub fn edge_weights(op: OpKind, g: usize) -> usize {
    match op {
        OpKind::Conv3x3 | OpKind::Dilated3x3Rate3 => 9 * g * g,
        OpKind::DepthwiseSeparable3x3 => 9 * g + g * g,
    }
}

fn conv_params(cin: usize, cout: usize, k: usize) -> usize {
    cin * cout * k * k + cout
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamBreakdown {
    pub sfenet: usize,
    /// Searched edge operations (kernels plus per-(node, op) biases), per block.
    pub edge_ops: Vec<usize>,
    pub channel_attention: usize,
    pub local_fusion: usize,
    pub input_adapters: usize,
    pub global_fusion: usize,
    pub upnet: usize,
    pub total: usize,
}

impl ParamBreakdown {
    pub fn components(&self) -> Vec<(String, usize)> {
        let mut rows = vec![("sfenet".to_string(), self.sfenet)];
        for (d, n) in self.edge_ops.iter().enumerate() {
            rows.push((format!("dnb{}_edges", d + 1), *n));
        }
        rows.extend([
            ("channel_attention".to_string(), self.channel_attention),
            ("local_fusion".to_string(), self.local_fusion),
            ("input_adapters".to_string(), self.input_adapters),
            ("global_fusion".to_string(), self.global_fusion),
            ("upnet".to_string(), self.upnet),
            ("total".to_string(), self.total),
        ]);
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("component,params\n");
        for (name, n) in self.components() {
            s.push_str(&format!("{name},{n}\n"));
        }
        s
    }
}

pub fn count_params(arch: &ArchitectureSequence, config: &SearchSpaceConfig) -> Result<ParamBreakdown> {
    config.check()?;
    validate(arch, config).into_result()?;
    let g = config.feature_channels;
    let m = config.mix_nodes;
    let n = config.num_blocks;

    let sfenet = conv_params(IMAGE_CHANNELS, g, 3) + conv_params(g, g, 3);

    let mut per_block = 0;
    let mut active_nodes = 0;
    for node in 1..=m {
        if is_identity_node(arch, node)? {
            continue;
        }
        active_nodes += 1;
        for (k, &op) in config.op_list.iter().enumerate() {
            let edges = (0..node).filter(|&j| arch.edge_active(node, j, k)).count();
            if edges > 0 {
                per_block += edges * edge_weights(op, g) + g;
            }
        }
    }
    let edge_ops = vec![per_block; n];

    let r = ca_hidden(g);
    let channel_attention = n * active_nodes * (g * r + r + r * g + g);

    let local_inputs = arch.local_fusion.iter().filter(|&&b| b).count() + 1;
    let local_fusion = n * (local_inputs * g * g + g);

    let input_adapters: usize = (1..=n).map(|d| d * g * g + g).sum();

    let global_inputs = arch.global_fusion.iter().filter(|&&b| b).count() + 1;
    let global_fusion = global_inputs * g * g + g + conv_params(g, g, 3);

    let s2 = config.scale * config.scale;
    let upnet = conv_params(g, g * s2, 3) + conv_params(g, IMAGE_CHANNELS, 3);

    let total = sfenet
        + edge_ops.iter().sum::<usize>()
        + channel_attention
        + local_fusion
        + input_adapters
        + global_fusion
        + upnet;
    Ok(ParamBreakdown {
        sfenet,
        edge_ops,
        channel_attention,
        local_fusion,
        input_adapters,
        global_fusion,
        upnet,
        total,
    })
}

/// Parameter count of the most complex architecture in the space.
pub fn max_params(config: &SearchSpaceConfig) -> Result<usize> {
    Ok(count_params(&ArchitectureSequence::all_ones(config), config)?.total)
}

/// `cb(c) = n_m / n_cm`, in `(0, 1]`.
pub fn complexity_penalty(arch: &ArchitectureSequence, config: &SearchSpaceConfig) -> Result<f64> {
    let n_m = count_params(arch, config)?.total;
    Ok(n_m as f64 / max_params(config)? as f64)
}

/// Caches `n_cm` for repeated penalty evaluations over one space.
#[derive(Debug, Clone)]
pub struct PenaltyModel {
    config: SearchSpaceConfig,
    max: usize,
}

impl PenaltyModel {
    pub fn new(config: &SearchSpaceConfig) -> Result<Self> {
        Ok(Self {
            config: config.clone(),
            max: max_params(config)?,
        })
    }

    pub fn max_params(&self) -> usize {
        self.max
    }

    /// Returns `(n_m, cb)`.
    pub fn evaluate(&self, arch: &ArchitectureSequence) -> Result<(usize, f64)> {
        let n_m = count_params(arch, &self.config)?.total;
        Ok((n_m, n_m as f64 / self.max as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch_space::{decode_decimal, enumerate_space, PUBLISHED_DIGITS};

    #[test]
    fn single_conv_edge() {
        assert_eq!(conv_params(1, 1, 3), 10);
        assert_eq!(edge_weights(OpKind::Conv3x3, 1) + 1, 10);
        assert_eq!(
            edge_weights(OpKind::Dilated3x3Rate3, 7),
            edge_weights(OpKind::Conv3x3, 7)
        );
    }

    #[test]
    fn published_total_in_band() {
        let config = SearchSpaceConfig::paper();
        let arch = decode_decimal(&PUBLISHED_DIGITS, &config).unwrap();
        let b = count_params(&arch, &config).unwrap();
        assert_eq!(b.total, 1_672_643);
        assert!((1_370_000..=2_056_000).contains(&b.total));
        let parts: usize = b.components().iter().filter(|(n, _)| n != "total").map(|(_, v)| v).sum();
        assert_eq!(parts, b.total);
        assert!(max_params(&config).unwrap() >= b.total);
    }

    #[test]
    fn penalty_bounds() {
        let config = SearchSpaceConfig::desk();
        let ones = ArchitectureSequence::all_ones(&config);
        assert_eq!(complexity_penalty(&ones, &config).unwrap(), 1.0);
        let zeros = ArchitectureSequence::all_zeros(&config);
        let cb = complexity_penalty(&zeros, &config).unwrap();
        assert!(cb > 0.0 && cb < 1.0);
    }

    #[test]
    fn single_architecture_space_is_its_own_max() {
        let config = SearchSpaceConfig::new(1, 1, 1, 4, 2, false).unwrap();
        let ones = ArchitectureSequence::all_ones(&config);
        assert_eq!(max_params(&config).unwrap(), count_params(&ones, &config).unwrap().total);
    }

    #[test]
    fn setting_any_bit_never_decreases_count() {
        let config = SearchSpaceConfig::new(2, 2, 2, 4, 2, true).unwrap();
        let max = max_params(&config).unwrap();
        for arch in enumerate_space(&config, 1 << 12).unwrap() {
            let base = count_params(&arch, &config).unwrap().total;
            assert!(base <= max);
            let bits = arch.decision_bits(&config);
            for i in 0..bits.len() {
                if !bits[i] {
                    let mut up = bits.clone();
                    up[i] = true;
                    let next = crate::arch_space::ArchitectureSequence::from_decision_bits(&config, &up).unwrap();
                    assert!(count_params(&next, &config).unwrap().total >= base);
                }
            }
        }
    }
}
