//! Autoregressive two-layer LSTM policy over architecture genomes.
//!
//! One LSTM step is taken per mix block; `K` shared fully connected heads turn
//! the top hidden state into one Bernoulli logit per operation. With fusion
//! search enabled two more steps follow the last mix block: one emitting the
//! `N` global gates and one emitting the `M` local gates. The decision made at
//! each step is embedded and fed as the next input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch_space::{validate, ArchitectureSequence, SearchSpaceConfig};
use crate::error::{Error, Result};
use crate::numeric::{checkpoint, logistic, lstm_cell, variance_scaled, Gradients, Graph, LstmParams, ParamId, ParamStore, Tensor, Var};

/// Hidden width of both LSTM layers at full scale.
pub const DEFAULT_HIDDEN: usize = 64;

/// Fusion decisions are embedded in chunks of this many bits.
const CHUNK_BITS: usize = 8;

#[derive(Debug, Clone, Copy)]
struct LstmKeys {
    w: [ParamId; 4],
    u: [ParamId; 4],
    b: [ParamId; 4],
}

#[derive(Debug, Clone, Copy)]
pub struct HeadKeys {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone)]
struct FusionKeys {
    global_head: HeadKeys,
    local_head: HeadKeys,
    global_embed: ParamId,
}

#[derive(Debug, Clone)]
struct Keys {
    layers: [LstmKeys; 2],
    start: ParamId,
    mix_embed: ParamId,
    mix_heads: Vec<HeadKeys>,
    fusion: Option<FusionKeys>,
}

/// Policy parameters `θ` and their Adam state.
#[derive(Debug, Clone)]
pub struct Controller {
    space: SearchSpaceConfig,
    hidden: usize,
    store: ParamStore,
    keys: Keys,
}

/// One sampled architecture with its log-probability under the sampling policy.
#[derive(Debug, Clone)]
pub struct SampleTrace {
    pub arch: ArchitectureSequence,
    pub log_prob: f64,
    /// Logits of every LSTM step, in emission order.
    pub logits: Vec<Vec<f64>>,
}

fn bits_to_index(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

struct Bound {
    layers: [LstmParams; 2],
    start: Var,
    mix_embed: Var,
    mix_heads: Vec<(Var, Var)>,
    fusion: Option<(Var, Var, Var, Var, Var)>,
}

enum Decide<'r> {
    Sample(&'r mut ChaCha8Rng),
    Replay(Vec<bool>),
    Greedy,
}

struct Rollout {
    bits: Vec<bool>,
    log_prob: Var,
    logits: Vec<Vec<f64>>,
}

impl Controller {
    pub fn new(space: &SearchSpaceConfig, hidden: usize, seed: u64) -> Result<Self> {
        space.check()?;
        if hidden == 0 {
            return Err(Error::Config("controller hidden size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let h = hidden;
        let layer = |store: &mut ParamStore, rng: &mut ChaCha8Rng, l: usize| -> Result<LstmKeys> {
            let gates = ["i", "f", "g", "o"];
            let mut w = [ParamId(0); 4];
            let mut u = [ParamId(0); 4];
            let mut b = [ParamId(0); 4];
            for (k, gate) in gates.iter().enumerate() {
                w[k] = store.insert(format!("lstm{l}.w_{gate}"), variance_scaled(&[h, h], h, rng))?;
                u[k] = store.insert(format!("lstm{l}.u_{gate}"), variance_scaled(&[h, h], h, rng))?;
                b[k] = store.insert(format!("lstm{l}.b_{gate}"), Tensor::zeros(&[h]))?;
            }
            Ok(LstmKeys { w, u, b })
        };
        let layers = [layer(&mut store, &mut rng, 0)?, layer(&mut store, &mut rng, 1)?];
        let start = store.insert("start", Tensor::zeros(&[1, h]))?;
        let mix_embed = store.insert(
            "embed.mix",
            variance_scaled(&[1 << space.num_ops, h], h, &mut rng),
        )?;
        let head = |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: String, out: usize| -> Result<HeadKeys> {
            Ok(HeadKeys {
                weight: store.insert(format!("{name}.w"), variance_scaled(&[out, h], h, rng))?,
                bias: store.insert(format!("{name}.b"), Tensor::zeros(&[out]))?,
            })
        };
        let mix_heads = (0..space.num_ops)
            .map(|k| head(&mut store, &mut rng, format!("head.op{k}"), 1))
            .collect::<Result<Vec<_>>>()?;
        let fusion = if space.fusion_search {
            let global_head = head(&mut store, &mut rng, "head.global".into(), space.num_blocks)?;
            let local_head = head(&mut store, &mut rng, "head.local".into(), space.mix_nodes)?;
            let rows = 1usize << space.num_blocks.min(CHUNK_BITS);
            let global_embed = store.insert("embed.global", variance_scaled(&[rows, h], h, &mut rng))?;
            Some(FusionKeys {
                global_head,
                local_head,
                global_embed,
            })
        } else {
            None
        };
        Ok(Self {
            space: space.clone(),
            hidden,
            store,
            keys: Keys {
                layers,
                start,
                mix_embed,
                mix_heads,
                fusion,
            },
        })
    }

    pub fn space(&self) -> &SearchSpaceConfig {
        &self.space
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Head `k` shared by every mix block.
    pub fn mix_head(&self, k: usize) -> HeadKeys {
        self.keys.mix_heads[k]
    }

    /// Global and local gate heads, when fusion search is on.
    pub fn fusion_heads(&self) -> Option<(HeadKeys, HeadKeys)> {
        self.keys.fusion.as_ref().map(|f| (f.global_head, f.local_head))
    }

    /// Sets every head weight to zero and every head bias to `logit`, pinning
    /// each decision's probability to `sigmoid(logit)`.
    pub fn force_logits(&mut self, logit: f64) {
        let mut heads = self.keys.mix_heads.clone();
        if let Some((g, l)) = self.fusion_heads() {
            heads.extend([g, l]);
        }
        for h in heads {
            self.store.value_mut(h.weight).data_mut().fill(0.0);
            self.store.value_mut(h.bias).data_mut().fill(logit);
        }
    }

    fn bind(&self, g: &mut Graph) -> Bound {
        let s = &self.store;
        let lstm = |g: &mut Graph, k: &LstmKeys| LstmParams {
            w: k.w.map(|id| g.param(s, id)),
            u: k.u.map(|id| g.param(s, id)),
            b: k.b.map(|id| g.param(s, id)),
        };
        let layers = [lstm(g, &self.keys.layers[0]), lstm(g, &self.keys.layers[1])];
        let start = g.param(s, self.keys.start);
        let mix_embed = g.param(s, self.keys.mix_embed);
        let mix_heads = self
            .keys
            .mix_heads
            .iter()
            .map(|h| (g.param(s, h.weight), g.param(s, h.bias)))
            .collect();
        let fusion = self.keys.fusion.as_ref().map(|f| {
            (
                g.param(s, f.global_head.weight),
                g.param(s, f.global_head.bias),
                g.param(s, f.local_head.weight),
                g.param(s, f.local_head.bias),
                g.param(s, f.global_embed),
            )
        });
        Bound {
            layers,
            start,
            mix_embed,
            mix_heads,
            fusion,
        }
    }

    fn rollout(&self, g: &mut Graph, mut decide: Decide<'_>) -> Result<Rollout> {
        let p = self.bind(g);
        let h = self.hidden;
        let zero = g.constant(Tensor::zeros(&[1, h]));
        let mut state = [(zero, zero), (zero, zero)];
        let mut x = p.start;
        let mut bits: Vec<bool> = Vec::with_capacity(self.space.decision_count());
        let mut terms = Vec::new();
        let mut logits = Vec::new();

        let mut choose = |probs: &[f64], bits: &mut Vec<bool>| -> Result<Vec<bool>> {
            let chosen: Vec<bool> = match &mut decide {
                Decide::Sample(rng) => probs.iter().map(|&pr| rng.random::<f64>() < pr).collect(),
                Decide::Greedy => probs.iter().map(|&pr| pr >= 0.5).collect(),
                Decide::Replay(all) => {
                    let at = bits.len();
                    all.get(at..at + probs.len())
                        .ok_or_else(|| Error::Length("replayed genome is too short".into()))?
                        .to_vec()
                }
            };
            bits.extend(&chosen);
            Ok(chosen)
        };

        let step = |g: &mut Graph, x: Var, state: &mut [(Var, Var); 2]| -> Result<Var> {
            let (h1, c1) = lstm_cell(g, x, state[0].0, state[0].1, &p.layers[0])?;
            let (h2, c2) = lstm_cell(g, h1, state[1].0, state[1].1, &p.layers[1])?;
            *state = [(h1, c1), (h2, c2)];
            Ok(h2)
        };

        for _ in 0..self.space.mix_blocks() {
            let top = step(g, x, &mut state)?;
            let heads: Vec<Var> = p
                .mix_heads
                .iter()
                .map(|&(w, b)| g.linear(top, w, Some(b)))
                .collect::<Result<_>>()?;
            let vals: Vec<f64> = heads.iter().map(|&v| g.value(v).data()[0]).collect();
            let probs: Vec<f64> = vals.iter().map(|&l| logistic(l)).collect();
            let chosen = choose(&probs, &mut bits)?;
            for (&logit, &bit) in heads.iter().zip(&chosen) {
                let lp = g.bernoulli_log_prob(logit, &[bit])?;
                terms.push(g.sum_all(lp));
            }
            logits.push(vals);
            x = g.gather_row(p.mix_embed, bits_to_index(&chosen))?;
        }

        if let Some((gw, gb, lw, lb, gembed)) = p.fusion {
            let top = step(g, x, &mut state)?;
            let logit = g.linear(top, gw, Some(gb))?;
            let vals = g.value(logit).data().to_vec();
            let probs: Vec<f64> = vals.iter().map(|&l| logistic(l)).collect();
            let chosen = choose(&probs, &mut bits)?;
            let lp = g.bernoulli_log_prob(logit, &chosen)?;
            terms.push(g.sum_all(lp));
            logits.push(vals);
            let rows = chosen
                .chunks(CHUNK_BITS)
                .map(|c| g.gather_row(gembed, bits_to_index(c)))
                .collect::<Result<Vec<_>>>()?;
            x = g.add_n(&rows)?;

            let top = step(g, x, &mut state)?;
            let logit = g.linear(top, lw, Some(lb))?;
            let vals = g.value(logit).data().to_vec();
            let probs: Vec<f64> = vals.iter().map(|&l| logistic(l)).collect();
            let chosen = choose(&probs, &mut bits)?;
            let lp = g.bernoulli_log_prob(logit, &chosen)?;
            terms.push(g.sum_all(lp));
            logits.push(vals);
        }

        let log_prob = g.add_n(&terms)?;
        Ok(Rollout {
            bits,
            log_prob,
            logits,
        })
    }

    /// Draws one genome and its exact log-probability.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<SampleTrace> {
        let mut g = Graph::new();
        let r = self.rollout(&mut g, Decide::Sample(rng))?;
        let arch = ArchitectureSequence::from_decision_bits(&self.space, &r.bits)?;
        Ok(SampleTrace {
            arch,
            log_prob: g.value(r.log_prob).data()[0],
            logits: r.logits,
        })
    }

    /// Greedy decoding: every bit takes its more likely value given the
    /// decisions before it.
    pub fn greedy(&self) -> Result<SampleTrace> {
        let mut g = Graph::new();
        let r = self.rollout(&mut g, Decide::Greedy)?;
        let arch = ArchitectureSequence::from_decision_bits(&self.space, &r.bits)?;
        Ok(SampleTrace {
            arch,
            log_prob: g.value(r.log_prob).data()[0],
            logits: r.logits,
        })
    }

    fn replay(&self, g: &mut Graph, arch: &ArchitectureSequence) -> Result<Rollout> {
        validate(arch, &self.space).into_result()?;
        self.rollout(g, Decide::Replay(arch.decision_bits(&self.space)))
    }

    /// Teacher-forced log-probability of `arch`.
    pub fn log_prob(&self, arch: &ArchitectureSequence) -> Result<f64> {
        let mut g = Graph::new();
        let r = self.replay(&mut g, arch)?;
        Ok(g.value(r.log_prob).data()[0])
    }

    /// Per-step logits along a teacher-forced pass over `arch`.
    pub fn replay_logits(&self, arch: &ArchitectureSequence) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        Ok(self.replay(&mut g, arch)?.logits)
    }

    /// Gradients of `-advantage · log P(arch)` with respect to `θ`.
    pub fn backward_policy_loss(&self, arch: &ArchitectureSequence, advantage: f64) -> Result<Gradients> {
        let mut g = Graph::new();
        let r = self.replay(&mut g, arch)?;
        let loss = g.scale(r.log_prob, -advantage);
        g.backward(loss)?;
        Ok(g.param_grads())
    }

    fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "controller",
            "hidden": self.hidden,
            "space": self.space,
        })
    }

    pub fn save(&self, path: &std::path::Path, deterministic: bool) -> Result<()> {
        checkpoint::save(path, &self.store, &self.meta(), deterministic)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (store, meta) = checkpoint::load(path)?;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("controller") {
            return Err(Error::Format(format!("{} is not a controller checkpoint", path.display())));
        }
        let space: SearchSpaceConfig = serde_json::from_value(meta["space"].clone())?;
        let hidden = meta["hidden"]
            .as_u64()
            .ok_or_else(|| Error::Format("controller checkpoint lacks hidden size".into()))? as usize;
        let mut ctrl = Self::new(&space, hidden, 0)?;
        for id in ctrl.store.ids() {
            let name = ctrl.store.name(id).to_string();
            let other = store
                .id(&name)
                .ok_or_else(|| Error::Format(format!("controller checkpoint lacks {name}")))?;
            if store.value(other).shape() != ctrl.store.value(id).shape() {
                return Err(Error::Format(format!("controller entry {name} has the wrong shape")));
            }
        }
        ctrl.store = store;
        Ok(ctrl)
    }
}
