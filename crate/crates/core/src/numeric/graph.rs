//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every primitive as a node while the forward pass runs.
//! [`Graph::backward`] then walks the tape in reverse, accumulating gradients
//! into every node that requires one. Parameter leaves remember which
//! [`ParamId`] they were read from so [`Graph::param_grads`] can hand the
//! result straight to the optimizer.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

use super::conv::{self, ConvGeom};
use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    Add(Var, Var),
    AddN(Vec<Var>),
    Scale(Var, f64),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    BiasAdd(Var, Var),
    ChannelScale(Var, Var),
    GlobalAvgPool(Var),
    ConcatChannels(Vec<Var>),
    PixelShuffle(Var, usize),
    L1Loss(Var, Var),
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    BernoulliLogProb(Var, Vec<bool>),
    SumAll(Var),
    GatherRow(Var, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
    requires_grad: bool,
}

/// A single forward/backward computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node {
            value,
            op,
            param: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A leaf that never receives a gradient (data, targets).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A free leaf that receives a gradient but is not tied to a store.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Reads parameter `id` from `store` into a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    /// Parameter ids read into this graph, in ascending order.
    pub fn used_params(&self) -> BTreeSet<ParamId> {
        self.nodes.iter().filter_map(|n| n.param).collect()
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        dilation: usize,
        depthwise: bool,
    ) -> Result<Var> {
        let geom = ConvGeom::infer(self.value(input), self.value(kernel), dilation, depthwise)?;
        if let Some(b) = bias {
            if self.value(b).len() != geom.cout {
                return Err(Error::Shape(format!(
                    "bias has {} values for {} output channels",
                    self.value(b).len(),
                    geom.cout
                )));
            }
        }
        let out = conv::forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
        );
        let rg = self.rg(input) || self.rg(kernel) || bias.is_some_and(|b| self.rg(b));
        let value = Tensor::new(geom.output_shape(), out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Elementwise sum of one or more equally shaped tensors.
    pub fn add_n(&mut self, items: &[Var]) -> Result<Var> {
        let first = *items
            .first()
            .ok_or_else(|| Error::Shape("add_n of zero tensors".into()))?;
        if items.len() == 1 {
            return Ok(first);
        }
        let mut acc = self.value(first).data().to_vec();
        for &v in &items[1..] {
            same_shape(self.value(first), self.value(v), "add_n")?;
            for (a, b) in acc.iter_mut().zip(self.value(v).data()) {
                *a += b;
            }
        }
        let value = Tensor::new(self.shape(first).to_vec(), acc)?;
        let rg = items.iter().any(|&v| self.rg(v));
        Ok(self.push(value, Op::AddN(items.to_vec()), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Arithmetic mean of equally shaped tensors.
    pub fn mean_over(&mut self, items: &[Var]) -> Result<Var> {
        if items.len() == 1 {
            return Ok(items[0]);
        }
        let sum = self.add_n(items)?;
        Ok(self.scale(sum, 1.0 / items.len() as f64))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    /// Adds a per-channel bias to a `(B, C, ...)` tensor.
    pub fn bias_add(&mut self, x: Var, bias: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 || self.value(bias).len() != shape[1] {
            return Err(Error::Shape(format!(
                "bias of {} values for tensor {:?}",
                self.value(bias).len(),
                shape
            )));
        }
        let c = shape[1];
        let inner: usize = shape[2..].iter().product();
        let b = self.value(bias).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for (i, chunk) in data.chunks_mut(inner).enumerate() {
            let bv = b[i % c];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(Tensor::new(shape, data)?, Op::BiasAdd(x, bias), rg))
    }

    /// Rescales each channel of `x: (B, C, H, W)` by `s: (B, C, 1, 1)`.
    pub fn channel_scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let [b, c, h, w] = self.value(x).dims4()?;
        if self.shape(s) != [b, c, 1, 1] {
            return Err(Error::Shape(format!(
                "channel scale {:?} for tensor {:?}",
                self.shape(s),
                self.shape(x)
            )));
        }
        let plane = h * w;
        let sv = self.value(s).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for (i, chunk) in data.chunks_mut(plane).enumerate() {
            chunk.iter_mut().for_each(|v| *v *= sv[i]);
        }
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(Tensor::new(vec![b, c, h, w], data)?, Op::ChannelScale(x, s), rg))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = self.value(x).dims4()?;
        let plane = h * w;
        let data = self
            .value(x)
            .data()
            .chunks(plane)
            .map(|ch| ch.iter().sum::<f64>() / plane as f64)
            .collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![b, c, 1, 1], data)?, Op::GlobalAvgPool(x), rg))
    }

    pub fn concat_channels(&mut self, items: &[Var]) -> Result<Var> {
        let first = *items
            .first()
            .ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
        let [b, _, h, w] = self.value(first).dims4()?;
        let mut total_c = 0;
        for &v in items {
            let [b2, c2, h2, w2] = self.value(v).dims4()?;
            if (b2, h2, w2) != (b, h, w) {
                return Err(Error::Shape(format!(
                    "concat {:?} with {:?}",
                    self.shape(v),
                    self.shape(first)
                )));
            }
            total_c += c2;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(b * total_c * plane);
        for bi in 0..b {
            for &v in items {
                let c = self.shape(v)[1];
                let src = self.value(v).data();
                data.extend_from_slice(&src[bi * c * plane..(bi + 1) * c * plane]);
            }
        }
        let rg = items.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Tensor::new(vec![b, total_c, h, w], data)?,
            Op::ConcatChannels(items.to_vec()),
            rg,
        ))
    }

    /// Periodic shuffle `(B, C·r², H, W) → (B, C, H·r, W·r)`.
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let [b, cr, h, w] = self.value(x).dims4()?;
        if r == 0 || cr % (r * r) != 0 {
            return Err(Error::Shape(format!(
                "{cr} channels not divisible by {r}^2"
            )));
        }
        let c = cr / (r * r);
        let (oh, ow) = (h * r, w * r);
        let src = self.value(x).data();
        let mut data = vec![0.0; b * c * oh * ow];
        for bi in 0..b {
            for ci in 0..c {
                for y in 0..oh {
                    for xo in 0..ow {
                        let sc = ci * r * r + r * (y % r) + (xo % r);
                        data[((bi * c + ci) * oh + y) * ow + xo] =
                            src[((bi * cr + sc) * h + y / r) * w + xo / r];
                    }
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(vec![b, c, oh, ow], data)?,
            Op::PixelShuffle(x, r),
            rg,
        ))
    }

    /// Mean absolute error over all elements, as a one-element tensor.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape(self.value(pred), self.value(target), "l1_loss")?;
        let n = self.value(pred).len().max(1);
        let sum: f64 = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(sum / n as f64), Op::L1Loss(pred, target), rg))
    }

    /// Dense layer: `input (B, in) · weight (out, in)ᵀ + bias (out)`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (b, fin) = match self.shape(input) {
            &[b, f] => (b, f),
            other => return Err(Error::Shape(format!("linear input must be 2-D, got {other:?}"))),
        };
        let (fout, win) = match self.shape(weight) {
            &[o, i] => (o, i),
            other => return Err(Error::Shape(format!("linear weight must be 2-D, got {other:?}"))),
        };
        if win != fin {
            return Err(Error::Shape(format!(
                "linear weight expects {win} features, input has {fin}"
            )));
        }
        if let Some(bv) = bias {
            if self.value(bv).len() != fout {
                return Err(Error::Shape(format!(
                    "linear bias has {} values for {fout} outputs",
                    self.value(bv).len()
                )));
            }
        }
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        let mut data = vec![0.0; b * fout];
        for bi in 0..b {
            let row = &x[bi * fin..(bi + 1) * fin];
            for o in 0..fout {
                let wrow = &wt[o * fin..(o + 1) * fin];
                data[bi * fout + o] = row.iter().zip(wrow).map(|(a, c)| a * c).sum();
            }
        }
        if let Some(bv) = bias {
            let bvals = self.value(bv).data();
            for (i, d) in data.iter_mut().enumerate() {
                *d += bvals[i % fout];
            }
        }
        let rg = self.rg(input) || self.rg(weight) || bias.is_some_and(|v| self.rg(v));
        Ok(self.push(
            Tensor::new(vec![b, fout], data)?,
            Op::Linear {
                input,
                weight,
                bias,
            },
            rg,
        ))
    }

    /// Elementwise `log P(bit | logit)` for Bernoulli variables with
    /// `P(1) = sigmoid(logit)`.
    pub fn bernoulli_log_prob(&mut self, logits: Var, bits: &[bool]) -> Result<Var> {
        if self.value(logits).len() != bits.len() {
            return Err(Error::Shape(format!(
                "{} logits for {} bits",
                self.value(logits).len(),
                bits.len()
            )));
        }
        let data = self
            .value(logits)
            .data()
            .iter()
            .zip(bits)
            .map(|(&l, &bit)| if bit { -softplus(-l) } else { -softplus(l) })
            .collect();
        let value = Tensor::new(self.shape(logits).to_vec(), data)?;
        let rg = self.rg(logits);
        Ok(self.push(value, Op::BernoulliLogProb(logits, bits.to_vec()), rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    /// Row `index` of a `(rows, dim)` table as a `(1, dim)` tensor.
    pub fn gather_row(&mut self, table: Var, index: usize) -> Result<Var> {
        let (rows, dim) = match self.shape(table) {
            &[r, d] => (r, d),
            other => return Err(Error::Shape(format!("embedding table must be 2-D, got {other:?}"))),
        };
        if index >= rows {
            return Err(Error::Range(format!("row {index} of a {rows}-row table")));
        }
        let data = self.value(table).data()[index * dim..(index + 1) * dim].to_vec();
        let rg = self.rg(table);
        Ok(self.push(Tensor::new(vec![1, dim], data)?, Op::GatherRow(table, index), rg))
    }

    /// Back-propagates from `output`, seeding its gradient with ones.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[output.0] = Some(vec![1.0; self.value(output).len()]);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if self.nodes[idx].requires_grad {
                self.propagate(idx, &g, &mut grads)?;
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients of every parameter leaf, summed per [`ParamId`].
    pub fn param_grads(&self) -> Gradients {
        let mut out = Gradients::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Some(id), Some(Some(g))) = (node.param, self.grads.get(i)) {
                out.accumulate(id, g);
            }
        }
        out
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let mut send = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            } => {
                if self.rg(*input) {
                    send(*input, conv::backward_input(geom, g, self.value(*kernel).data()));
                }
                if self.rg(*kernel) {
                    let len = self.value(*kernel).len();
                    send(*kernel, conv::backward_kernel(geom, g, self.value(*input).data(), len));
                }
                if let Some(b) = bias {
                    send(*b, conv::backward_bias(geom, g));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::AddN(items) => {
                for &v in items {
                    send(v, g.to_vec());
                }
            }
            Op::Scale(a, f) => send(*a, g.iter().map(|x| x * f).collect()),
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                send(*a, g.iter().zip(bv).map(|(x, y)| x * y).collect());
                send(*b, g.iter().zip(av).map(|(x, y)| x * y).collect());
            }
            Op::Relu(a) => {
                let av = self.value(*a).data();
                send(
                    *a,
                    g.iter()
                        .zip(av)
                        .map(|(x, &y)| if y > 0.0 { *x } else { 0.0 })
                        .collect(),
                );
            }
            Op::Sigmoid(a) => send(
                *a,
                g.iter()
                    .zip(out.data())
                    .map(|(x, s)| x * s * (1.0 - s))
                    .collect(),
            ),
            Op::Tanh(a) => send(
                *a,
                g.iter()
                    .zip(out.data())
                    .map(|(x, t)| x * (1.0 - t * t))
                    .collect(),
            ),
            Op::BiasAdd(x, b) => {
                send(*x, g.to_vec());
                let shape = out.shape();
                let c = shape[1];
                let inner: usize = shape[2..].iter().product();
                let mut gb = vec![0.0; c];
                for (i, chunk) in g.chunks(inner).enumerate() {
                    gb[i % c] += chunk.iter().sum::<f64>();
                }
                send(*b, gb);
            }
            Op::ChannelScale(x, s) => {
                let [_, _, h, w] = out.dims4()?;
                let plane = h * w;
                let sv = self.value(*s).data();
                let xv = self.value(*x).data();
                let mut gx = g.to_vec();
                for (i, chunk) in gx.chunks_mut(plane).enumerate() {
                    chunk.iter_mut().for_each(|v| *v *= sv[i]);
                }
                send(*x, gx);
                let gs = g
                    .chunks(plane)
                    .zip(xv.chunks(plane))
                    .map(|(gc, xc)| gc.iter().zip(xc).map(|(a, b)| a * b).sum())
                    .collect();
                send(*s, gs);
            }
            Op::GlobalAvgPool(x) => {
                let [_, _, h, w] = self.value(*x).dims4()?;
                let plane = h * w;
                let mut gx = Vec::with_capacity(g.len() * plane);
                for &gv in g {
                    gx.extend(std::iter::repeat_n(gv / plane as f64, plane));
                }
                send(*x, gx);
            }
            Op::ConcatChannels(items) => {
                let [b, total_c, h, w] = out.dims4()?;
                let plane = h * w;
                let mut offset = 0;
                for &v in items {
                    let c = self.shape(v)[1];
                    let mut gv = Vec::with_capacity(b * c * plane);
                    for bi in 0..b {
                        let start = (bi * total_c + offset) * plane;
                        gv.extend_from_slice(&g[start..start + c * plane]);
                    }
                    send(v, gv);
                    offset += c;
                }
            }
            Op::PixelShuffle(x, r) => {
                let r = *r;
                let [b, cr, h, w] = self.value(*x).dims4()?;
                let c = cr / (r * r);
                let (oh, ow) = (h * r, w * r);
                let mut gx = vec![0.0; b * cr * h * w];
                for bi in 0..b {
                    for ci in 0..c {
                        for y in 0..oh {
                            for xo in 0..ow {
                                let sc = ci * r * r + r * (y % r) + (xo % r);
                                gx[((bi * cr + sc) * h + y / r) * w + xo / r] +=
                                    g[((bi * c + ci) * oh + y) * ow + xo];
                            }
                        }
                    }
                }
                send(*x, gx);
            }
            Op::L1Loss(p, t) => {
                let pv = self.value(*p).data();
                let tv = self.value(*t).data();
                let scale = g[0] / pv.len().max(1) as f64;
                let sign: Vec<f64> = pv
                    .iter()
                    .zip(tv)
                    .map(|(a, b)| {
                        let d = a - b;
                        if d > 0.0 {
                            scale
                        } else if d < 0.0 {
                            -scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if self.rg(*t) {
                    send(*t, sign.iter().map(|v| -v).collect());
                }
                send(*p, sign);
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let x = self.value(*input).data();
                let wt = self.value(*weight).data();
                let (b, fin) = (self.shape(*input)[0], self.shape(*input)[1]);
                let fout = self.shape(*weight)[0];
                if self.rg(*input) {
                    let mut gx = vec![0.0; b * fin];
                    for bi in 0..b {
                        for o in 0..fout {
                            let go = g[bi * fout + o];
                            let wrow = &wt[o * fin..(o + 1) * fin];
                            for (d, wv) in gx[bi * fin..(bi + 1) * fin].iter_mut().zip(wrow) {
                                *d += go * wv;
                            }
                        }
                    }
                    send(*input, gx);
                }
                if self.rg(*weight) {
                    let mut gw = vec![0.0; fout * fin];
                    for bi in 0..b {
                        let row = &x[bi * fin..(bi + 1) * fin];
                        for o in 0..fout {
                            let go = g[bi * fout + o];
                            for (d, xv) in gw[o * fin..(o + 1) * fin].iter_mut().zip(row) {
                                *d += go * xv;
                            }
                        }
                    }
                    send(*weight, gw);
                }
                if let Some(bv) = bias {
                    let mut gb = vec![0.0; fout];
                    for (i, gv) in g.iter().enumerate() {
                        gb[i % fout] += gv;
                    }
                    send(*bv, gb);
                }
            }
            Op::BernoulliLogProb(l, bits) => {
                let lv = self.value(*l).data();
                send(
                    *l,
                    g.iter()
                        .zip(lv)
                        .zip(bits)
                        .map(|((gv, &x), &bit)| gv * (if bit { 1.0 } else { 0.0 } - sigmoid(x)))
                        .collect(),
                );
            }
            Op::SumAll(a) => send(*a, vec![g[0]; self.value(*a).len()]),
            Op::GatherRow(t, index) => {
                let dim = self.shape(*t)[1];
                let mut gt = vec![0.0; self.value(*t).len()];
                gt[index * dim..(index + 1) * dim].copy_from_slice(g);
                send(*t, gt);
            }
        }
        Ok(())
    }
}

/// Logistic function, shared with samplers that need the same rounding.
pub fn logistic(x: f64) -> f64 {
    sigmoid(x)
}
