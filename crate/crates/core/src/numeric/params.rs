use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Stable identifier of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// First-moment estimate.
    pub m: Vec<f64>,
    /// Second-moment estimate.
    pub v: Vec<f64>,
    pub step: u64,
}

/// Named parameter tensors together with their Adam state.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let n = value.len();
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.clone(),
            value,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        });
        self.index.insert(name, id);
        Ok(id)
    }

    /// Inserts a parameter with its optimizer state, as read from a checkpoint.
    pub fn insert_param(&mut self, param: Param) -> Result<ParamId> {
        let n = param.value.len();
        if param.m.len() != n || param.v.len() != n {
            return Err(Error::Shape(format!(
                "Adam state of {} does not match its {} values",
                param.name, n
            )));
        }
        let id = self.insert(param.name.clone(), param.value)?;
        let p = &mut self.params[id.0];
        p.m = param.m;
        p.v = param.v;
        p.step = param.step;
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Per-parameter gradients, ordered by id so iteration is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients(BTreeMap<ParamId, Vec<f64>>);

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, id: ParamId, grad: &[f64]) {
        match self.0.get_mut(&id) {
            Some(acc) => acc.iter_mut().zip(grad).for_each(|(a, g)| *a += g),
            None => {
                self.0.insert(id, grad.to_vec());
            }
        }
    }

    pub fn merge(&mut self, other: &Gradients) {
        for (id, g) in &other.0 {
            self.accumulate(*id, g);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.0
            .values_mut()
            .for_each(|g| g.iter_mut().for_each(|v| *v *= factor));
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.0.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.0.iter().map(|(id, g)| (*id, g.as_slice()))
    }

    pub fn retain(&mut self, mut keep: impl FnMut(ParamId) -> bool) {
        self.0.retain(|id, _| keep(*id));
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter that has a gradient.
///
/// Parameters absent from `grads` are left untouched, including their step
/// count, so inactive weight-bank entries keep their optimizer state.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, adam: &Adam) -> Result<()> {
    for (id, g) in grads.iter() {
        let param = store
            .params
            .get_mut(id.0)
            .ok_or_else(|| Error::Gradient(format!("gradient for unknown parameter {}", id.0)))?;
        if g.len() != param.value.len() {
            return Err(Error::Gradient(format!(
                "gradient of {} has {} values, parameter has {}",
                param.name,
                g.len(),
                param.value.len()
            )));
        }
        param.step += 1;
        let t = param.step as i32;
        let bc1 = 1.0 - adam.beta1.powi(t);
        let bc2 = 1.0 - adam.beta2.powi(t);
        let values = param.value.data_mut();
        for i in 0..g.len() {
            param.m[i] = adam.beta1 * param.m[i] + (1.0 - adam.beta1) * g[i];
            param.v[i] = adam.beta2 * param.v[i] + (1.0 - adam.beta2) * g[i] * g[i];
            let m_hat = param.m[i] / bc1;
            let v_hat = param.v[i] / bc2;
            values[i] -= adam.lr * m_hat / (v_hat.sqrt() + adam.eps);
        }
    }
    Ok(())
}

/// Scale of the fan-in variance-scaled initializer.
pub const INIT_SCALE: f64 = 0.02;

/// Normal draw with variance `INIT_SCALE / fan_in`.
pub fn variance_scaled(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let std = (INIT_SCALE / fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(shape, |_| normal.sample(rng))
}
