use std::collections::HashMap;

use super::{Float, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A named parameter with its gradient and Adam moments.
#[derive(Debug, Clone)]
pub struct Param<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Vec<F>,
    pub m: Vec<F>,
    pub v: Vec<F>,
}

/// Named parameters plus shared optimizer state.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<F> {
    params: Vec<Param<F>>,
    index: HashMap<String, ParamId>,
    /// Completed Adam steps.
    pub step: u64,
    grads_ready: bool,
}

impl<F: Float> ParamSet<F> {
    pub fn new() -> Self {
        ParamSet {
            params: Vec::new(),
            index: HashMap::new(),
            step: 0,
            grads_ready: false,
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<F>) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::arg(format!("duplicate parameter name `{name}`")));
        }
        let n = value.numel();
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.to_owned(),
            value,
            grad: vec![F::zero(); n],
            m: vec![F::zero(); n],
            v: vec![F::zero(); n],
        });
        self.index.insert(name.to_owned(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Param<F>> {
        self.id(name).map(|id| &self.params[id.0])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<F>> {
        self.id(name).map(|id| &mut self.params[id.0])
    }

    pub fn param(&self, id: ParamId) -> &Param<F> {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param<F> {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<F>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<F>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Records every parameter on `tape` as a gradient-tracking leaf.
    pub fn bind(&self, tape: &mut Tape<F>) -> BoundParams {
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| tape.param_leaf(p.value.clone(), ParamId(i)))
            .collect();
        BoundParams { vars }
    }

    /// Adds the leaf gradients of a finished backward pass into `grad`.
    pub fn collect_grads(&mut self, tape: &Tape<F>) {
        for (id, g) in tape.param_grads() {
            self.params[id.0]
                .grad
                .iter_mut()
                .zip(g)
                .for_each(|(a, &b)| *a += b);
        }
        self.grads_ready = true;
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = F::zero());
        }
        self.grads_ready = false;
    }

    pub fn grads_ready(&self) -> bool {
        self.grads_ready
    }

    /// Converts values and optimizer state to another precision.
    pub fn cast<G: Float>(&self) -> ParamSet<G> {
        let conv = |v: &[F]| v.iter().map(|&x| G::of(x.f64())).collect::<Vec<G>>();
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: conv(&p.grad),
                    m: conv(&p.m),
                    v: conv(&p.v),
                })
                .collect(),
            index: self.index.clone(),
            step: self.step,
            grads_ready: self.grads_ready,
        }
    }
}

/// Tape handles for every parameter of a [`ParamSet`], in insertion order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: applied to the weights directly, not through the moments.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// One bias-corrected Adam update with decoupled weight decay. Clears the
/// gradients afterwards.
pub fn adam_step<F: Float>(params: &mut ParamSet<F>, cfg: &AdamConfig) -> Result<()> {
    if !params.grads_ready {
        return Err(Error::InvalidState(
            "adam_step called before gradients were collected".into(),
        ));
    }
    params.step += 1;
    let t = params.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let (fb1, fb2) = (F::of(b1), F::of(b2));
    let (one_b1, one_b2) = (F::of(1.0 - b1), F::of(1.0 - b2));
    let step = F::of(cfg.lr / bc1);
    let inv_bc2 = F::of(1.0 / bc2);
    let eps = F::of(cfg.eps);
    let decay = F::of(cfg.lr * cfg.weight_decay);
    for p in &mut params.params {
        for (((w, g), m), v) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(&p.grad)
            .zip(&mut p.m)
            .zip(&mut p.v)
        {
            *m = fb1 * *m + one_b1 * *g;
            *v = fb2 * *v + one_b2 * *g * *g;
            let update = step * *m / ((*v * inv_bc2).sqrt() + eps);
            *w = *w - update - decay * *w;
        }
    }
    params.zero_grad();
    Ok(())
}
