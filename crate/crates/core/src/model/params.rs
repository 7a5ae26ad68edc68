use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t.with_grad());
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| &self.tensors[id.0])
    }

    /// Overwrites a parameter's values; the shape must match.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Usage(format!("no parameter named '{name}'")))?;
        let slot = &mut self.tensors[id.0];
        if slot.shape() != value.shape() {
            return Err(Error::shape(
                "set_param",
                format!("{name} has shape {:?}, got {:?}", slot.shape(), value.shape()),
            ));
        }
        *slot = value.with_grad();
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn element_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every parameter as a gradient-tracking leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound { vars: self.tensors.iter().map(|t| g.leaf(t.clone())).collect() }
    }

    /// Adds the leaf gradients from a finished backward pass.
    pub fn accumulate_grads(&mut self, g: &Graph, bound: &Bound) -> Result<()> {
        for (t, v) in self.tensors.iter_mut().zip(&bound.vars) {
            if let Some(grad) = g.grad(*v) {
                t.accumulate_grad(grad)?;
            }
        }
        Ok(())
    }
}

/// Graph handles for every parameter of a [`ParamStore`], index-aligned.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

/// Deterministic parameter initializer.
pub(crate) struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Glorot uniform, `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn xavier(&mut self, fan_in: usize, fan_out: usize) -> Tensor {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| self.rng.random_range(-a..a)).collect();
        Tensor::new(&[fan_in, fan_out], data).expect("sized above")
    }
}
