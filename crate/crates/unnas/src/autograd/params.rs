//! Trainable parameter storage.
//!
//! Parameters live outside the tape so the tape can be rebuilt every step.
//! Each parameter belongs to a group; weight updates and architecture-logit
//! updates operate on disjoint groups.

use super::scalar::Scalar;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Optimizers step one group at a time; the groups partition the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Network weights (convs, norms, classifiers).
    Weights,
    /// Architecture mixture logits.
    Alpha,
}

struct Entry<E> {
    value: Tensor<E>,
    grad: Tensor<E>,
    group: ParamGroup,
}

pub struct ParamStore<E> {
    entries: Vec<Entry<E>>,
}

impl<E: Scalar> ParamStore<E> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, value: Tensor<E>, group: ParamGroup) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.entries.push(Entry { value, grad, group });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<E> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<E> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<E> {
        &self.entries[id.0].grad
    }

    pub fn group(&self, id: ParamId) -> ParamGroup {
        self.entries[id.0].group
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn ids_in_group(&self, group: ParamGroup) -> Vec<ParamId> {
        self.ids().filter(|id| self.group(*id) == group).collect()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(E::zero());
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &Tensor<E>) {
        self.entries[id.0]
            .grad
            .add_assign(g)
            .expect("parameter gradient shape mismatch");
    }

    /// Total number of scalars across all parameters in a group.
    pub fn scalar_count(&self, group: ParamGroup) -> usize {
        self.entries
            .iter()
            .filter(|e| e.group == group)
            .map(|e| e.value.numel())
            .sum()
    }
}

impl<E: Scalar> Default for ParamStore<E> {
    fn default() -> Self {
        Self::new()
    }
}
