//! SGD with classic momentum and L2 weight decay folded into the gradient.

use super::params::{ParamGroup, ParamStore};
use super::scalar::Scalar;
use super::tensor::Tensor;
use super::Error;

/// One momentum-SGD update on a single parameter:
/// `v <- momentum*v + grad + weight_decay*param; param <- param - lr*v`.
pub fn sgd_step<E: Scalar>(
    param: &mut Tensor<E>,
    grad: &Tensor<E>,
    velocity: &mut Tensor<E>,
    lr: E,
    momentum: E,
    weight_decay: E,
) -> Result<(), Error> {
    if param.shape() != grad.shape() || param.shape() != velocity.shape() {
        return Err(Error::ShapeMismatch {
            expected: param.shape().to_vec(),
            got: grad.shape().to_vec(),
        });
    }
    let p = param.data_mut();
    let v = velocity.data_mut();
    let g = grad.data();
    for i in 0..p.len() {
        v[i] = momentum * v[i] + g[i] + weight_decay * p[i];
        p[i] = p[i] - lr * v[i];
    }
    Ok(())
}

/// Optimizer over one parameter group of a store. Velocity buffers persist
/// across steps; the tape is rebuilt each step.
pub struct Sgd<E: Scalar> {
    group: ParamGroup,
    momentum: E,
    weight_decay: E,
    velocity: Vec<Option<Tensor<E>>>,
}

impl<E: Scalar> Sgd<E> {
    pub fn new(group: ParamGroup, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            group,
            momentum: E::from_f64(momentum),
            weight_decay: E::from_f64(weight_decay),
            velocity: Vec::new(),
        }
    }

    pub fn group(&self) -> ParamGroup {
        self.group
    }

    /// Apply one step to every parameter in this optimizer's group.
    /// Parameters outside the group are untouched.
    pub fn step(&mut self, store: &mut ParamStore<E>, lr: f64) -> Result<(), Error> {
        if self.velocity.len() < store.len() {
            self.velocity.resize(store.len(), None);
        }
        let lr = E::from_f64(lr);
        for id in store.ids().collect::<Vec<_>>() {
            if store.group(id) != self.group {
                continue;
            }
            let grad = store.grad(id).clone();
            let vel = self.velocity[id.0]
                .get_or_insert_with(|| Tensor::zeros(grad.shape()));
            let mut vel_taken = std::mem::replace(vel, Tensor::zeros(&[0]));
            sgd_step(
                store.value_mut(id),
                &grad,
                &mut vel_taken,
                lr,
                self.momentum,
                self.weight_decay,
            )?;
            self.velocity[id.0] = Some(vel_taken);
        }
        Ok(())
    }
}
