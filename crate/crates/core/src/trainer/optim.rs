use super::{TrainError, TrainPlan};
use crate::model::{Float, Gradients, ParameterStore};

/// Adam with decoupled weight decay. Decay applies to matrices only, not to
/// layer-norm gains and biases.
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Float> AdamW<T> {
    pub fn new(plan: &TrainPlan) -> Self {
        Self {
            beta1: plan.adam_beta1,
            beta2: plan.adam_beta2,
            eps: plan.adam_eps,
            weight_decay: plan.weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    fn ensure_state(&mut self, shapes: impl Iterator<Item = usize>) {
        if self.m.is_empty() {
            for n in shapes {
                self.m.push(vec![T::zero(); n]);
                self.v.push(vec![T::zero(); n]);
            }
        }
    }

    /// Updates one parameter slice with the current step count.
    fn update_slice(&mut self, slot: usize, param: &mut [T], grad: &[T], lr: f64, decay: bool) {
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.t as i32));
        let c2 = T::of(1.0 - self.beta2.powi(self.t as i32));
        let lr_t = T::of(lr);
        let eps = T::of(self.eps);
        let shrink = T::of(1.0 - lr * self.weight_decay);
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (T::one() - b1) * g;
            v[i] = b2 * v[i] + (T::one() - b2) * g * g;
            if decay {
                param[i] *= shrink;
            }
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            param[i] -= lr_t * mhat / (vhat.sqrt() + eps);
        }
    }

    /// One update of every tensor at learning rate `lr`.
    pub fn step(&mut self, params: &mut ParameterStore<T>, grads: &Gradients<T>, lr: f64) -> Result<(), TrainError> {
        for (t, g) in params.tensors().iter().zip(&grads.tensors) {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(TrainError::NonFiniteGradient { tensor: t.name.clone() });
            }
        }
        self.ensure_state(params.tensors().iter().map(|t| t.numel()));
        self.t += 1;
        for (slot, (t, g)) in params.tensors_mut().iter_mut().zip(&grads.tensors).enumerate() {
            let decay = t.shape.len() >= 2;
            self.update_slice(slot, &mut t.data, g, lr, decay);
        }
        Ok(())
    }

    /// Single-slice update, for optimizers over bare vectors.
    pub fn step_slice(&mut self, param: &mut [T], grad: &[T], lr: f64) {
        self.ensure_state(std::iter::once(param.len()));
        self.t += 1;
        self.update_slice(0, param, grad, lr, true);
    }
}
