use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Real, Tensor};

/// Bias-corrected Adam. Moments are allocated lazily on the first step and
/// are zero-initialised.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub epsilon: Real,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(learning_rate: Real) -> Self {
        Self {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn first_moment(&self) -> &[Tensor] {
        &self.first_moment
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if !store.grads_ready() {
            return Err(Error::contract("adam step without accumulated gradients"));
        }
        if self.first_moment.is_empty() {
            self.first_moment = store.iter().map(|(_, p)| p.value.zeros_like()).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != store.len() {
            return Err(Error::contract("optimizer state does not match the parameter set"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for ((p, m), v) in store
            .params_mut()
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            if !p.trainable {
                continue;
            }
            let g = p.grad.data();
            let w = p.value.data_mut();
            for (((wi, &gi), mi), vi) in w
                .iter_mut()
                .zip(g)
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *wi -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        store.zero_grad();
        Ok(())
    }
}
