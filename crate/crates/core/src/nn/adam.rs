use super::{NnError, ParamSet, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay coefficient (0 disables it).
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Moment estimates for every parameter of one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self { config, step: 0, first: zeros(), second: zeros() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update from the accumulated gradients.
    /// Refuses to touch any parameter if a gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<(), NnError> {
        if params.len() != self.first.len() {
            return Err(NnError::Shape("optimizer state does not match parameter set".into()));
        }
        if let Some(bad) = params.iter().find(|p| !p.grad.is_finite()) {
            return Err(NnError::NonFinite(format!("gradient of `{}` at optimizer step {}", bad.name, self.step + 1)));
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let bc1 = T::from_f64(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::from_f64(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps, wd) = (T::from_f64(c.lr), T::from_f64(c.eps), T::from_f64(c.weight_decay));
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grads = p.grad.data();
            for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(grads).zip(m.data_mut()).zip(v.data_mut()) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w = *w - lr * (m_hat / (v_hat.sqrt() + eps) + wd * *w);
            }
        }
        Ok(())
    }
}
