/// Base learning rate.
pub const LEARNING_RATE: f64 = 3e-4;
/// Global gradient-norm clip.
pub const MAX_GRAD_NORM: f64 = 0.3;
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with global-norm clipping and a linearly decaying learning rate
/// `lr₀·(1 − t/I)`.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    /// Horizon `I` of the linear decay.
    pub iterations: usize,
    pub max_grad_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

/// What one update did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamReport {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Learning rate used for this update.
    pub lr: f64,
}

impl Adam {
    pub fn new(len: usize, iterations: usize) -> Self {
        Self {
            lr: LEARNING_RATE,
            iterations,
            max_grad_norm: MAX_GRAD_NORM,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> usize {
        self.t
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Learning rate at update index `t`; exactly `lr` at 0 and 0 from `I` on.
    pub fn lr_at(&self, t: usize) -> f64 {
        if t >= self.iterations {
            return 0.0;
        }
        self.lr * (1.0 - t as f64 / self.iterations as f64)
    }

    /// Clips `grads` to the global norm bound, then applies one Adam step.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> AdamReport {
        assert_eq!(params.len(), self.m.len(), "parameter length");
        assert_eq!(grads.len(), self.m.len(), "gradient length");
        let grad_norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if grad_norm > self.max_grad_norm {
            self.max_grad_norm / grad_norm
        } else {
            1.0
        };
        let lr = self.lr_at(self.t);
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i] * scale;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            if lr != 0.0 {
                params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
            }
        }
        AdamReport { grad_norm, lr }
    }
}
