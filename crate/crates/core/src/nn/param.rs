//! Parameter blocks, Adam state, and the visitor trait shared by all models.

use serde::{Deserialize, Serialize};

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment buffers for one [`ParamBlock`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m_weights: Vec<f64>,
    pub v_weights: Vec<f64>,
    pub m_bias: Vec<f64>,
    pub v_bias: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, weights: usize, bias: usize) -> Self {
        Self {
            config,
            step: 0,
            m_weights: vec![0.0; weights],
            v_weights: vec![0.0; weights],
            m_bias: vec![0.0; bias],
            v_bias: vec![0.0; bias],
        }
    }
}

/// Weights (`fan_in × fan_out`), bias, and their gradient accumulators.
#[derive(Debug, Clone)]
pub struct ParamBlock {
    pub name: String,
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub grad_weights: Tensor,
    pub grad_bias: Vec<f64>,
    pub adam: AdamState,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, weights: Tensor, bias: Vec<f64>, adam: AdamConfig) -> Self {
        let (r, c) = weights.shape();
        let nb = bias.len();
        Self {
            name: name.into(),
            grad_weights: Tensor::zeros(r, c),
            grad_bias: vec![0.0; nb],
            adam: AdamState::new(adam, r * c, nb),
            weights,
            bias,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.fill(0.0);
        self.grad_bias.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Parameters flattened as weights then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.weights.data().to_vec();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        let mut v = self.grad_weights.data().to_vec();
        v.extend_from_slice(&self.grad_bias);
        v
    }

    pub fn set_flat_params(&mut self, values: &[f64]) {
        let nw = self.weights.len();
        self.weights.data_mut().copy_from_slice(&values[..nw]);
        let nb = self.bias.len();
        self.bias.copy_from_slice(&values[nw..nw + nb]);
    }

    /// Bias-corrected Adam step on the accumulated gradient. The accumulators
    /// are left as they are.
    pub fn adam_update(&mut self) {
        let st = &mut self.adam;
        st.step += 1;
        let c = st.config;
        let t = st.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let step = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
        };
        for (((p, &g), m), v) in self
            .weights
            .data_mut()
            .iter_mut()
            .zip(self.grad_weights.data())
            .zip(st.m_weights.iter_mut())
            .zip(st.v_weights.iter_mut())
        {
            step(p, g, m, v);
        }
        for (((p, &g), m), v) in self
            .bias
            .iter_mut()
            .zip(&self.grad_bias)
            .zip(st.m_bias.iter_mut())
            .zip(st.v_bias.iter_mut())
        {
            step(p, g, m, v);
        }
    }
}

/// Anything that owns parameter blocks.
pub trait Module {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    fn adam_step(&mut self) {
        self.visit_mut(&mut |p| p.adam_update());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.param_count());
        n
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.visit(&mut |p| v.extend(p.flat_params()));
        v
    }

    fn flat_grads(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.visit(&mut |p| v.extend(p.flat_grads()));
        v
    }

    fn set_flat_params(&mut self, values: &[f64]) {
        let mut off = 0;
        self.visit_mut(&mut |p| {
            let n = p.param_count();
            p.set_flat_params(&values[off..off + n]);
            off += n;
        });
        assert_eq!(off, values.len(), "flat parameter length mismatch");
    }
}
