//! Dense layers with explicit forward traces.
//!
//! Forward passes return the values backward needs instead of stashing them
//! inside the layer, so a component can be run several times per round and
//! each pass back-propagated independently. `backward` accumulates parameter
//! gradients; `input_grad` treats the parameters as frozen.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::{AdamConfig, Module, ParamBlock, Tensor};
use crate::rng::StreamRng;
use crate::{Error, Result};

/// Glorot-uniform weights in `[-√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out))]`.
pub fn xavier_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
    Tensor::from_vec(fan_in, fan_out, data).expect("sized above")
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub params: ParamBlock,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        adam: AdamConfig,
        rng: &mut R,
    ) -> Self {
        Self {
            params: ParamBlock::new(
                name,
                xavier_uniform(fan_in, fan_out, rng),
                vec![0.0; fan_out],
                adam,
            ),
        }
    }

    pub fn zeros(name: impl Into<String>, fan_in: usize, fan_out: usize, adam: AdamConfig) -> Self {
        Self {
            params: ParamBlock::new(name, Tensor::zeros(fan_in, fan_out), vec![0.0; fan_out], adam),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.params.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.params.weights.cols()
    }

    /// `y = x·W + b`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.fan_in() {
            return Err(Error::dim(
                "linear_forward",
                format!("input {}", x.shape_str()),
                format!("weights {}", self.params.weights.shape_str()),
            ));
        }
        let mut y = x.matmul(&self.params.weights)?;
        y.add_row(&self.params.bias)?;
        Ok(y)
    }

    /// Adds `xᵀ·dy` and the column sums of `dy` to the accumulators.
    pub fn accumulate(&mut self, x: &Tensor, dy: &Tensor) -> Result<()> {
        let gw = x.matmul_tn(dy)?;
        self.params.grad_weights.add_assign(&gw)?;
        for (g, s) in self.params.grad_bias.iter_mut().zip(dy.column_sums()) {
            *g += s;
        }
        Ok(())
    }

    /// `dy·Wᵀ`.
    pub fn input_grad(&self, dy: &Tensor) -> Result<Tensor> {
        dy.matmul_nt(&self.params.weights)
    }

    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
        self.accumulate(x, dy)?;
        self.input_grad(dy)
    }
}

impl Module for Linear {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        f(&self.params);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        f(&mut self.params);
    }
}

/// Lookup table; row 0 is reserved for unknown values.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamBlock,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(
        name: impl Into<String>,
        rows: usize,
        width: usize,
        adam: AdamConfig,
        rng: &mut R,
    ) -> Self {
        Self {
            table: ParamBlock::new(name, xavier_uniform(rows, width, rng), Vec::new(), adam),
        }
    }

    pub fn rows(&self) -> usize {
        self.table.weights.rows()
    }

    pub fn width(&self) -> usize {
        self.table.weights.cols()
    }

    /// Indices must already be range-checked.
    pub fn forward(&self, idx: &[u32]) -> Tensor {
        let rows: Vec<usize> = idx.iter().map(|&i| i as usize).collect();
        self.table.weights.select_rows(&rows)
    }

    pub fn backward(&mut self, idx: &[u32], dy: &Tensor) {
        for (r, &i) in idx.iter().enumerate() {
            let g = self.table.grad_weights.row_mut(i as usize);
            for (a, b) in g.iter_mut().zip(dy.row(r)) {
                *a += b;
            }
        }
    }
}

impl Module for Embedding {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        f(&self.table);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        f(&mut self.table);
    }
}

fn check_drop(p_drop: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(Error::Config(format!("dropout probability {p_drop} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted-dropout keep factors: 0 for dropped entries, `1/(1-p)` otherwise.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, p_drop: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_drop(p_drop)?;
    let keep = 1.0 / (1.0 - p_drop);
    Ok((0..len)
        .map(|_| if rng.gen::<f64>() < p_drop { 0.0 } else { keep })
        .collect())
}

/// Inverted dropout in training mode, identity otherwise.
pub fn dropout_apply<R: Rng + ?Sized>(
    x: &Tensor,
    p_drop: f64,
    rng: &mut R,
    training: bool,
) -> Result<Tensor> {
    check_drop(p_drop)?;
    if !training || p_drop == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.len(), p_drop, rng)?;
    let mut y = x.clone();
    for (v, m) in y.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
    Ok(y)
}

/// Two-layer perceptron: `Linear → ReLU → dropout → Linear`.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
    pub dropout: f64,
}

/// Values saved by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub input: Tensor,
    /// Hidden activations after ReLU and dropout.
    pub hidden: Tensor,
    /// d(hidden)/d(pre-activation): ReLU gate times dropout factor.
    gate: Vec<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        dims: [usize; 3],
        dropout: f64,
        adam: AdamConfig,
        rng: &mut R,
    ) -> Result<Self> {
        check_drop(dropout)?;
        Ok(Self {
            hidden: Linear::new(format!("{name}.hidden"), dims[0], dims[1], adam, rng),
            output: Linear::new(format!("{name}.out"), dims[1], dims[2], adam, rng),
            dropout,
        })
    }

    /// All parameters zero; outputs are identically zero.
    pub fn zeros(name: &str, dims: [usize; 3], dropout: f64, adam: AdamConfig) -> Self {
        Self {
            hidden: Linear::zeros(format!("{name}.hidden"), dims[0], dims[1], adam),
            output: Linear::zeros(format!("{name}.out"), dims[1], dims[2], adam),
            dropout,
        }
    }

    pub fn in_width(&self) -> usize {
        self.hidden.fan_in()
    }

    pub fn out_width(&self) -> usize {
        self.output.fan_out()
    }

    /// Training mode when `rng` is given (dropout active), eval otherwise.
    pub fn forward(&self, x: &Tensor, rng: Option<&mut StreamRng>) -> Result<(Tensor, MlpTrace)> {
        let pre = self.hidden.forward(x)?;
        let mut gate: Vec<f64> = pre.data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        if let Some(rng) = rng {
            if self.dropout > 0.0 {
                let mask = dropout_mask(gate.len(), self.dropout, rng)?;
                for (g, m) in gate.iter_mut().zip(mask) {
                    *g *= m;
                }
            }
        }
        let mut hidden = pre;
        for (h, g) in hidden.data_mut().iter_mut().zip(&gate) {
            *h = if *g == 0.0 { 0.0 } else { *h * g };
        }
        let y = self.output.forward(&hidden)?;
        Ok((
            y,
            MlpTrace {
                input: x.clone(),
                hidden,
                gate,
            },
        ))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x, None)?.0)
    }

    fn gated(&self, trace: &MlpTrace, dy: &Tensor) -> Result<Tensor> {
        let mut dh = self.output.input_grad(dy)?;
        for (d, g) in dh.data_mut().iter_mut().zip(&trace.gate) {
            *d *= g;
        }
        Ok(dh)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, trace: &MlpTrace, dy: &Tensor) -> Result<Tensor> {
        let dpre = self.gated(trace, dy)?;
        self.output.accumulate(&trace.hidden, dy)?;
        self.hidden.backward(&trace.input, &dpre)
    }

    /// Input gradient with the parameters held fixed.
    pub fn input_grad(&self, trace: &MlpTrace, dy: &Tensor) -> Result<Tensor> {
        let dpre = self.gated(trace, dy)?;
        self.hidden.input_grad(&dpre)
    }
}

impl Module for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        f(&self.hidden.params);
        f(&self.output.params);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        f(&mut self.hidden.params);
        f(&mut self.output.params);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_difference_gradient;
    use crate::nn::gradcheck::assert_grad_close;
    use crate::rng::stream;

    #[test]
    fn identity_linear_is_identity() {
        let mut lin = Linear::zeros("l", 2, 2, AdamConfig::default());
        lin.params.weights = Tensor::identity(2);
        let y = lin.forward(&Tensor::identity(2)).unwrap();
        assert_eq!(y, Tensor::identity(2));
    }

    #[test]
    fn zero_input_yields_bias_rows() {
        let mut rng = stream(1, "t");
        let mut lin = Linear::new("l", 3, 2, AdamConfig::default(), &mut rng);
        lin.params.bias = vec![1.0, 1.0];
        let y = lin.forward(&Tensor::zeros(4, 3)).unwrap();
        for r in 0..4 {
            assert_eq!(y.row(r), &[1.0, 1.0]);
        }
    }

    #[test]
    fn linear_shape_mismatch_names_both() {
        let lin = Linear::zeros("l", 3, 2, AdamConfig::default());
        let msg = lin.forward(&Tensor::zeros(1, 4)).unwrap_err().to_string();
        assert!(msg.contains("1x4") && msg.contains("3x2"), "{msg}");
    }

    #[test]
    fn linear_backward_matches_oracle() {
        for seed in 0..20 {
            let mut rng = stream(seed, "lin");
            let mut lin = Linear::new("l", 4, 3, AdamConfig::default(), &mut rng);
            let x = xavier_uniform(5, 4, &mut rng).scale(3.0);
            let probe = xavier_uniform(5, 3, &mut rng);
            // loss = Σ probe ⊙ y
            lin.zero_grad();
            let dx = lin.backward(&x, &probe).unwrap();
            let analytic = lin.flat_grads();
            let theta = lin.flat_params();
            let numeric = finite_difference_gradient(
                |p| {
                    let mut l = lin.clone();
                    l.set_flat_params(p);
                    Ok(l.forward(&x)?.hadamard(&probe)?.sum())
                },
                &theta,
                1e-5,
            )
            .unwrap();
            assert_grad_close(&analytic, &numeric);
            let numeric_x = finite_difference_gradient(
                |v| {
                    let xx = Tensor::from_vec(5, 4, v.to_vec())?;
                    Ok(lin.forward(&xx)?.hadamard(&probe)?.sum())
                },
                x.data(),
                1e-5,
            )
            .unwrap();
            assert_grad_close(dx.data(), &numeric_x);
        }
    }

    #[test]
    fn mlp_backward_matches_oracle() {
        for seed in 0..20 {
            let mut rng = stream(seed, "mlp");
            let mut mlp = Mlp::new("m", [5, 7, 3], 0.0, AdamConfig::default(), &mut rng).unwrap();
            let x = xavier_uniform(4, 5, &mut rng).scale(2.0);
            let probe = xavier_uniform(4, 3, &mut rng);
            let (_, trace) = mlp.forward(&x, None).unwrap();
            mlp.zero_grad();
            let dx = mlp.backward(&trace, &probe).unwrap();
            let frozen_dx = mlp.input_grad(&trace, &probe).unwrap();
            assert_eq!(dx, frozen_dx);
            let numeric = finite_difference_gradient(
                |p| {
                    let mut m = mlp.clone();
                    m.set_flat_params(p);
                    Ok(m.infer(&x)?.hadamard(&probe)?.sum())
                },
                &mlp.flat_params(),
                1e-5,
            )
            .unwrap();
            assert_grad_close(&mlp.flat_grads(), &numeric);
            let numeric_x = finite_difference_gradient(
                |v| {
                    let xx = Tensor::from_vec(4, 5, v.to_vec())?;
                    Ok(mlp.infer(&xx)?.hadamard(&probe)?.sum())
                },
                x.data(),
                1e-5,
            )
            .unwrap();
            assert_grad_close(dx.data(), &numeric_x);
        }
    }

    #[test]
    fn embedding_scatter_adds() {
        let mut rng = stream(3, "emb");
        let mut emb = Embedding::new("e", 4, 2, AdamConfig::default(), &mut rng);
        let idx = [1u32, 3, 1];
        let y = emb.forward(&idx);
        assert_eq!(y.row(0), emb.table.weights.row(1));
        emb.backward(&idx, &Tensor::filled(3, 2, 1.0));
        assert_eq!(emb.table.grad_weights.row(1), &[2.0, 2.0]);
        assert_eq!(emb.table.grad_weights.row(3), &[1.0, 1.0]);
        assert_eq!(emb.table.grad_weights.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn dropout_degenerate_cases() {
        let mut rng = stream(9, "drop");
        let x = xavier_uniform(10, 10, &mut rng);
        assert_eq!(dropout_apply(&x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(dropout_apply(&x, 0.9, &mut rng, false).unwrap(), x);
        assert!(matches!(dropout_apply(&x, 1.0, &mut rng, true), Err(Error::Config(_))));
        assert!(matches!(dropout_apply(&x, -0.1, &mut rng, true), Err(Error::Config(_))));
    }

    #[test]
    fn dropout_rate_and_scaling() {
        let mut rng = stream(11, "drop");
        let x = Tensor::filled(400, 400, 1.0);
        let y = dropout_apply(&x, 0.2, &mut rng, true).unwrap();
        let dropped = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / y.len() as f64;
        assert!((dropped - 0.2).abs() < 0.02, "drop fraction {dropped}");
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
    }
}
