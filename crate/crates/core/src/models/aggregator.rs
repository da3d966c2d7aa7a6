//! Server-side aggregation model `M^w`.
//!
//! Multi-head scaled dot-product self-attention over the `n` platform
//! positions of each sample (query/key/value projections, heads
//! concatenated), followed by additive attention pooling:
//! `e_i = q · tanh(W ŝ_i + b)`, `α = softmax(e)`, `s = Σ α_i ŝ_i`.
//! Platform order is fixed by configuration; no positional encoding.

use rand::Rng;

use crate::nn::{xavier_uniform, AdamConfig, Linear, Module, ParamBlock, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Aggregator {
    pub positions: usize,
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub pool: Linear,
    /// Pooling query vector, `pool_hidden × 1`, no bias.
    pub pool_query: ParamBlock,
}

#[derive(Debug, Clone)]
pub struct AggregatorTrace {
    batch: usize,
    x: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// `batch · heads · n · n` attention probabilities.
    attn: Vec<f64>,
    /// Contextual representations ŝ, `(batch · n) × width`.
    ctx: Tensor,
    pool_act: Tensor,
    /// Pooling weights, `batch · n`.
    alpha: Vec<f64>,
}

impl AggregatorTrace {
    /// Pooling weights of sample `b`.
    pub fn pooling_weights(&self, b: usize) -> &[f64] {
        let n = self.alpha.len() / self.batch.max(1);
        &self.alpha[b * n..(b + 1) * n]
    }
}

impl Aggregator {
    pub fn new<R: Rng + ?Sized>(
        positions: usize,
        width: usize,
        heads: usize,
        pool_hidden: usize,
        adam: AdamConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if positions == 0 || heads == 0 || width % heads != 0 {
            return Err(Error::Config(format!(
                "aggregator needs n ≥ 1 and width {width} divisible by {heads} heads"
            )));
        }
        Ok(Self {
            positions,
            heads,
            query: Linear::new("aggregator.query", width, width, adam, rng),
            key: Linear::new("aggregator.key", width, width, adam, rng),
            value: Linear::new("aggregator.value", width, width, adam, rng),
            pool: Linear::new("aggregator.pool", width, pool_hidden, adam, rng),
            pool_query: ParamBlock::new(
                "aggregator.pool_query",
                xavier_uniform(pool_hidden, 1, rng),
                Vec::new(),
                adam,
            ),
        })
    }

    pub fn width(&self) -> usize {
        self.query.fan_in()
    }

    fn head_dim(&self) -> usize {
        self.width() / self.heads
    }

    pub fn forward(&self, local: &[Tensor]) -> Result<(Tensor, AggregatorTrace)> {
        let n = self.positions;
        if local.len() != n {
            return Err(Error::Protocol(format!(
                "aggregator expects {n} local representations, got {}",
                local.len()
            )));
        }
        let d = self.width();
        let batch = local[0].rows();
        for t in local {
            if t.shape() != (batch, d) {
                return Err(Error::dim(
                    "aggregate_unified",
                    format!("{batch}x{d}"),
                    t.shape_str(),
                ));
            }
        }
        let mut x = Tensor::zeros(batch * n, d);
        for b in 0..batch {
            for (i, t) in local.iter().enumerate() {
                x.row_mut(b * n + i).copy_from_slice(t.row(b));
            }
        }
        let q = self.query.forward(&x)?;
        let k = self.key.forward(&x)?;
        let v = self.value.forward(&x)?;

        let hd = self.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut attn = vec![0.0; batch * self.heads * n * n];
        let mut ctx = Tensor::zeros(batch * n, d);
        for b in 0..batch {
            for h in 0..self.heads {
                let cols = h * hd..(h + 1) * hd;
                let a = &mut attn[(b * self.heads + h) * n * n..][..n * n];
                for i in 0..n {
                    let qi = &q.row(b * n + i)[cols.clone()];
                    let row = &mut a[i * n..(i + 1) * n];
                    for (j, r) in row.iter_mut().enumerate() {
                        let kj = &k.row(b * n + j)[cols.clone()];
                        *r = dot(qi, kj) * scale;
                    }
                    softmax_in_place(row);
                }
                for i in 0..n {
                    for j in 0..n {
                        let w = a[i * n + j];
                        let vj = v.row(b * n + j)[cols.clone()].to_vec();
                        let out = &mut ctx.row_mut(b * n + i)[cols.clone()];
                        for (o, vv) in out.iter_mut().zip(vj) {
                            *o += w * vv;
                        }
                    }
                }
            }
        }

        let pool_act = self.pool.forward(&ctx)?.map(f64::tanh);
        let scores = pool_act.matmul(&self.pool_query.weights)?;
        let mut alpha = scores.into_vec();
        let mut s = Tensor::zeros(batch, d);
        for b in 0..batch {
            let w = &mut alpha[b * n..(b + 1) * n];
            softmax_in_place(w);
            let out = s.row_mut(b);
            for (i, &wi) in w.iter().enumerate() {
                for (o, c) in out.iter_mut().zip(ctx.row(b * n + i)) {
                    *o += wi * c;
                }
            }
        }
        Ok((
            s,
            AggregatorTrace {
                batch,
                x,
                q,
                k,
                v,
                attn,
                ctx,
                pool_act,
                alpha,
            },
        ))
    }

    /// Accumulates parameter gradients and returns `∂L/∂s^l_i` per platform.
    pub fn backward(&mut self, trace: &AggregatorTrace, ds: &Tensor) -> Result<Vec<Tensor>> {
        let n = self.positions;
        let d = self.width();
        let batch = trace.batch;
        if ds.shape() != (batch, d) {
            return Err(Error::dim("aggregator backward", format!("{batch}x{d}"), ds.shape_str()));
        }

        // pooling
        let mut dctx = Tensor::zeros(batch * n, d);
        let mut de = Tensor::zeros(batch * n, 1);
        for b in 0..batch {
            let alpha = &trace.alpha[b * n..(b + 1) * n];
            let dsb = ds.row(b);
            let mut dalpha = vec![0.0; n];
            for i in 0..n {
                let ci = trace.ctx.row(b * n + i);
                dalpha[i] = dot(dsb, ci);
                for (g, v) in dctx.row_mut(b * n + i).iter_mut().zip(dsb) {
                    *g += alpha[i] * v;
                }
            }
            let mean: f64 = alpha.iter().zip(&dalpha).map(|(a, g)| a * g).sum();
            for i in 0..n {
                de.set(b * n + i, 0, alpha[i] * (dalpha[i] - mean));
            }
        }
        let gq = trace.pool_act.matmul_tn(&de)?;
        self.pool_query.grad_weights.add_assign(&gq)?;
        let dact = de.matmul_nt(&self.pool_query.weights)?;
        let mut dpre = dact;
        for (g, a) in dpre.data_mut().iter_mut().zip(trace.pool_act.data()) {
            *g *= 1.0 - a * a;
        }
        dctx.add_assign(&self.pool.backward(&trace.ctx, &dpre)?)?;

        // self-attention
        let hd = self.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut dq = Tensor::zeros(batch * n, d);
        let mut dk = Tensor::zeros(batch * n, d);
        let mut dv = Tensor::zeros(batch * n, d);
        let mut da = vec![0.0; n * n];
        for b in 0..batch {
            for h in 0..self.heads {
                let cols = h * hd..(h + 1) * hd;
                let a = &trace.attn[(b * self.heads + h) * n * n..][..n * n];
                for i in 0..n {
                    let gi = dctx.row(b * n + i)[cols.clone()].to_vec();
                    for j in 0..n {
                        da[i * n + j] = dot(&gi, &trace.v.row(b * n + j)[cols.clone()]);
                        let w = a[i * n + j];
                        for (o, g) in dv.row_mut(b * n + j)[cols.clone()].iter_mut().zip(&gi) {
                            *o += w * g;
                        }
                    }
                }
                for i in 0..n {
                    let row_a = &a[i * n..(i + 1) * n];
                    let row_da = &da[i * n..(i + 1) * n];
                    let mean: f64 = row_a.iter().zip(row_da).map(|(x, y)| x * y).sum();
                    for j in 0..n {
                        let dscore = row_a[j] * (row_da[j] - mean) * scale;
                        if dscore == 0.0 {
                            continue;
                        }
                        let kj = trace.k.row(b * n + j)[cols.clone()].to_vec();
                        let qi = trace.q.row(b * n + i)[cols.clone()].to_vec();
                        for (o, kv) in dq.row_mut(b * n + i)[cols.clone()].iter_mut().zip(&kj) {
                            *o += dscore * kv;
                        }
                        for (o, qv) in dk.row_mut(b * n + j)[cols.clone()].iter_mut().zip(&qi) {
                            *o += dscore * qv;
                        }
                    }
                }
            }
        }
        let mut dx = self.query.backward(&trace.x, &dq)?;
        dx.add_assign(&self.key.backward(&trace.x, &dk)?)?;
        dx.add_assign(&self.value.backward(&trace.x, &dv)?)?;

        let mut out = vec![Tensor::zeros(batch, d); n];
        for b in 0..batch {
            for (i, t) in out.iter_mut().enumerate() {
                t.row_mut(b).copy_from_slice(dx.row(b * n + i));
            }
        }
        Ok(out)
    }
}

impl Module for Aggregator {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        f(&self.query.params);
        f(&self.key.params);
        f(&self.value.params);
        f(&self.pool.params);
        f(&self.pool_query);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        f(&mut self.query.params);
        f(&mut self.key.params);
        f(&mut self.value.params);
        f(&mut self.pool.params);
        f(&mut self.pool_query);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}
