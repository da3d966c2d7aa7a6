use rand::Rng;

use crate::nn::Tensor;
use crate::{Error, Result};

/// Protected representations of one batch plus the top-pool size used to
/// pick contrastive negatives.
#[derive(Debug, Clone, Copy)]
pub struct ContrastiveContext<'a> {
    pub protected: &'a Tensor,
    pub pool: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Candidates for `query` ranked by relevance `a_q · a_k`, self excluded,
/// truncated to the top `pool`. Ties go to the lower index.
pub fn relevance_pool(protected: &Tensor, query: usize, pool: usize) -> Result<Vec<usize>> {
    let b = protected.rows();
    if b < 2 {
        return Err(Error::Protocol("contrastive learning requires ≥2 samples".into()));
    }
    if pool == 0 {
        return Err(Error::Config("negative pool size must be ≥ 1".into()));
    }
    if query >= b {
        return Err(Error::Protocol(format!("query {query} outside batch of {b}")));
    }
    let q = protected.row(query);
    let mut scored = Vec::with_capacity(b - 1);
    for k in (0..b).filter(|&k| k != query) {
        let r = dot(q, protected.row(k));
        if r.is_nan() {
            return Err(Error::Numeric {
                what: "relevance score".into(),
                sample: k,
            });
        }
        scored.push((r, k));
    }
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    scored.truncate(pool);
    Ok(scored.into_iter().map(|(_, k)| k).collect())
}

/// One negative for `query`, drawn uniformly from its [`relevance_pool`].
pub fn rank_and_select_negative<R: Rng + ?Sized>(
    ctx: &ContrastiveContext,
    query: usize,
    rng: &mut R,
) -> Result<usize> {
    let pool = relevance_pool(ctx.protected, query, ctx.pool)?;
    Ok(pool[rng.gen_range(0..pool.len())])
}

/// Negatives for every row of the batch, in row order.
pub fn select_negatives<R: Rng + ?Sized>(ctx: &ContrastiveContext, rng: &mut R) -> Result<Vec<usize>> {
    (0..ctx.protected.rows())
        .map(|q| rank_and_select_negative(ctx, q, rng))
        .collect()
}
