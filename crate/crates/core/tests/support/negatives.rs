//! Negative selection against an exhaustive ranking.

use fairvfl_core::adversarial::*;
use fairvfl_core::nn::Tensor;
use fairvfl_core::rng::stream;
use rand::Rng;

/// Exhaustive ranking: the relevance of every candidate, and the E-th best
/// score. Any candidate scoring strictly above it must be in the pool, and
/// nothing scoring below it may be.
pub fn brute_force_threshold(a: &Tensor, q: usize, pool: usize) -> (Vec<f64>, f64) {
    let scores: Vec<f64> = (0..a.rows())
        .map(|k| a.row(q).iter().zip(a.row(k)).map(|(x, y)| x * y).sum())
        .collect();
    let mut others: Vec<f64> = (0..a.rows()).filter(|&k| k != q).map(|k| scores[k]).collect();
    others.sort_by(|x, y| y.total_cmp(x));
    (scores, others[pool.min(others.len()) - 1])
}

pub fn negatives_come_from_the_brute_force_top_pool() {
    let mut rng = stream(11, "negatives/oracle");
    for _ in 0..10_000 {
        let b = rng.gen_range(2..=40);
        let h = rng.gen_range(1..=6);
        let pool = rng.gen_range(1..=8);
        // Coarse integer grid so ties are common.
        let data = (0..b * h).map(|_| rng.gen_range(-2..=2) as f64).collect();
        let a = Tensor::from_vec(b, h, data).unwrap();
        let q = rng.gen_range(0..b);
        let ctx = ContrastiveContext { protected: &a, pool };
        let pick = rank_and_select_negative(&ctx, q, &mut rng).unwrap();
        assert_ne!(pick, q);
        let (scores, threshold) = brute_force_threshold(&a, q, pool);
        assert!(scores[pick] >= threshold, "picked {pick} below the top-{pool} threshold");
        let members = relevance_pool(&a, q, pool).unwrap();
        assert_eq!(members.len(), pool.min(b - 1));
        for k in (0..b).filter(|&k| k != q) {
            if scores[k] > threshold {
                assert!(members.contains(&k));
            }
        }
    }
}
