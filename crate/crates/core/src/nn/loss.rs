//! Softmax and cross-entropy.

use super::Tensor;
use crate::{Error, Result};

/// Row-wise softmax, shifted by the row max for stability.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

/// Mean negative log-likelihood of `targets` under `softmax(logits)` and its
/// gradient `(softmax − onehot) / rows`.
pub fn softmax_cross_entropy(logits: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
    if logits.rows() != targets.len() {
        return Err(Error::dim(
            "softmax_cross_entropy",
            format!("logits {}", logits.shape_str()),
            format!("{} targets", targets.len()),
        ));
    }
    if let Some((i, &t)) = targets.iter().enumerate().find(|(_, &t)| t >= logits.cols()) {
        return Err(Error::Label(format!(
            "target {t} at row {i} outside [0, {})",
            logits.cols()
        )));
    }
    let n = logits.rows().max(1) as f64;
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[t];
        grad.row_mut(r)[t] -= 1.0;
    }
    for g in grad.data_mut() {
        *g /= n;
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_difference_gradient;
    use crate::nn::gradcheck::assert_grad_close;
    use crate::nn::layers::xavier_uniform;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn uniform_logits_give_ln2() {
        let (l, _) = softmax_cross_entropy(&Tensor::from_rows(&[[0.0, 0.0]]), &[0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_class_is_near_zero() {
        let (l, _) = softmax_cross_entropy(&Tensor::from_rows(&[[30.0, 0.0]]), &[0]).unwrap();
        assert!(l < 1e-12);
    }

    #[test]
    fn out_of_range_target_is_label_error() {
        let r = softmax_cross_entropy(&Tensor::zeros(1, 2), &[2]);
        assert!(matches!(r, Err(Error::Label(_))));
    }

    #[test]
    fn gradient_matches_oracle() {
        for seed in 0..20 {
            let mut rng = stream(seed, "ce");
            let logits = xavier_uniform(6, 4, &mut rng).scale(5.0);
            let targets: Vec<usize> = (0..6).map(|_| rng.gen_range(0..4)).collect();
            let (_, grad) = softmax_cross_entropy(&logits, &targets).unwrap();
            let numeric = finite_difference_gradient(
                |v| Ok(softmax_cross_entropy(&Tensor::from_vec(6, 4, v.to_vec())?, &targets)?.0),
                logits.data(),
                1e-5,
            )
            .unwrap();
            assert_grad_close(grad.data(), &numeric);
        }
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut rng = stream(4, "sm");
        let logits = xavier_uniform(20, 7, &mut rng).scale(1e3);
        let p = softmax(&logits);
        for r in 0..20 {
            assert!(p.row(r).iter().all(|&v| v >= 0.0));
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
