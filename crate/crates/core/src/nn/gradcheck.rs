//! Central finite differences, the independent oracle for every backward pass.

use crate::{Error, Result};

/// `(f(x + h·e_k) − f(x − h·e_k)) / 2h` for every coordinate `k`.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Oracle(format!("step {h} must be positive")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + h;
        let up = f(&probe)?;
        probe[k] = orig - h;
        let down = f(&probe)?;
        probe[k] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Oracle(format!("non-finite objective at coordinate {k}")));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Relative error with an absolute floor near zero.
pub fn grad_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= 1e-6 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

/// Worst [`grad_error`] over paired coordinates.
pub fn max_grad_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| grad_error(a, n))
        .fold(0.0, f64::max)
}

/// Panics unless every coordinate agrees within relative 1e-4 (absolute 1e-6).
#[doc(hidden)]
pub fn assert_grad_close(analytic: &[f64], numeric: &[f64]) {
    let err = max_grad_error(analytic, numeric);
    assert!(err < 1e-4, "gradient check failed: max relative error {err:e}");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let g = finite_difference_gradient(|x| Ok(x[0] * x[0]), &[3.0], 1e-4).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = finite_difference_gradient(|_| Ok(4.2), &[1.0, -2.0, 3.0], 1e-4).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn non_finite_objective_is_oracle_error() {
        let r = finite_difference_gradient(|x| Ok(1.0 / (x[0] - 1e-4)), &[0.0], 1e-4);
        assert!(matches!(r, Err(Error::Oracle(_))));
        assert!(matches!(
            finite_difference_gradient(|_| Ok(0.0), &[0.0], 0.0),
            Err(Error::Oracle(_))
        ));
    }
}
