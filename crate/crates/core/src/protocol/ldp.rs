//! Clip-then-Laplace perturbation of representations and gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::Tensor;
use crate::{Error, Result};

/// Local differential privacy on the server → task platform edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdpConfig {
    pub enabled: bool,
    /// Clip bound `c`.
    pub clip: f64,
    pub epsilon: f64,
    /// Also perturb the unified representation uploaded during training,
    /// not just when serving.
    pub perturb_training: bool,
}

impl Default for LdpConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            clip: 1.0,
            epsilon: 8.0,
            perturb_training: true,
        }
    }
}

impl LdpConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.clip, self.epsilon, self.enabled)
    }

    pub fn perturbs_training(&self) -> bool {
        self.enabled && self.perturb_training
    }
}

/// Optional noise on the gradients returned by the task and sensitive
/// platforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradientDpConfig {
    pub enabled: bool,
    pub clip: f64,
    pub epsilon: f64,
}

impl Default for GradientDpConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            clip: 1.0,
            epsilon: 8.0,
        }
    }
}

impl GradientDpConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.clip, self.epsilon, self.enabled)
    }
}

fn check(clip: f64, epsilon: f64, enabled: bool) -> Result<()> {
    if !(clip > 0.0 && clip.is_finite()) {
        return Err(Error::Config(format!("clip bound {clip} must be positive")));
    }
    if enabled && !(epsilon > 0.0) {
        return Err(Error::Config(format!("privacy budget {epsilon} must be positive")));
    }
    Ok(())
}

/// One Laplace(0, `scale`) draw by inverse CDF.
pub fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Clips every coordinate to `[−c, c]` and adds Laplace noise of scale
/// `2c/ε` per coordinate.
pub fn clip_and_noise<R: Rng + ?Sized>(x: &Tensor, clip: f64, epsilon: f64, rng: &mut R) -> Result<Tensor> {
    check(clip, epsilon, true)?;
    let scale = 2.0 * clip / epsilon;
    let mut out = x.map(|v| v.clamp(-clip, clip));
    for v in out.data_mut() {
        *v += laplace(scale, rng);
    }
    Ok(out)
}

pub fn ldp_perturb<R: Rng + ?Sized>(s: &Tensor, cfg: &LdpConfig, rng: &mut R) -> Result<Tensor> {
    clip_and_noise(s, cfg.clip, cfg.epsilon, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn huge_budget_only_clips() {
        let s = Tensor::from_rows(&[[10.0, -0.3, -7.0]]);
        let cfg = LdpConfig {
            enabled: true,
            epsilon: 1e9,
            ..LdpConfig::default()
        };
        let out = ldp_perturb(&s, &cfg, &mut stream(1, "ldp")).unwrap();
        for (o, e) in out.data().iter().zip([1.0, -0.3, -1.0]) {
            assert!((o - e).abs() < 1e-6);
        }
    }

    #[test]
    fn laplace_moments() {
        let mut rng = stream(9, "ldp");
        let (c, eps) = (1.0, 8.0);
        let b = 2.0 * c / eps;
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| laplace(b, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05 * b);
        assert!((var / (2.0 * b * b) - 1.0).abs() < 0.05);
    }

    #[test]
    fn nonpositive_budget_is_rejected() {
        let s = Tensor::zeros(1, 1);
        let cfg = LdpConfig {
            enabled: true,
            epsilon: 0.0,
            ..LdpConfig::default()
        };
        assert!(matches!(ldp_perturb(&s, &cfg, &mut stream(0, "x")), Err(Error::Config(_))));
        assert!(cfg.validate().is_err());
    }
}
