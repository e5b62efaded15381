//! Squared-exponential kernel with one lengthscale per input dimension.

use serde::{Deserialize, Serialize};

use super::GpError;

/// Hyperparameters of the ARD squared-exponential kernel.
///
/// `signal_std` is the standard deviation of the latent function (the
/// kernel amplitude is its square). `noise_var` is the observation noise
/// variance; it only ever appears on the Gram diagonal and in predictive
/// variances, never in cross-covariances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub signal_std: f64,
    pub lengthscales: Vec<f64>,
    pub noise_var: f64,
}

impl KernelParams {
    pub fn new(signal_std: f64, lengthscales: Vec<f64>, noise_var: f64) -> Result<Self, GpError> {
        let params = Self {
            signal_std,
            lengthscales,
            noise_var,
        };
        params.validate()?;
        Ok(params)
    }

    /// Same lengthscale on every one of `dim` inputs.
    pub fn isotropic(signal_std: f64, lengthscale: f64, dim: usize, noise_var: f64) -> Result<Self, GpError> {
        Self::new(signal_std, vec![lengthscale; dim], noise_var)
    }

    /// Hyperparameters used for the lidar Q-value experiments
    /// (8 inputs: seven range readings, then the angular velocity).
    pub fn lidar_q_defaults() -> Self {
        Self {
            signal_std: 102.74,
            lengthscales: vec![2.1, 5.1, 14.0, 6.2, 15.0, 2.0, 2.0, 1.0],
            noise_var: 20.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn signal_var(&self) -> f64 {
        self.signal_std * self.signal_std
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if !(self.signal_std.is_finite() && self.signal_std > 0.0) {
            return Err(GpError::InvalidParams(format!(
                "signal_std must be positive, got {}",
                self.signal_std
            )));
        }
        if self.lengthscales.is_empty() {
            return Err(GpError::InvalidParams("at least one lengthscale is required".into()));
        }
        if let Some(l) = self.lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(GpError::InvalidParams(format!("lengthscales must be positive, got {l}")));
        }
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return Err(GpError::InvalidParams(format!(
                "noise_var must be non-negative, got {}",
                self.noise_var
            )));
        }
        Ok(())
    }

    /// Kernel value without the dimension check; callers guarantee lengths.
    #[inline]
    pub(crate) fn cov_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut sq = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.lengthscales) {
            let d = (x - y) / l;
            sq += d * d;
        }
        self.signal_var() * (-0.5 * sq).exp()
    }

    /// Prior variance of a noisy observation: k(x, x) + noise.
    pub fn prior_predictive_var(&self) -> f64 {
        self.signal_var() + self.noise_var
    }

    /// Packs `(ln σ, ln l_1..ln l_D, ln ω²)`; the noise entry is floored so the
    /// logarithm stays finite.
    pub(crate) fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.signal_std.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_var.max(super::hyper::MIN_NOISE_VAR).ln());
        v
    }

    pub(crate) fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        Self {
            signal_std: theta[0].exp(),
            lengthscales: theta[1..=d].iter().map(|t| t.exp()).collect(),
            noise_var: theta[d + 1].exp(),
        }
    }
}

/// σ²·exp(−½ Σ_d ((a_d − b_d)/l_d)²).
pub fn kernel_eval(a: &[f64], b: &[f64], params: &KernelParams) -> Result<f64, GpError> {
    let dim = params.dim();
    for v in [a, b] {
        if v.len() != dim {
            return Err(GpError::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }
    Ok(params.cov_unchecked(a, b))
}
