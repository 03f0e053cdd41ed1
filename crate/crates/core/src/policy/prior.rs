use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::STATE_DIM;
use crate::scalar::Real;

/// Number of parameters in the action-centered reward model.
pub const PARAM_DIM: usize = 3 * STATE_DIM;

/// Independent Normal prior over `[α₀, α₁, β]` plus the reward noise variance.
///
/// `α₁` shares the advantage prior `(μ_β, Σ_β)`. Variances are stored, not
/// standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec<T> {
    pub mu_alpha0: [T; STATE_DIM],
    pub var_alpha0: [T; STATE_DIM],
    pub mu_beta: [T; STATE_DIM],
    pub var_beta: [T; STATE_DIM],
    pub sigma2: T,
}

impl<T: Real> Default for PriorSpec<T> {
    fn default() -> Self {
        Self::canonical()
    }
}

impl<T: Real> PriorSpec<T> {
    /// The finalized prior built from the pilot study.
    pub fn canonical() -> Self {
        let lit5 = |v: [f64; 5]| v.map(T::lit);
        let sq5 = |v: [f64; 5]| v.map(|s| T::lit(s * s));
        Self {
            mu_alpha0: lit5([18.0, 0.0, 30.0, 0.0, 73.0]),
            var_alpha0: sq5([73.0, 25.0, 95.0, 27.0, 83.0]),
            mu_beta: lit5([0.0, 0.0, 0.0, 53.0, 0.0]),
            var_beta: sq5([12.0, 33.0, 35.0, 56.0, 17.0]),
            sigma2: T::lit(3878.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: &[T]| v.iter().all(|x| x.is_finite() && *x > T::zero());
        if !ok(&self.var_alpha0) || !ok(&self.var_beta) || !ok(&[self.sigma2]) {
            return Err(Error::Config("prior variances and sigma2 must be positive and finite".into()));
        }
        if !self.mu_alpha0.iter().chain(&self.mu_beta).all(|x| x.is_finite()) {
            return Err(Error::Config("prior means must be finite".into()));
        }
        Ok(())
    }

    /// Full 15-entry prior mean in `[α₀, α₁, β]` order.
    pub fn mean(&self) -> [T; PARAM_DIM] {
        let mut m = [T::zero(); PARAM_DIM];
        m[..5].copy_from_slice(&self.mu_alpha0);
        m[5..10].copy_from_slice(&self.mu_beta);
        m[10..].copy_from_slice(&self.mu_beta);
        m
    }

    /// Full 15-entry prior variance diagonal in `[α₀, α₁, β]` order.
    pub fn variance(&self) -> [T; PARAM_DIM] {
        let mut v = [T::zero(); PARAM_DIM];
        v[..5].copy_from_slice(&self.var_alpha0);
        v[5..10].copy_from_slice(&self.var_beta);
        v[10..].copy_from_slice(&self.var_beta);
        v
    }
}
