use serde::{Deserialize, Serialize};

use super::posterior::PosteriorState;
use crate::error::{Error, NumericalError, Result};
use crate::features::{AlgState, STATE_DIM};
use crate::quadrature::{logistic_normal_expectation, normal_expectation};
use crate::scalar::Real;

/// Reward residual standard deviation the default slope is scaled by.
pub const SIGMA_RRV: f64 = 38.83;
/// Largest `b·σ` for which the fixed Gauss-Hermite rule meets a 1e-8 error target.
pub const HERMITE_ROUGHNESS_LIMIT: f64 = 2.0;
/// Below this, a negative marginal variance is treated as round-off.
pub const VARIANCE_ROUNDOFF: f64 = 1e-10;

/// Generalized logistic `ρ(x) = L_min + (L_max - L_min) / (1 + c e^{-bx})^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams<T> {
    pub l_min: T,
    pub l_max: T,
    pub c: T,
    pub k: T,
    pub b: T,
}

impl<T: Real> Default for SmoothingParams<T> {
    fn default() -> Self {
        Self::with_slope(T::lit(20.0 / SIGMA_RRV))
    }
}

impl<T: Real> SmoothingParams<T> {
    pub fn with_slope(b: T) -> Self {
        Self { l_min: T::lit(0.2), l_max: T::lit(0.8), c: T::lit(5.0), k: T::one(), b }
    }

    /// The ten-times-steeper candidate slope.
    pub fn steep() -> Self {
        Self::with_slope(T::lit(200.0 / SIGMA_RRV))
    }

    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        let valid = z < self.l_min
            && self.l_min < self.l_max
            && self.l_max < T::one()
            && self.b > z
            && self.c > z
            && self.k > z
            && self.b.is_finite()
            && self.c.is_finite()
            && self.k.is_finite();
        if valid {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid smoothing parameters {self:?}")))
        }
    }
}

pub fn rho<T: Real>(x: T, p: &SmoothingParams<T>) -> T {
    let e = (-p.b * x).exp();
    // For very negative x the denominator overflows to +inf and the fraction to 0.
    p.l_min + (p.l_max - p.l_min) / (T::one() + p.c * e).powf(p.k)
}

/// Mean and variance of the advantage `sᵀβ̃` under the posterior.
pub fn advantage_moments<T: Real>(state: &AlgState<T>, posterior: &PosteriorState<T>) -> (T, T) {
    let s = state.to_array();
    let mean = crate::linalg::dot(&s, posterior.beta_mean());
    let var = posterior.beta_cov().quad_form(&s);
    (mean, var)
}

/// Advantage block of a posterior, extracted once per update so that action
/// selection does not copy the full covariance at every decision point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvantagePosterior<T> {
    pub mean: [T; STATE_DIM],
    pub cov: [[T; STATE_DIM]; STATE_DIM],
}

impl<T: Real> AdvantagePosterior<T> {
    pub fn from_posterior(posterior: &PosteriorState<T>) -> Self {
        let off = 2 * STATE_DIM;
        let mut mean = [T::zero(); STATE_DIM];
        let mut cov = [[T::zero(); STATE_DIM]; STATE_DIM];
        for i in 0..STATE_DIM {
            mean[i] = posterior.mean[off + i];
            for j in 0..STATE_DIM {
                cov[i][j] = posterior.cov[(off + i, off + j)];
            }
        }
        Self { mean, cov }
    }

    pub fn moments(&self, state: &AlgState<T>) -> (T, T) {
        let s = state.to_array();
        let mut mean = T::zero();
        let mut var = T::zero();
        for i in 0..STATE_DIM {
            mean = mean + s[i] * self.mean[i];
            let mut row = T::zero();
            for j in 0..STATE_DIM {
                row = row + self.cov[i][j] * s[j];
            }
            var = var + s[i] * row;
        }
        (mean, var)
    }

    pub fn prob(&self, state: &AlgState<T>, p: &SmoothingParams<T>) -> Result<T> {
        let (mean, var) = self.moments(state);
        prob_from_moments(mean, var, p)
    }
}

/// `E[ρ(sᵀβ̃)]` over the posterior of the advantage, clipped to `[L_min, L_max]`.
pub fn action_prob<T: Real>(state: &AlgState<T>, posterior: &PosteriorState<T>, p: &SmoothingParams<T>) -> Result<T> {
    let (mean, var) = advantage_moments(state, posterior);
    prob_from_moments(mean, var, p)
}

pub fn prob_from_moments<T: Real>(mean: T, var: T, p: &SmoothingParams<T>) -> Result<T> {
    let (m, v) = (mean.as_f64(), var.as_f64());
    if !m.is_finite() || !v.is_finite() {
        return Err(NumericalError::NonFinite { what: "advantage moments" }.into());
    }
    if v < -VARIANCE_ROUNDOFF {
        return Err(NumericalError::NegativeVariance { value: v }.into());
    }
    let sd = v.max(0.0).sqrt();
    let pf = SmoothingParams {
        l_min: p.l_min.as_f64(),
        l_max: p.l_max.as_f64(),
        c: p.c.as_f64(),
        k: p.k.as_f64(),
        b: p.b.as_f64(),
    };
    let roughness = pf.b * pf.k * sd;
    let e = if roughness > HERMITE_ROUGHNESS_LIMIT && pf.k == 1.0 {
        pf.l_min + (pf.l_max - pf.l_min) * logistic_normal_expectation(pf.b * m - pf.c.ln(), pf.b * sd)
    } else {
        normal_expectation(|x| rho(x, &pf), m, sd, roughness, HERMITE_ROUGHNESS_LIMIT, pf.c.ln() / pf.b)
    };
    Ok(T::lit(e.clamp(pf.l_min, pf.l_max)))
}
