use serde::{Deserialize, Serialize};

use super::joint_features;
use super::prior::{PriorSpec, PARAM_DIM};
use crate::error::{Error, NumericalError, Result};
use crate::features::{AlgState, STATE_DIM};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

/// Default ridge penalty for the per-participant pilot fits.
pub const PILOT_RIDGE_LAMBDA: f64 = 1e-3;
/// Default significance threshold on the mean standardized effect.
pub const PILOT_SIGNIFICANCE: f64 = 0.15;

/// Index of the advantage intercept, which is never declared significant.
const ADVANTAGE_INTERCEPT: usize = PARAM_DIM - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotRow<T> {
    pub state: AlgState<T>,
    pub action: u8,
    pub pi: T,
    pub reward: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotParticipant<T> {
    pub id: String,
    pub rows: Vec<PilotRow<T>>,
}

/// Per-coefficient summary of the per-participant ridge fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotReport<T> {
    pub standardized_mean: Vec<T>,
    pub coef_mean: Vec<T>,
    pub coef_sd: Vec<T>,
    pub significant: Vec<bool>,
    pub residual_variance: Vec<T>,
}

fn mean<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a + x) / T::from_usize(v.len()).unwrap()
}

/// Population standard deviation.
fn sd_pop<T: Real>(v: &[T]) -> T {
    let m = mean(v);
    (v.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m)) / T::from_usize(v.len()).unwrap()).sqrt()
}

/// Ridge fit of one participant; returns coefficients and the residual variance.
fn ridge_fit<T: Real>(p: &PilotParticipant<T>, lambda: T) -> Result<(Vec<T>, T)> {
    let n = p.rows.len();
    if n < 2 {
        return Err(NumericalError::RankDeficient { participant: p.id.clone() }.into());
    }
    let mut xtx = Matrix::zeros(PARAM_DIM, PARAM_DIM);
    let mut xtr = vec![T::zero(); PARAM_DIM];
    let phis: Vec<_> = p.rows.iter().map(|r| joint_features(&r.state, r.action, r.pi)).collect();
    for (phi, r) in phis.iter().zip(&p.rows) {
        xtx.add_outer(phi, T::one());
        for i in 0..PARAM_DIM {
            xtr[i] = xtr[i] + phi[i] * r.reward;
        }
    }
    for i in 0..PARAM_DIM {
        xtx[(i, i)] = xtx[(i, i)] + lambda;
    }
    let chol = Cholesky::factor(&xtx).map_err(|_| NumericalError::RankDeficient { participant: p.id.clone() })?;
    let theta = chol.solve(&xtr);
    if !theta.iter().all(|x| x.is_finite()) {
        return Err(NumericalError::RankDeficient { participant: p.id.clone() }.into());
    }
    let sse = phis.iter().zip(&p.rows).fold(T::zero(), |a, (phi, r)| {
        let e = r.reward - crate::linalg::dot(phi, &theta);
        a + e * e
    });
    Ok((theta, sse / T::from_usize(n - 1).unwrap()))
}

/// Builds an informative prior from pilot data.
///
/// Each participant gets a ridge fit of the full action-centered model.
/// Coefficients are standardized by that participant's reward standard
/// deviation; a coefficient is significant when the mean standardized effect
/// exceeds `threshold` in magnitude. Significant coefficients take the
/// empirical mean and standard deviation across participants, the rest are
/// shrunk to mean zero with half the standard deviation. The advantage
/// intercept is always treated as insignificant.
pub fn build_prior_from_pilot<T: Real>(
    participants: &[PilotParticipant<T>],
    lambda: T,
    threshold: T,
) -> Result<(PriorSpec<T>, PilotReport<T>)> {
    if participants.is_empty() {
        return Err(Error::Data("pilot data has no participants".into()));
    }
    let mut coefs = Vec::with_capacity(participants.len());
    let mut standardized = Vec::with_capacity(participants.len());
    let mut resid = Vec::with_capacity(participants.len());
    for p in participants {
        let (theta, rv) = ridge_fit(p, lambda)?;
        let rewards: Vec<T> = p.rows.iter().map(|r| r.reward).collect();
        let m = mean(&rewards);
        let ss = rewards.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m));
        let sd = (ss / T::from_usize(rewards.len() - 1).unwrap()).sqrt();
        if !(sd > T::zero()) {
            return Err(Error::Data(format!("participant {} has constant rewards", p.id)));
        }
        standardized.push(theta.iter().map(|&c| c / sd).collect::<Vec<_>>());
        coefs.push(theta);
        resid.push(rv);
    }
    let column = |rows: &[Vec<T>], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    let mut report = PilotReport {
        standardized_mean: Vec::with_capacity(PARAM_DIM),
        coef_mean: Vec::with_capacity(PARAM_DIM),
        coef_sd: Vec::with_capacity(PARAM_DIM),
        significant: Vec::with_capacity(PARAM_DIM),
        residual_variance: resid.clone(),
    };
    let mut prior_mean = [T::zero(); PARAM_DIM];
    let mut prior_var = [T::zero(); PARAM_DIM];
    for j in 0..PARAM_DIM {
        let sm = mean(&column(&standardized, j));
        let col = column(&coefs, j);
        let (m, sd) = (mean(&col), sd_pop(&col));
        let sig = j != ADVANTAGE_INTERCEPT && sm.abs() > threshold;
        prior_mean[j] = if sig { m } else { T::zero() };
        let s = if sig { sd } else { sd * T::half() };
        prior_var[j] = s * s;
        report.standardized_mean.push(sm);
        report.coef_mean.push(m);
        report.coef_sd.push(sd);
        report.significant.push(sig);
    }
    let pick = |v: &[T; PARAM_DIM], off: usize| -> [T; STATE_DIM] { std::array::from_fn(|i| v[off + i]) };
    let prior = PriorSpec {
        mu_alpha0: pick(&prior_mean, 0),
        var_alpha0: pick(&prior_var, 0),
        mu_beta: pick(&prior_mean, 2 * STATE_DIM),
        var_beta: pick(&prior_var, 2 * STATE_DIM),
        sigma2: mean(&resid),
    };
    prior.validate()?;
    Ok((prior, report))
}
