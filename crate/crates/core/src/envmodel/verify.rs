//! Check that imputed effects have the intended standardized size.
//!
//! For each participant, states are resampled from their own history and an
//! outcome is generated under both actions with only the intercept effect
//! switched on. A pooled least-squares fit of the reward on `[g(S), A]` then
//! gives the average treatment effect, which is reported relative to the
//! residual and the overall reward spread.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::ParticipantSeries;
use super::effects::ParticipantEffects;
use super::state::{Stationarity, STUDY_POINTS};
use super::EnvBundle;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::rng::{purpose, stream};
use crate::simenv::generate_outcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub stationarity: Stationarity,
    pub zeta: f64,
    pub tuples: usize,
    pub theta1: f64,
    pub se_theta1: f64,
    pub sigma_res: f64,
    pub sigma_reward: f64,
    /// `theta1 / sigma_res`.
    pub effect_res: f64,
    /// `theta1 / sigma_reward`.
    pub effect_reward: f64,
}

/// Least squares of `y` on the rows of `x`; returns coefficients, residual
/// standard deviation and the inverse Gram matrix.
fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64, Matrix<f64>)> {
    let p = x[0].len();
    let mut xtx = Matrix::zeros(p, p);
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        xtx.add_outer(row, 1.0);
        xty.iter_mut().zip(row).for_each(|(a, b)| *a += b * yi);
    }
    let chol = Cholesky::factor(&xtx).map_err(|_| Error::Data("verification design is rank deficient".into()))?;
    let theta = chol.solve(&xty);
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(row, yi)| (yi - row.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>()).powi(2))
        .sum();
    let dof = (x.len() - p).max(1) as f64;
    Ok((theta, (sse / dof).sqrt(), chol.inverse()))
}

/// Runs the check with each participant's selected model and a fresh effect draw.
pub fn verify_effect_sizes(bundle: &EnvBundle, series: &[ParticipantSeries], zeta: f64, seed: u64) -> Result<VerificationReport> {
    if bundle.participants.len() != series.len() || series.is_empty() {
        return Err(Error::Data("fits and data must cover the same participants".into()));
    }
    let stat = bundle.stationarity;
    let specs = bundle.effect_specs(zeta);
    let mut x = Vec::with_capacity(2 * STUDY_POINTS * series.len());
    let mut y = Vec::with_capacity(x.capacity());
    for (i, s) in series.iter().enumerate() {
        let mut rng = stream(seed, &[purpose::VERIFY, zeta.to_bits(), i as u64]);
        let mut model = bundle.instantiate(i, &specs, &mut rng);
        let drawn = model.effects;
        let mut effects = ParticipantEffects::zero(stat);
        *effects.delta_b.last_mut().unwrap() = *drawn.delta_b.last().unwrap();
        *effects.delta_n.last_mut().unwrap() = *drawn.delta_n.last().unwrap();
        model.effects = effects;
        let contexts = s.contexts();
        for _ in 0..STUDY_POINTS {
            let c = contexts[rng.random_range(0..contexts.len())];
            let (g, h) = (c.g(stat), c.h(stat));
            for action in 0..2u8 {
                let out = generate_outcome(&model, &g, &h, action, 1.0, &mut rng);
                let mut row = g.to_vec();
                row.push(action as f64);
                x.push(row);
                y.push(out.q);
            }
        }
    }
    let (theta, sigma_res, inv) = least_squares(&x, &y)?;
    let a = theta.len() - 1;
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sigma_reward = (y.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    let theta1 = theta[a];
    Ok(VerificationReport {
        stationarity: stat,
        zeta,
        tuples: y.len(),
        theta1,
        se_theta1: sigma_res * inv[(a, a)].sqrt(),
        sigma_res,
        sigma_reward,
        effect_res: theta1 / sigma_res,
        effect_reward: theta1 / sigma_reward,
    })
}
