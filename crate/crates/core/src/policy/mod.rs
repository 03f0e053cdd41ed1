//! Smoothed posterior sampling with an action-centered Bayesian linear model.
//!
//! The expected reward is modeled as
//! `f(S)ᵀα₀ + π f(S)ᵀα₁ + (A - π) f(S)ᵀβ`, which keeps the advantage `β`
//! identifiable even when the baseline part is misspecified. Only the
//! posterior of `β` drives action selection.

mod pilot;
mod posterior;
mod prior;
mod smoothing;

pub use pilot::{build_prior_from_pilot, PilotParticipant, PilotReport, PilotRow, PILOT_RIDGE_LAMBDA, PILOT_SIGNIFICANCE};
pub use posterior::{posterior_from_stats, posterior_update, PosteriorState, SufficientStats, JITTER_LADDER};
pub use prior::{PriorSpec, PARAM_DIM};
pub use smoothing::{
    action_prob, advantage_moments, AdvantagePosterior, prob_from_moments, rho, SmoothingParams, HERMITE_ROUGHNESS_LIMIT, SIGMA_RRV,
};

use rand::Rng;

use crate::features::{AlgState, STATE_DIM};
use crate::scalar::Real;

/// `[f(S), π f(S), (A - π) f(S)]`.
pub fn joint_features<T: Real>(state: &AlgState<T>, action: u8, pi: T) -> [T; PARAM_DIM] {
    let f = state.to_array();
    let centered = T::from_u8(action).unwrap() - pi;
    let mut phi = [T::zero(); PARAM_DIM];
    for i in 0..STATE_DIM {
        phi[i] = f[i];
        phi[STATE_DIM + i] = pi * f[i];
        phi[2 * STATE_DIM + i] = centered * f[i];
    }
    phi
}

/// Bernoulli(π) draw: send a prompt when a uniform falls below `pi`.
pub fn select_action<T: Real, R: Rng + ?Sized>(pi: T, rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    (u < pi.as_f64()) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn joint_feature_blocks() {
        let s = AlgState { time_of_day: 0.0, bbar_norm: 0.0, abar_norm: 0.0, prior_day_app: 0.0 };
        let phi = joint_features(&s, 1, 0.3);
        let mut want = [0.0f64; 15];
        want[4] = 1.0;
        want[9] = 0.3;
        want[14] = 0.7;
        for i in 0..15 {
            assert!((phi[i] - want[i]).abs() < 1e-15);
        }
        let phi = joint_features(&s, 0, 0.0);
        assert!(phi[10..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn action_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert!((0..1000).all(|_| select_action(1.0f64, &mut rng) == 1));
        assert!((0..1000).all(|_| select_action(0.0f64, &mut rng) == 0));
        let n = 100_000;
        let ones: u32 = (0..n).map(|_| select_action(0.3f32, &mut rng) as u32).sum();
        let mean = ones as f64 / n as f64;
        assert!((mean - 0.3).abs() < 0.005, "{mean}");
    }
}
