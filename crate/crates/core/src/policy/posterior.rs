use serde::{Deserialize, Serialize};

use super::prior::{PriorSpec, PARAM_DIM};
use crate::error::{NumericalError, Result};
use crate::features::STATE_DIM;
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

/// Diagonal jitter ladder tried when the posterior precision will not factor.
pub const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Joint Gaussian posterior over `[α₀, α₁, β]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState<T> {
    pub mean: Vec<T>,
    pub cov: Matrix<T>,
}

impl<T: Real> PosteriorState<T> {
    pub fn from_prior(prior: &PriorSpec<T>) -> Self {
        Self { mean: prior.mean().to_vec(), cov: Matrix::from_diag(&prior.variance()) }
    }

    pub fn beta_mean(&self) -> &[T] {
        &self.mean[2 * STATE_DIM..]
    }

    pub fn beta_cov(&self) -> Matrix<T> {
        self.cov.block(2 * STATE_DIM, STATE_DIM)
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|x| x.is_finite()) && self.cov.is_finite()
    }
}

/// Running `ΦᵀΦ`, `ΦᵀR` and count for one cluster of participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats<T> {
    pub xtx: Matrix<T>,
    pub xtr: Vec<T>,
    pub n: usize,
}

impl<T: Real> Default for SufficientStats<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> SufficientStats<T> {
    pub fn new() -> Self {
        Self { xtx: Matrix::zeros(PARAM_DIM, PARAM_DIM), xtr: vec![T::zero(); PARAM_DIM], n: 0 }
    }

    pub fn push(&mut self, phi: &[T; PARAM_DIM], reward: T) {
        self.xtx.add_outer(phi, T::one());
        for (acc, &p) in self.xtr.iter_mut().zip(phi) {
            *acc = *acc + p * reward;
        }
        self.n += 1;
    }

    pub fn merge(&mut self, other: &SufficientStats<T>) {
        self.xtx.add_assign(&other.xtx);
        for (a, &b) in self.xtr.iter_mut().zip(&other.xtr) {
            *a = *a + b;
        }
        self.n += other.n;
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Conjugate update of the prior with accumulated data.
///
/// Precision is `ΦᵀΦ/σ² + Σ₀⁻¹`; the mean solves against its Cholesky factor.
/// With no data the prior is returned unchanged.
pub fn posterior_from_stats<T: Real>(stats: &SufficientStats<T>, prior: &PriorSpec<T>) -> Result<PosteriorState<T>> {
    if stats.is_empty() {
        return Ok(PosteriorState::from_prior(prior));
    }
    if !stats.xtx.is_finite() || !stats.xtr.iter().all(|x| x.is_finite()) {
        return Err(NumericalError::NonFinite { what: "posterior sufficient statistics" }.into());
    }
    let inv_s2 = T::one() / prior.sigma2;
    let mu0 = prior.mean();
    let var0 = prior.variance();
    let mut precision = stats.xtx.scaled(inv_s2);
    let mut rhs = vec![T::zero(); PARAM_DIM];
    for i in 0..PARAM_DIM {
        precision[(i, i)] = precision[(i, i)] + T::one() / var0[i];
        rhs[i] = stats.xtr[i] * inv_s2 + mu0[i] / var0[i];
    }
    precision.symmetrize();
    let (chol, _) = Cholesky::factor_with_jitter(&precision, &JITTER_LADDER)?;
    let mean = chol.solve(&rhs);
    let cov = chol.inverse();
    let post = PosteriorState { mean, cov };
    if !post.is_finite() {
        return Err(NumericalError::NonFinite { what: "posterior" }.into());
    }
    Ok(post)
}

/// Posterior given explicit `(φ, reward)` rows.
pub fn posterior_update<'a, T: Real>(
    rows: impl IntoIterator<Item = (&'a [T; PARAM_DIM], T)>,
    prior: &PriorSpec<T>,
) -> Result<PosteriorState<T>> {
    let mut stats = SufficientStats::new();
    for (phi, r) in rows {
        stats.push(phi, r);
    }
    posterior_from_stats(&stats, prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::AlgState;
    use crate::policy::joint_features;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, seed: u64) -> Vec<([f64; PARAM_DIM], f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|t| {
                let s = AlgState {
                    time_of_day: (t % 2) as f64,
                    bbar_norm: rng.random_range(-1.0..1.0),
                    abar_norm: rng.random_range(-1.0..1.0),
                    prior_day_app: rng.random_range(0..2) as f64,
                };
                let pi = rng.random_range(0.2..0.8);
                let a = rng.random_bool(pi) as u8;
                let phi = joint_features(&s, a, pi);
                let r = 50.0 + 20.0 * s.bbar_norm + a as f64 * 10.0 + rng.random_range(-30.0..30.0);
                (phi, r)
            })
            .collect()
    }

    /// Independent oracle via nalgebra's dense inverse.
    fn oracle(rows: &[([f64; PARAM_DIM], f64)], prior: &PriorSpec<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let x = DMatrix::from_fn(rows.len(), PARAM_DIM, |i, j| rows[i].0[j]);
        let r = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        let l0 = DMatrix::from_diagonal(&DVector::from_iterator(PARAM_DIM, prior.variance().iter().map(|v| 1.0 / v)));
        let m0 = DVector::from_row_slice(&prior.mean());
        let cov = (x.transpose() * &x / prior.sigma2 + &l0).try_inverse().unwrap();
        let mean = &cov * (x.transpose() * r / prior.sigma2 + l0 * m0);
        (mean, cov)
    }

    #[test]
    fn empty_data_returns_prior_exactly() {
        let prior = PriorSpec::<f64>::canonical();
        let post = posterior_update(std::iter::empty(), &prior).unwrap();
        assert_eq!(post, PosteriorState::from_prior(&prior));
    }

    #[test]
    fn matches_dense_oracle() {
        let prior = PriorSpec::canonical();
        let rows = random_rows(300, 7);
        let post = posterior_update(rows.iter().map(|(p, r)| (p, *r)), &prior).unwrap();
        let (m, c) = oracle(&rows, &prior);
        for i in 0..PARAM_DIM {
            assert!((post.mean[i] - m[i]).abs() < 1e-8 * (1.0 + m[i].abs()));
            for j in 0..PARAM_DIM {
                assert!((post.cov[(i, j)] - c[(i, j)]).abs() < 1e-8 * (1.0 + c[(i, j)].abs()));
            }
        }
        assert!(post.cov.max_asymmetry() < 1e-10);
    }

    #[test]
    fn single_intercept_observation_matches_scalar_update() {
        // Only the α₀ intercept is active (A = 0, π = 0), so every other
        // coordinate keeps its prior and the intercept follows the scalar
        // Normal-Normal update.
        let prior = PriorSpec::<f64>::canonical();
        let mut phi = [0.0; PARAM_DIM];
        phi[4] = 1.0;
        let r = 140.0;
        let post = posterior_update([(&phi, r)], &prior).unwrap();
        let (m0, v0, s2) = (73.0, 83.0f64 * 83.0, 3878.0);
        let v = 1.0 / (1.0 / v0 + 1.0 / s2);
        let m = v * (m0 / v0 + r / s2);
        assert!((post.mean[4] - m).abs() < 1e-10);
        assert!((post.cov[(4, 4)] - v).abs() < 1e-10);
        assert!((post.mean[13] - 53.0).abs() < 1e-10);
        assert!((post.cov[(13, 13)] - 56.0 * 56.0).abs() < 1e-9);
    }

    #[test]
    fn approaches_least_squares_with_small_noise() {
        let mut prior = PriorSpec::canonical();
        prior.sigma2 = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth: Vec<f64> = (0..PARAM_DIM).map(|_| rng.random_range(-5.0..5.0)).collect();
        let rows: Vec<_> = (0..500)
            .map(|_| {
                let phi: [f64; PARAM_DIM] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let r = phi.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-0.01..0.01);
                (phi, r)
            })
            .collect();
        let post = posterior_update(rows.iter().map(|(p, r)| (p, *r)), &prior).unwrap();
        let x = DMatrix::from_fn(rows.len(), PARAM_DIM, |i, j| rows[i].0[j]);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        let ls = x.svd(true, true).solve(&y, 1e-12).unwrap();
        for i in 0..PARAM_DIM {
            assert!((post.mean[i] - ls[i]).abs() < 1e-3, "coef {i}");
        }
    }

    #[test]
    fn single_precision_update() {
        let prior = PriorSpec::<f32>::canonical();
        let s = AlgState { time_of_day: 1.0f32, bbar_norm: 0.3, abar_norm: -0.2, prior_day_app: 1.0 };
        let rows: Vec<_> = (0..50).map(|i| (joint_features(&s, (i % 2) as u8, 0.5), 60.0f32)).collect();
        let post = posterior_update(rows.iter().map(|(p, r)| (p, *r)), &prior).unwrap();
        assert!(post.is_finite());
        assert!(post.cov.diag().iter().all(|v| *v > 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn order_invariant(seed in 0u64..1000, n in 1usize..60) {
            let prior = PriorSpec::canonical();
            let rows = random_rows(n, seed);
            let a = posterior_update(rows.iter().map(|(p, r)| (p, *r)), &prior).unwrap();
            let b = posterior_update(rows.iter().rev().map(|(p, r)| (p, *r)), &prior).unwrap();
            for i in 0..PARAM_DIM {
                prop_assert!((a.mean[i] - b.mean[i]).abs() < 1e-10 * (1.0 + a.mean[i].abs()));
                for j in 0..PARAM_DIM {
                    prop_assert!((a.cov[(i, j)] - b.cov[(i, j)]).abs() < 1e-10 * (1.0 + a.cov[(i, j)].abs()));
                }
            }
        }

        #[test]
        fn more_data_contracts(seed in 0u64..1000, n in 1usize..80) {
            let prior = PriorSpec::canonical();
            let rows = random_rows(2 * n, seed);
            let half = posterior_update(rows[..n].iter().map(|(p, r)| (p, *r)), &prior).unwrap();
            let full = posterior_update(rows.iter().map(|(p, r)| (p, *r)), &prior).unwrap();
            for i in 0..PARAM_DIM {
                prop_assert!(full.cov[(i, i)] <= half.cov[(i, i)] * (1.0 + 1e-12) + 1e-12);
            }
        }

        #[test]
        fn merged_stats_equal_concatenation(seed in 0u64..1000, n in 1usize..40, m in 1usize..40) {
            let prior = PriorSpec::canonical();
            let rows = random_rows(n + m, seed);
            let mut a = SufficientStats::new();
            let mut b = SufficientStats::new();
            for (i, (p, r)) in rows.iter().enumerate() {
                if i < n { a.push(p, *r) } else { b.push(p, *r) }
            }
            a.merge(&b);
            let merged = posterior_from_stats(&a, &prior).unwrap();
            let joint = posterior_update(rows.iter().map(|(p, r)| (p, *r)), &prior).unwrap();
            for i in 0..PARAM_DIM {
                prop_assert!((merged.mean[i] - joint.mean[i]).abs() < 1e-9 * (1.0 + joint.mean[i].abs()));
            }
        }
    }
}
