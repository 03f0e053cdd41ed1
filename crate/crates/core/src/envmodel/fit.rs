use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::optim::{bfgs, BfgsOptions, Minimum};
use crate::error::{Error, NumericalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelClass {
    Zip,
    Hurdle,
}

/// Fitted outcome model under no intervention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaselineModel {
    /// Zero gate `sigmoid(gᵀw_b)` times Poisson counts with log-rate `gᵀw_p`.
    Zip { w_b: Vec<f64>, w_p: Vec<f64> },
    /// Zero gate times the square of `N(gᵀw_mu, sigma_u2)`.
    Hurdle { w_b: Vec<f64>, w_mu: Vec<f64>, sigma_u2: f64 },
}

impl BaselineModel {
    pub fn class(&self) -> ModelClass {
        match self {
            Self::Zip { .. } => ModelClass::Zip,
            Self::Hurdle { .. } => ModelClass::Hurdle,
        }
    }

    pub fn w_b(&self) -> &[f64] {
        match self {
            Self::Zip { w_b, .. } | Self::Hurdle { w_b, .. } => w_b,
        }
    }

    /// Weights of the non-zero component (`w_p` or `w_mu`).
    pub fn w_n(&self) -> &[f64] {
        match self {
            Self::Zip { w_p, .. } => w_p,
            Self::Hurdle { w_mu, .. } => w_mu,
        }
    }

    pub fn dim(&self) -> usize {
        self.w_b().len()
    }

    /// `E[Q | S]` of the fitted model.
    pub fn mean(&self, g: &[f64]) -> f64 {
        let p_nonzero = 1.0 - sigmoid(dot(g, self.w_b()));
        match self {
            Self::Zip { w_p, .. } => p_nonzero * dot(g, w_p).exp(),
            Self::Hurdle { w_mu, sigma_u2, .. } => {
                let m = dot(g, w_mu);
                p_nonzero * (sigma_u2 + m * m)
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub restarts: usize,
    pub bfgs: BfgsOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 10, bfgs: BfgsOptions::default() }
    }
}

/// Runs the optimizer from standard-normal starts and keeps the converged
/// run with the lowest negative log posterior.
fn best_of_restarts<R: Rng + ?Sized>(
    dim: usize,
    opts: &FitOptions,
    rng: &mut R,
    mut objective: impl FnMut(&[f64], &mut [f64]) -> f64,
) -> Result<Minimum> {
    let mut best: Option<Minimum> = None;
    for _ in 0..opts.restarts {
        let x0: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let m = bfgs(&mut objective, &x0, opts.bfgs);
        if m.converged && best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    best.ok_or_else(|| NumericalError::OptimizerFailed { restarts: opts.restarts }.into())
}

/// Negative log posterior of the zero-inflated Poisson model and its gradient
/// with respect to `[w_b, w_p]`, under independent standard-normal priors.
pub fn zip_objective(xs: &[Vec<f64>], ys: &[f64], w: &[f64], grad: &mut [f64]) -> f64 {
    let d = w.len() / 2;
    let (wb, wp) = w.split_at(d);
    grad.iter_mut().zip(w).for_each(|(g, x)| *g = *x);
    let mut nlp = 0.5 * dot(w, w);
    for (x, &y) in xs.iter().zip(ys) {
        let u = dot(x, wb);
        let v = dot(x, wp);
        let lam = v.exp();
        let pi0 = sigmoid(u);
        let (ll, du, dv) = if y == 0.0 {
            let log_pi0 = -softplus(-u);
            let log_p1 = -softplus(u);
            let ll = log_sum_exp(log_pi0, log_p1 - lam);
            let a = (log_pi0 - ll).exp();
            let bb = (log_p1 - lam - ll).exp();
            ((ll), (1.0 - pi0) * a - pi0 * bb, -lam * bb)
        } else {
            (-softplus(u) + y * v - lam - ln_gamma(y + 1.0), -pi0, y - lam)
        };
        nlp -= ll;
        for k in 0..d {
            grad[k] -= du * x[k];
            grad[d + k] -= dv * x[k];
        }
    }
    nlp
}

/// Negative log posterior of the hurdle zero gate: `P(Q > 0) = 1 - sigmoid(gᵀw_b)`.
pub fn gate_objective(xs: &[Vec<f64>], nonzero: &[bool], w: &[f64], grad: &mut [f64]) -> f64 {
    grad.iter_mut().zip(w).for_each(|(g, x)| *g = *x);
    let mut nlp = 0.5 * dot(w, w);
    for (x, &z) in xs.iter().zip(nonzero) {
        let u = dot(x, w);
        let ll = if z { -softplus(u) } else { -softplus(-u) };
        let du = if z { 0.0 } else { 1.0 } - sigmoid(u);
        nlp -= ll;
        for k in 0..w.len() {
            grad[k] -= du * x[k];
        }
    }
    nlp
}

/// Negative log posterior of `√Q ~ N(gᵀw_mu, e^s)` over non-zero sessions,
/// parameterized as `[w_mu, s]` with a standard-normal prior on `w_mu` only.
pub fn normal_objective(xs: &[&Vec<f64>], ys: &[f64], w: &[f64], grad: &mut [f64]) -> f64 {
    let d = w.len() - 1;
    let (wm, s) = (&w[..d], w[d]);
    let inv = (-s).exp();
    grad[..d].copy_from_slice(wm);
    grad[d] = 0.0;
    let mut nlp = 0.5 * dot(wm, wm);
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    for (x, &y) in xs.iter().zip(ys) {
        let r = y - dot(x, wm);
        nlp += half_ln_2pi + 0.5 * s + 0.5 * r * r * inv;
        for k in 0..d {
            grad[k] -= r * inv * x[k];
        }
        grad[d] += 0.5 - 0.5 * r * r * inv;
    }
    nlp
}

pub fn fit_zip<R: Rng + ?Sized>(xs: &[Vec<f64>], ys: &[f64], opts: &FitOptions, rng: &mut R) -> Result<BaselineModel> {
    check_data(xs, ys)?;
    let d = xs[0].len();
    let m = best_of_restarts(2 * d, opts, rng, |w, g| zip_objective(xs, ys, w, g))?;
    Ok(BaselineModel::Zip { w_b: m.x[..d].to_vec(), w_p: m.x[d..].to_vec() })
}

pub fn fit_hurdle<R: Rng + ?Sized>(xs: &[Vec<f64>], ys: &[f64], opts: &FitOptions, rng: &mut R) -> Result<BaselineModel> {
    check_data(xs, ys)?;
    let d = xs[0].len();
    let nonzero: Vec<bool> = ys.iter().map(|&q| q > 0.0).collect();
    let (nz_x, nz_y): (Vec<&Vec<f64>>, Vec<f64>) =
        xs.iter().zip(ys).filter(|(_, &q)| q > 0.0).map(|(x, &q)| (x, q.sqrt())).unzip();
    if nz_y.len() < 2 {
        return Err(Error::Data(format!(
            "hurdle fit needs at least two non-zero sessions, found {}",
            nz_y.len()
        )));
    }
    let gate = best_of_restarts(d, opts, rng, |w, g| gate_objective(xs, &nonzero, w, g))?;
    let normal = best_of_restarts(d + 1, opts, rng, |w, g| normal_objective(&nz_x, &nz_y, w, g))?;
    Ok(BaselineModel::Hurdle { w_b: gate.x, w_mu: normal.x[..d].to_vec(), sigma_u2: normal.x[d].exp() })
}

pub fn fit_baseline<R: Rng + ?Sized>(
    xs: &[Vec<f64>],
    ys: &[f64],
    class: ModelClass,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<BaselineModel> {
    match class {
        ModelClass::Zip => fit_zip(xs, ys, opts, rng),
        ModelClass::Hurdle => fit_hurdle(xs, ys, opts, rng),
    }
}

fn check_data(xs: &[Vec<f64>], ys: &[f64]) -> Result<()> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Data(format!("{} feature rows for {} outcomes", xs.len(), ys.len())));
    }
    let d = xs[0].len();
    if xs.iter().any(|x| x.len() != d || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data("feature rows must be finite and of equal length".into()));
    }
    if ys.iter().any(|y| !y.is_finite() || *y < 0.0) {
        return Err(Error::Data("outcomes must be finite and non-negative".into()));
    }
    Ok(())
}

/// Root of the summed squared error of a model's mean over a participant's data.
pub fn fit_loss(model: &BaselineModel, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(x, y)| (y - model.mean(x)).powi(2)).sum::<f64>().sqrt()
}

/// Picks the class with the smaller loss; ties go to the zero-inflated Poisson.
pub fn select_model(xs: &[Vec<f64>], ys: &[f64], a: &BaselineModel, b: &BaselineModel) -> ModelClass {
    let (zip, hurdle) = match (a.class(), b.class()) {
        (ModelClass::Zip, _) => (a, b),
        _ => (b, a),
    };
    if fit_loss(hurdle, xs, ys) < fit_loss(zip, xs, ys) {
        ModelClass::Hurdle
    } else {
        ModelClass::Zip
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Bernoulli, Distribution, Normal, Poisson};

    fn design(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| vec![rng.random_range(0..2) as f64, rng.sample::<f64, _>(StandardNormal) * 0.5, rng.random(), 1.0])
            .collect()
    }

    fn numeric_grad(f: &dyn Fn(&[f64]) -> f64, w: &[f64]) -> Vec<f64> {
        (0..w.len())
            .map(|i| {
                let mut a = w.to_vec();
                let mut b = w.to_vec();
                a[i] += 1e-6;
                b[i] -= 1e-6;
                (f(&a) - f(&b)) / 2e-6
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs = design(40, &mut rng);
        let ys: Vec<f64> = (0..40).map(|i| if i % 3 == 0 { 0.0 } else { (i * 7 % 50) as f64 }).collect();
        let w: Vec<f64> = (0..8).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5).collect();
        let mut g = vec![0.0; 8];
        zip_objective(&xs, &ys, &w, &mut g);
        let num = numeric_grad(&|w| zip_objective(&xs, &ys, w, &mut [0.0; 8]), &w);
        for i in 0..8 {
            assert!((g[i] - num[i]).abs() < 1e-4 * (1.0 + num[i].abs()), "zip {i}: {} vs {}", g[i], num[i]);
        }
        let nz: Vec<bool> = ys.iter().map(|y| *y > 0.0).collect();
        let mut g = vec![0.0; 4];
        gate_objective(&xs, &nz, &w[..4], &mut g);
        let num = numeric_grad(&|w| gate_objective(&xs, &nz, w, &mut [0.0; 4]), &w[..4]);
        for i in 0..4 {
            assert!((g[i] - num[i]).abs() < 1e-5 * (1.0 + num[i].abs()));
        }
        let refs: Vec<&Vec<f64>> = xs.iter().collect();
        let sy: Vec<f64> = ys.iter().map(|y| y.sqrt()).collect();
        let mut g = vec![0.0; 5];
        normal_objective(&refs, &sy, &w[..5], &mut g);
        let num = numeric_grad(&|w| normal_objective(&refs, &sy, w, &mut [0.0; 5]), &w[..5]);
        for i in 0..5 {
            assert!((g[i] - num[i]).abs() < 1e-4 * (1.0 + num[i].abs()));
        }
    }

    #[test]
    fn model_means() {
        let zip = BaselineModel::Zip { w_b: vec![0.0; 3], w_p: vec![0.0; 3] };
        assert_eq!(zip.mean(&[1.0, 2.0, 1.0]), 0.5);
        let h = BaselineModel::Hurdle { w_b: vec![0.0; 3], w_mu: vec![0.0; 3], sigma_u2: 1.0 };
        assert_eq!(h.mean(&[1.0, 2.0, 1.0]), 0.5);
    }

    #[test]
    fn tie_goes_to_zip() {
        let zip = BaselineModel::Zip { w_b: vec![0.0], w_p: vec![0.0] };
        let h = BaselineModel::Hurdle { w_b: vec![0.0], w_mu: vec![0.0], sigma_u2: 1.0 };
        let xs = vec![vec![1.0]; 3];
        let ys = vec![0.0, 1.0, 2.0];
        assert_eq!(select_model(&xs, &ys, &zip, &h), ModelClass::Zip);
        assert_eq!(select_model(&xs, &ys, &h, &zip), ModelClass::Zip);
    }

    #[test]
    fn all_zero_outcomes_push_gate_closed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs = design(140, &mut rng);
        let ys = vec![0.0; 140];
        let m = fit_zip(&xs, &ys, &FitOptions::default(), &mut rng).unwrap();
        // Zeros come from the gate or from a vanishing Poisson rate.
        let p0: f64 = xs
            .iter()
            .map(|x| {
                let gate = sigmoid(dot(x, m.w_b()));
                gate + (1.0 - gate) * (-dot(x, m.w_n()).exp()).exp()
            })
            .sum::<f64>()
            / 140.0;
        assert!(p0 > 0.95, "{p0}");
        assert!(xs.iter().all(|x| sigmoid(dot(x, m.w_b())) > 0.5));
        // The prior keeps the weights finite.
        assert!(m.w_b().iter().all(|w| w.abs() < 20.0));
        assert!(fit_hurdle(&xs, &ys, &FitOptions::default(), &mut rng).is_err());
    }

    #[test]
    fn hurdle_variance_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let xs = vec![vec![1.0]; 1000];
        let normal = Normal::new(5.0, 2.0).unwrap();
        let ys: Vec<f64> = (0..1000).map(|_| Distribution::<f64>::sample(&normal, &mut rng).abs().powi(2)).collect();
        let m = fit_hurdle(&xs, &ys, &FitOptions::default(), &mut rng).unwrap();
        let BaselineModel::Hurdle { sigma_u2, w_mu, .. } = m else { unreachable!() };
        assert!((sigma_u2 - 4.0).abs() < 0.6, "{sigma_u2}");
        assert!((w_mu[0] - 5.0).abs() < 0.3);
    }

    #[test]
    fn zip_recovery_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = design(3000, &mut rng);
        let wb = [0.3, -0.4, 0.5, -0.5];
        let wp = [0.2, 0.1, -0.3, 4.0];
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| {
                let z = Bernoulli::new(1.0 - sigmoid(dot(x, &wb))).unwrap().sample(&mut rng);
                if z { Poisson::new(dot(x, &wp).exp()).unwrap().sample(&mut rng) } else { 0.0 }
            })
            .collect();
        let m = fit_zip(&xs, &ys, &FitOptions::default(), &mut rng).unwrap();
        for (a, b) in m.w_b().iter().zip(&wb) {
            assert!((a - b).abs() < 0.2, "{a} vs {b}");
        }
        for (a, b) in m.w_n().iter().zip(&wp) {
            assert!((a - b).abs() < 0.05, "{a} vs {b}");
        }
    }
}
