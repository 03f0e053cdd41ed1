use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::fit::BaselineModel;
use super::state::Stationarity;

/// Population distribution of treatment effects for one model class.
///
/// Entries follow the order of `h(S)`: the treatment features, then the
/// intercept. Means are non-negative; signs are applied after sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeSpec {
    pub zeta: f64,
    pub stationarity: Stationarity,
    pub mean_b: Vec<f64>,
    pub var_b: Vec<f64>,
    pub mean_n: Vec<f64>,
    pub var_n: Vec<f64>,
}

/// One participant's signed effects on the zero gate and the non-zero component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantEffects {
    pub delta_b: Vec<f64>,
    pub delta_n: Vec<f64>,
}

impl ParticipantEffects {
    pub fn zero(stat: Stationarity) -> Self {
        Self { delta_b: vec![0.0; stat.treatment_dim()], delta_n: vec![0.0; stat.treatment_dim()] }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var_pop(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

/// Means and variances of `ζ|w|` over participants at the treatment feature
/// positions, with the intercept entry set to the average of the others.
fn component(weights: &[&[f64]], stat: Stationarity, zeta: f64) -> (Vec<f64>, Vec<f64>) {
    let mut means = Vec::with_capacity(stat.treatment_dim());
    let mut vars = Vec::with_capacity(stat.treatment_dim());
    for &i in stat.treatment_indices() {
        let eta: Vec<f64> = weights.iter().map(|w| zeta * w[i].abs()).collect();
        means.push(mean(&eta));
        vars.push(var_pop(&eta));
    }
    let (m, v) = (mean(&means), mean(&vars));
    means.push(m);
    vars.push(v);
    (means, vars)
}

/// Population effect sizes from a set of baseline fits of the same class.
pub fn impute_population_effects(fits: &[&BaselineModel], stat: Stationarity, zeta: f64) -> EffectSizeSpec {
    assert!(!fits.is_empty(), "effect imputation needs at least one fit");
    let wb: Vec<&[f64]> = fits.iter().map(|f| f.w_b()).collect();
    let wn: Vec<&[f64]> = fits.iter().map(|f| f.w_n()).collect();
    let (mean_b, var_b) = component(&wb, stat, zeta);
    let (mean_n, var_n) = component(&wn, stat, zeta);
    EffectSizeSpec { zeta, stationarity: stat, mean_b, var_b, mean_n, var_n }
}

fn draw_signed<R: Rng + ?Sized>(mean: &[f64], var: &[f64], signs: &[f64], rng: &mut R) -> Vec<f64> {
    mean.iter()
        .zip(var)
        .zip(signs)
        .map(|((&m, &v), &s)| {
            let z: f64 = rng.sample(StandardNormal);
            s * (m + v.sqrt() * z).abs()
        })
        .collect()
}

/// Draws `|N(Δ, Σ)|` per component and applies the feature sign map.
pub fn sample_participant_effects<R: Rng + ?Sized>(spec: &EffectSizeSpec, rng: &mut R) -> ParticipantEffects {
    let signs = spec.stationarity.treatment_signs();
    let delta_b = draw_signed(&spec.mean_b, &spec.var_b, signs, rng);
    let delta_n = draw_signed(&spec.mean_n, &spec.var_n, signs, rng);
    ParticipantEffects { delta_b, delta_n }
}
