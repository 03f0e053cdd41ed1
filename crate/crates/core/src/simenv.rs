//! Simulated participants: outcome generation under prompts, habituation to
//! prompting, and app-opening behavior that decides whether the algorithm
//! sees fresh or stale state.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::envmodel::{sigmoid, BaselineModel, EnvContext, ParticipantEffects, Stationarity};
use crate::error::Result;
use crate::features::{build_fresh_state, build_stale_state, time_of_day, AlgState, DecisionRecord, ExpAverageParams, ParticipantLog, MAX_OSCB};
use crate::reward::{cost, surrogate_reward, CostParams};

/// Decision points between habituation level changes.
pub const RESPONSIVITY_PERIOD: usize = 14;
/// Daily probability of opening the app.
pub const DEFAULT_P_APP: f64 = 0.7;

/// A fitted baseline model paired with one participant's treatment effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantEnvModel {
    pub id: String,
    pub stationarity: Stationarity,
    pub baseline: BaselineModel,
    pub effects: ParticipantEffects,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    /// Draw before truncation, kept for diagnostics and environment features.
    pub q_raw: f64,
    /// What the algorithm observes, in `[0, 180]`.
    pub q: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws the outcome at one decision point.
///
/// `scale` multiplies the participant's effects (habituation). Effects are
/// clamped at zero so a prompt never lowers brushing; the zero-gate effect
/// enters with a minus sign because it lowers the chance of not brushing.
pub fn generate_outcome<R: Rng + ?Sized>(
    model: &ParticipantEnvModel,
    g: &[f64],
    h: &[f64],
    action: u8,
    scale: f64,
    rng: &mut R,
) -> Outcome {
    let a = action as f64;
    let eff_b = a * (scale * dot(&model.effects.delta_b, h)).max(0.0);
    let eff_n = a * (scale * dot(&model.effects.delta_n, h)).max(0.0);
    let p_nonzero = 1.0 - sigmoid(dot(g, model.baseline.w_b()) - eff_b);
    let u: f64 = rng.random();
    let q_raw = match &model.baseline {
        BaselineModel::Zip { w_p, .. } => {
            let lam = (dot(g, w_p) + eff_n).clamp(-30.0, 20.0).exp();
            let y: f64 = Poisson::new(lam).expect("finite positive rate").sample(rng);
            if u < p_nonzero { y } else { 0.0 }
        }
        BaselineModel::Hurdle { w_mu, sigma_u2, .. } => {
            let z: f64 = rng.sample(StandardNormal);
            let y = dot(g, w_mu) + eff_n + sigma_u2.sqrt() * z;
            if u < p_nonzero { y * y } else { 0.0 }
        }
    };
    Outcome { q_raw, q: q_raw.min(MAX_OSCB) }
}

/// Habituation state. Effects are scaled by `E^level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponsivityState {
    pub e: f64,
    pub level: u32,
    pub next_check: Option<usize>,
    pub last_change: Option<usize>,
}

impl ResponsivityState {
    pub fn new(e: f64) -> Self {
        Self { e, level: 0, next_check: None, last_change: None }
    }

    pub fn scale(&self) -> f64 {
        // powi(0) is 1 even when E = 0.
        self.e.powi(self.level as i32)
    }

    /// Applies the dosage criterion observed at `t`; any change takes effect from `t + 1`.
    pub fn update(&mut self, criterion: bool, t: usize) {
        match self.next_check {
            Some(check) if t == check => {
                if criterion {
                    self.level += 1;
                    self.next_check = Some(t + RESPONSIVITY_PERIOD);
                } else {
                    self.level = 0;
                    self.next_check = None;
                }
                self.last_change = Some(t);
            }
            Some(_) => {}
            None => {
                let rested = self.last_change.is_none_or(|c| t >= c + RESPONSIVITY_PERIOD);
                if criterion && rested {
                    self.level = 1;
                    self.next_check = Some(t + RESPONSIVITY_PERIOD);
                    self.last_change = Some(t);
                }
            }
        }
    }
}

/// App engagement of one participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppState {
    pub p_app: f64,
    pub last_open_t: usize,
    pub prior_day_open: bool,
    pub current_day_open: bool,
}

impl AppState {
    pub fn new(p_app: f64) -> Self {
        Self { p_app, last_open_t: 0, prior_day_open: false, current_day_open: false }
    }

    /// Morning draw for the day starting at decision point `t`. Onboarding
    /// happens in the app, so day 1 is always an open day.
    pub fn morning(&mut self, t: usize, u: f64) {
        debug_assert_eq!(time_of_day(t), 0);
        self.current_day_open = t == 1 || u < self.p_app;
        if self.current_day_open {
            self.last_open_t = t;
        }
    }

    pub fn end_of_day(&mut self) {
        self.prior_day_open = self.current_day_open;
    }
}

/// Uniform draws and the outcome generator for one participant step.
pub struct StepDraws<'a, R: Rng + ?Sized> {
    pub app: f64,
    pub action: f64,
    pub outcome: &'a mut R,
}

/// One simulated decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub t: usize,
    /// State the action was selected with.
    pub state: AlgState<f64>,
    /// State built from the full closed history; what updates consume.
    pub realized_state: AlgState<f64>,
    pub stale: bool,
    pub app_open: bool,
    pub pi: f64,
    pub action: u8,
    pub q_raw: f64,
    pub q: f64,
    pub reward: f64,
    pub shrink_level: u32,
}

/// Mutable per-participant simulation state.
#[derive(Debug, Clone)]
pub struct SimParticipant {
    pub model: ParticipantEnvModel,
    pub log: ParticipantLog<f64>,
    pub q_raw: Vec<f64>,
    pub responsivity: ResponsivityState,
    pub app: AppState,
    last_fresh_bbar_norm: f64,
}

impl SimParticipant {
    pub fn new(model: ParticipantEnvModel, e: f64, p_app: f64) -> Self {
        Self {
            model,
            log: ParticipantLog::new(),
            q_raw: Vec::new(),
            responsivity: ResponsivityState::new(e),
            app: AppState::new(p_app),
            last_fresh_bbar_norm: -1.0,
        }
    }

    /// Next decision point (1-based).
    pub fn next_t(&self) -> usize {
        self.log.len() + 1
    }

    /// Realized state at the next decision point, after the nightly window close.
    fn prepare(&mut self, t: usize, u_app: f64) -> (AlgState<f64>, AlgState<f64>, bool) {
        if time_of_day(t) == 0 {
            // Evening windows end after the nightly processing, so the
            // previous evening is still open at this morning's decision.
            self.log.close_through(t.saturating_sub(2));
            self.app.morning(t, u_app);
        }
        let fresh = build_fresh_state(&self.log, t);
        if self.app.current_day_open {
            self.last_fresh_bbar_norm = fresh.bbar_norm;
            (fresh, fresh, false)
        } else {
            let stale = build_stale_state(self.last_fresh_bbar_norm, &self.log.closed_actions(t), t);
            (stale, fresh, true)
        }
    }

    /// Runs one decision point with `policy` mapping the consumed state to π.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        policy: impl FnOnce(&AlgState<f64>) -> Result<f64>,
        cost_params: &CostParams<f64>,
        draws: StepDraws<'_, R>,
    ) -> Result<DecisionRow> {
        let u_action = draws.action;
        self.step_with(
            |view| {
                let pi = policy(&view.state)?;
                Ok(Decision { pi, action: (u_action < pi) as u8, state: view.state })
            },
            cost_params,
            draws.app,
            draws.outcome,
        )
    }

    /// Runs one decision point with an arbitrary decision rule, such as
    /// delivery from a bank of precomputed schedules.
    pub fn step_with<R: Rng + ?Sized>(
        &mut self,
        decide: impl FnOnce(&StepView<'_>) -> Result<Decision>,
        cost_params: &CostParams<f64>,
        u_app: f64,
        outcome_rng: &mut R,
    ) -> Result<DecisionRow> {
        let t = self.next_t();
        let (state, realized, stale) = self.prepare(t, u_app);
        let view = StepView { t, state, realized, stale, app_open: self.app.current_day_open, log: &self.log };
        let decision = decide(&view)?;
        let action = decision.action;
        let ctx = EnvContext::at(t, &self.q_raw);
        let stat = self.model.stationarity;
        let level = self.responsivity.level;
        let out = generate_outcome(&self.model, &ctx.g(stat), &ctx.h(stat), action, self.responsivity.scale(), outcome_rng);
        let (bbar, abar) = self.log.raw_averages(t, &ExpAverageParams::default());
        let c = cost(bbar, abar, action, cost_params);
        let reward = surrogate_reward(out.q, c);
        self.log.push(DecisionRecord { oscb: out.q, action, app_opened: self.app.current_day_open, window_closed: false });
        self.q_raw.push(out.q_raw);
        self.responsivity.update(cost_params.dosage_criterion(bbar, abar), t);
        if time_of_day(t) == 1 {
            self.app.end_of_day();
        }
        Ok(DecisionRow {
            t,
            state: decision.state,
            realized_state: realized,
            stale,
            app_open: self.app.current_day_open,
            pi: decision.pi,
            action,
            q_raw: out.q_raw,
            q: out.q,
            reward,
            shrink_level: level,
        })
    }
}

/// What the decision rule sees at one decision point.
pub struct StepView<'a> {
    pub t: usize,
    /// Fresh on open days, stale otherwise.
    pub state: AlgState<f64>,
    pub realized: AlgState<f64>,
    pub stale: bool,
    pub app_open: bool,
    pub log: &'a ParticipantLog<f64>,
}

/// Executed action, its selection probability, and the state it was chosen with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub pi: f64,
    pub action: u8,
    pub state: AlgState<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zip_model(w_b0: f64, w_p0: f64, delta_n0: f64) -> ParticipantEnvModel {
        let mut w_b = vec![0.0; 5];
        w_b[4] = w_b0;
        let mut w_p = vec![0.0; 5];
        w_p[4] = w_p0;
        let mut effects = ParticipantEffects::zero(Stationarity::Stationary);
        effects.delta_n[3] = delta_n0;
        ParticipantEnvModel {
            id: "p".into(),
            stationarity: Stationarity::Stationary,
            baseline: BaselineModel::Zip { w_b, w_p },
            effects,
        }
    }

    #[test]
    fn zip_intercept_bump_multiplies_mean() {
        let m = zip_model(-40.0, 3.0, 0.2);
        let g = [0.0, 0.0, 0.0, 0.0, 1.0];
        let h = [0.0, 0.0, 0.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| generate_outcome(&m, &g, &h, 1, 1.0, &mut rng).q_raw).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let want = (3.0f64 + 0.2).exp();
        assert!((mean - want).abs() < 3.0 * sd / (n as f64).sqrt(), "{mean} vs {want}");
    }

    #[test]
    fn negative_effects_are_clamped() {
        let mut m = zip_model(0.3, 3.0, -1.0);
        m.effects.delta_b[3] = -2.0;
        let g = [0.0, 0.0, 0.0, 0.0, 1.0];
        let h = [0.0, 0.0, 0.0, 1.0];
        let a: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(4);
            (0..1000).map(|_| generate_outcome(&m, &g, &h, 0, 1.0, &mut r).q_raw).collect()
        };
        let b: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(4);
            (0..1000).map(|_| generate_outcome(&m, &g, &h, 1, 1.0, &mut r).q_raw).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn baseline_mean_matches_simulation() {
        for baseline in [
            BaselineModel::Zip { w_b: vec![0.1, -0.5], w_p: vec![0.3, 4.0] },
            BaselineModel::Hurdle { w_b: vec![0.1, -0.5], w_mu: vec![0.5, 9.0], sigma_u2: 6.0 },
        ] {
            let m = ParticipantEnvModel {
                id: "x".into(),
                stationarity: Stationarity::Stationary,
                baseline: baseline.clone(),
                effects: ParticipantEffects::zero(Stationarity::Stationary),
            };
            let g = [0.7, 1.0];
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let n = 100_000;
            let d: Vec<f64> = (0..n).map(|_| generate_outcome(&m, &g, &[0.0; 4], 0, 1.0, &mut rng).q_raw).collect();
            let mean = d.iter().sum::<f64>() / n as f64;
            let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            let want = baseline.mean(&g);
            assert!((mean - want).abs() < 3.0 * sd / (n as f64).sqrt(), "{mean} vs {want}");
        }
    }

    #[test]
    fn responsivity_schedule() {
        let mut r = ResponsivityState::new(0.5);
        r.update(false, 3);
        assert_eq!(r.level, 0);
        r.update(true, 10);
        assert_eq!((r.level, r.next_check), (1, Some(24)));
        for t in 11..24 {
            r.update(true, t);
            assert_eq!(r.level, 1);
        }
        r.update(true, 24);
        assert_eq!(r.level, 2);
        assert_eq!(r.scale(), 0.25);
        r.update(false, 38);
        assert_eq!((r.level, r.next_check), (0, None));
        r.update(true, 40);
        assert_eq!(r.level, 0, "re-trigger waits a full period after recovery");
        r.update(true, 52);
        assert_eq!(r.level, 1);
        assert_eq!(ResponsivityState::new(0.0).scale(), 1.0);
    }

    #[test]
    fn app_open_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut app = AppState::new(0.7);
        let n = 100_000;
        let mut opens = 0;
        for d in 2..(n + 2) {
            app.morning(2 * d - 1, rng.random());
            opens += app.current_day_open as usize;
        }
        let f = opens as f64 / n as f64;
        assert!((f - 0.7).abs() < 0.005, "{f}");
    }

    fn run(p_app: f64, seed: u64) -> Vec<DecisionRow> {
        let mut sp = SimParticipant::new(zip_model(-0.5, 4.0, 0.0), 0.0, p_app);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out_rng = ChaCha8Rng::seed_from_u64(seed + 1);
        (0..140)
            .map(|_| {
                let draws = StepDraws { app: rng.random(), action: rng.random(), outcome: &mut out_rng };
                sp.step(|_| Ok(0.5), &CostParams::default(), draws).unwrap()
            })
            .collect()
    }

    #[test]
    fn stale_states_follow_app_opening() {
        let always = run(1.0, 5);
        assert!(always.iter().all(|r| !r.stale && r.state == r.realized_state));
        let never = run(0.0, 5);
        assert!(never[..2].iter().all(|r| !r.stale));
        for r in &never[2..] {
            assert!(r.stale);
            assert_eq!(r.state.prior_day_app, 0.0);
            assert_eq!(r.state.bbar_norm, never[0].state.bbar_norm);
            assert_eq!(r.state.abar_norm, r.realized_state.abar_norm);
        }
        let mixed = run(0.5, 9);
        let mut last_open_bbar = None;
        for r in &mixed {
            if !r.stale {
                last_open_bbar = Some(r.state.bbar_norm);
            } else {
                assert_eq!(Some(r.state.bbar_norm), last_open_bbar);
            }
        }
        assert_eq!(run(0.5, 9), mixed, "bit-reproducible");
        assert!(mixed.iter().all(|r| (0.0..=180.0).contains(&r.q)));
    }
}
