//! One simulated study: staggered recruitment, the prior period, posterior
//! updates at the configured cadence and per-participant simulation.

use serde::{Deserialize, Serialize};

use super::config::{Cadence, Candidate, EnvVariant, Pooling, TrialSettings};
use super::monitor::{monitor, Alarm, MonitorThresholds};
use crate::envmodel::{EffectSpecs, EnvBundle, STUDY_DAYS};
use crate::error::{Error, Result};
use crate::features::{time_of_day, AlgState};
use crate::policy::{joint_features, posterior_from_stats, AdvantagePosterior, PosteriorState, PriorSpec, SmoothingParams, SufficientStats};
use crate::rng::{derive_seed, purpose, stream, uniform};
use crate::scheduler::{build_schedule, Provenance, ScheduleBank, ScheduleInputs};
use crate::simenv::{Decision, ParticipantEnvModel, SimParticipant, StepView};

/// Where the state an action was selected with came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateSource {
    Fresh,
    Stale,
    Modified,
    Fixed,
}

impl From<Provenance> for StateSource {
    fn from(p: Provenance) -> Self {
        match p {
            Provenance::Fresh => Self::Fresh,
            Provenance::Modified => Self::Modified,
            Provenance::Fixed => Self::Fixed,
        }
    }
}

/// One executed decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub slot: usize,
    pub env_id: String,
    pub entry_day: usize,
    pub day: usize,
    pub t: usize,
    pub time_of_day: u8,
    pub source: StateSource,
    pub bbar_norm: f64,
    pub abar_norm: f64,
    pub prior_day_app: f64,
    pub realized_bbar_norm: f64,
    pub realized_abar_norm: f64,
    pub realized_prior_day_app: f64,
    pub app_open: bool,
    pub pi: f64,
    pub action: u8,
    pub q_raw: f64,
    pub q: f64,
    pub reward: f64,
    pub shrink_level: u32,
}

impl LogRow {
    #[cfg(test)]
    pub(crate) fn for_test(slot: usize, t: usize, action: u8, pi: f64) -> Self {
        Self {
            slot,
            env_id: "x".into(),
            entry_day: 1,
            day: crate::features::day_of(t),
            t,
            time_of_day: time_of_day(t),
            source: StateSource::Fresh,
            bbar_norm: 0.0,
            abar_norm: 0.0,
            prior_day_app: 0.0,
            realized_bbar_norm: 0.0,
            realized_abar_norm: 0.0,
            realized_prior_day_app: 0.0,
            app_open: true,
            pi,
            action,
            q_raw: 0.0,
            q: 0.0,
            reward: 0.0,
            shrink_level: 0,
        }
    }

    pub fn realized_state(&self) -> AlgState<f64> {
        AlgState {
            time_of_day: self.time_of_day as f64,
            bbar_norm: self.realized_bbar_norm,
            abar_norm: self.realized_abar_norm,
            prior_day_app: self.realized_prior_day_app,
        }
    }
}

/// Everything one trial needs besides its seed.
pub struct TrialContext<'a> {
    pub bundle: &'a EnvBundle,
    pub specs: EffectSpecs,
    pub variant: EnvVariant,
    pub candidate: Candidate,
    pub settings: &'a TrialSettings,
    pub prior: &'a PriorSpec<f64>,
    pub thresholds: MonitorThresholds,
}

impl<'a> TrialContext<'a> {
    pub fn new(
        bundle: &'a EnvBundle,
        variant: EnvVariant,
        candidate: Candidate,
        settings: &'a TrialSettings,
        prior: &'a PriorSpec<f64>,
    ) -> Result<Self> {
        if bundle.stationarity != variant.stationarity {
            return Err(Error::Config(format!(
                "variant {variant} needs a {} environment, got {}",
                variant.stationarity, bundle.stationarity
            )));
        }
        if bundle.participants.is_empty() {
            return Err(Error::Data("environment has no participants".into()));
        }
        settings.validate()?;
        prior.validate()?;
        Ok(Self {
            bundle,
            specs: bundle.effect_specs(variant.zeta),
            variant,
            candidate,
            settings,
            prior,
            thresholds: MonitorThresholds::default(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub seed: u64,
    /// Per-participant `Σ_t Q`, in recruitment order.
    pub cumulative: Vec<f64>,
    /// Mean over participants of `Σ_t Q / T`.
    pub average: f64,
    /// 25th percentile over participants of `Σ_t Q / T`.
    pub p25: f64,
    /// Study days on which posteriors were recomputed.
    pub updates: Vec<usize>,
    /// Last study day on which actions came from the prior under full pooling.
    pub prior_period_end: Option<usize>,
    /// Number of separately maintained posteriors.
    pub posteriors: usize,
    pub alarms: Vec<Alarm>,
    pub logs: Option<Vec<LogRow>>,
}

/// Day participant `slot` (0-based) starts.
pub fn entry_day(slot: usize, s: &TrialSettings) -> usize {
    1 + (slot / s.cohort_size) * s.cohort_interval_days
}

pub fn is_update_day(day: usize, cadence: Cadence) -> bool {
    day > 1
        && match cadence {
            Cadence::Daily => true,
            Cadence::Weekly => (day - 1).is_multiple_of(7),
        }
}

/// First day the shared posterior drives selection: the first weekly update
/// after the trigger participant starts. `None` when fewer participants than
/// the trigger are recruited, in which case the prior is used throughout.
pub fn full_pooling_start(s: &TrialSettings) -> Option<usize> {
    if s.prior_trigger == 0 {
        return Some(1);
    }
    if s.prior_trigger > s.participants {
        return None;
    }
    let entry = entry_day(s.prior_trigger - 1, s);
    Some((entry + 1..).find(|&d| is_update_day(d, Cadence::Weekly)).expect("unbounded"))
}

/// Decision points a no-pooling participant spends on the prior.
pub const NO_POOLING_PRIOR_POINTS: usize = 14;

/// Linear-interpolation percentile of `values` (sorted copy), `q` in `[0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

enum Learner {
    Full { stats: SufficientStats<f64>, adv: Option<AdvantagePosterior<f64>> },
    None { stats: Vec<SufficientStats<f64>>, adv: Vec<Option<AdvantagePosterior<f64>>>, fitted_n: Vec<usize> },
}

fn advantage(stats: &SufficientStats<f64>, prior: &PriorSpec<f64>) -> Result<AdvantagePosterior<f64>> {
    let post = posterior_from_stats(stats, prior)?;
    if !post.is_finite() {
        return Err(crate::error::NumericalError::NonFinite { what: "posterior" }.into());
    }
    Ok(AdvantagePosterior::from_posterior(&post))
}

/// Participants of the trial with seed `seed`, in slot order: fitted models
/// drawn with replacement, each with its own effect draw.
pub fn recruit(ctx: &TrialContext<'_>, seed: u64) -> Vec<ParticipantEnvModel> {
    use rand::Rng;
    let mut pick = stream(seed, &[purpose::ENV]);
    (0..ctx.settings.participants)
        .map(|slot| {
            let k = pick.random_range(0..ctx.bundle.participants.len());
            let mut env_rng = stream(seed, &[purpose::ENV, slot as u64 + 1]);
            ctx.bundle.instantiate(k, &ctx.specs, &mut env_rng)
        })
        .collect()
}

/// Runs trial `index` with seed `seed`.
///
/// All randomness comes from streams keyed by the seed, the participant slot
/// and the decision point, so two candidates run with the same seed face the
/// same participants, effects, app-opening days and outcome noise wherever
/// their actions agree.
pub fn run_trial(ctx: &TrialContext<'_>, index: usize, seed: u64) -> Result<TrialResult> {
    let s = ctx.settings;
    let n = s.participants;
    let cost = s.cost_params();
    let smoothing: SmoothingParams<f64> = s.smoothing(ctx.candidate.slope);
    let prior_adv = AdvantagePosterior::from_posterior(&PosteriorState::from_prior(ctx.prior));

    let mut sims: Vec<SimParticipant> =
        recruit(ctx, seed).into_iter().map(|model| SimParticipant::new(model, ctx.variant.e, s.p_app)).collect();
    let entries: Vec<usize> = (0..n).map(|slot| entry_day(slot, s)).collect();
    let last_day = entries[n - 1] + STUDY_DAYS - 1;
    let pooled_start = full_pooling_start(s);
    let mut banks: Vec<ScheduleBank> = if s.deployment_fidelity { vec![ScheduleBank::default(); n] } else { Vec::new() };

    let mut learner = match ctx.candidate.pooling {
        Pooling::Full => Learner::Full { stats: SufficientStats::new(), adv: None },
        Pooling::None => Learner::None { stats: vec![SufficientStats::new(); n], adv: vec![None; n], fitted_n: vec![0; n] },
    };
    let mut updates = Vec::new();
    let mut expected_updates = Vec::new();
    let mut cumulative = vec![0.0; n];
    let mut rows: Vec<Vec<LogRow>> = vec![Vec::with_capacity(2 * STUDY_DAYS); n];

    for day in 1..=last_day {
        if is_update_day(day, ctx.candidate.cadence) {
            expected_updates.push(day);
            match &mut learner {
                Learner::Full { stats, adv } => {
                    *adv = Some(advantage(stats, ctx.prior)?);
                }
                Learner::None { stats, adv, fitted_n } => {
                    for slot in 0..n {
                        if stats[slot].n > fitted_n[slot] {
                            adv[slot] = Some(advantage(&stats[slot], ctx.prior)?);
                            fitted_n[slot] = stats[slot].n;
                        }
                    }
                }
            }
            updates.push(day);
        }
        for slot in 0..n {
            if day < entries[slot] || day >= entries[slot] + STUDY_DAYS {
                continue;
            }
            for _ in 0..2 {
                let sim = &mut sims[slot];
                let t = sim.next_t();
                let current = match &learner {
                    Learner::Full { adv, .. } => match (pooled_start, adv) {
                        (Some(start), Some(a)) if day >= start => a,
                        _ => &prior_adv,
                    },
                    Learner::None { adv, .. } => match &adv[slot] {
                        Some(a) if t > NO_POOLING_PRIOR_POINTS => a,
                        _ => &prior_adv,
                    },
                };
                let prob = |state: &AlgState<f64>| -> Result<f64> {
                    match s.forced_pi {
                        Some(p) => Ok(p),
                        None => current.prob(state, &smoothing),
                    }
                };
                let u_app = uniform(seed, &[purpose::APP, slot as u64, t as u64]);
                let u_action = uniform(seed, &[purpose::ACTION, slot as u64, t as u64]);
                let mut out_rng = stream(seed, &[purpose::OUTCOME, slot as u64, t as u64]);
                let mut source = StateSource::Fresh;
                let row = if s.deployment_fidelity {
                    let bank = &mut banks[slot];
                    let decide = |view: &StepView<'_>| -> Result<Decision> {
                        if view.app_open && time_of_day(view.t) == 0 {
                            let mut evening = view.realized;
                            evening.time_of_day = 1.0;
                            let history: Vec<u8> = view.log.records().iter().map(|r| r.action).collect();
                            let inputs = ScheduleInputs {
                                t: view.t,
                                fresh_morning: view.realized,
                                fresh_evening: evening,
                                action_history: &history,
                            };
                            let schedule = build_schedule(&inputs, prob, |j| {
                                uniform(seed, &[purpose::ACTION, slot as u64, j as u64])
                            })?;
                            bank.install(schedule);
                        }
                        let r = bank.deliver(view.t).ok_or_else(|| Error::Data(format!("no schedule for t={}", view.t)))?;
                        source = r.provenance.into();
                        Ok(Decision { pi: r.pi, action: r.action, state: r.state.unwrap_or(view.state) })
                    };
                    sim.step_with(decide, &cost, u_app, &mut out_rng)?
                } else {
                    let row = sim.step(
                        prob,
                        &cost,
                        crate::simenv::StepDraws { app: u_app, action: u_action, outcome: &mut out_rng },
                    )?;
                    if row.stale {
                        source = StateSource::Stale;
                    }
                    row
                };
                let phi = joint_features(&row.realized_state, row.action, row.pi);
                match &mut learner {
                    Learner::Full { stats, .. } => stats.push(&phi, row.reward),
                    Learner::None { stats, .. } => stats[slot].push(&phi, row.reward),
                }
                cumulative[slot] += row.q;
                rows[slot].push(LogRow {
                    slot,
                    env_id: sim.model.id.clone(),
                    entry_day: entries[slot],
                    day,
                    t: row.t,
                    time_of_day: time_of_day(row.t),
                    source,
                    bbar_norm: row.state.bbar_norm,
                    abar_norm: row.state.abar_norm,
                    prior_day_app: row.state.prior_day_app,
                    realized_bbar_norm: row.realized_state.bbar_norm,
                    realized_abar_norm: row.realized_state.abar_norm,
                    realized_prior_day_app: row.realized_state.prior_day_app,
                    app_open: row.app_open,
                    pi: row.pi,
                    action: row.action,
                    q_raw: row.q_raw,
                    q: row.q,
                    reward: row.reward,
                    shrink_level: row.shrink_level,
                });
            }
        }
    }

    let logs: Vec<LogRow> = rows.into_iter().flatten().collect();
    let alarms = monitor(&logs, &expected_updates, &updates, &ctx.thresholds);
    let per_point: Vec<f64> = cumulative.iter().map(|c| c / (2 * STUDY_DAYS) as f64).collect();
    let average = per_point.iter().sum::<f64>() / n as f64;
    let p25 = percentile(&per_point, 0.25);
    let posteriors = match &learner {
        Learner::Full { .. } => 1,
        Learner::None { stats, .. } => stats.len(),
    };
    let prior_period_end = match ctx.candidate.pooling {
        Pooling::Full => Some(pooled_start.map_or(last_day, |d| d - 1)),
        Pooling::None => None,
    };
    Ok(TrialResult {
        index,
        seed,
        cumulative,
        average,
        p25,
        updates,
        prior_period_end,
        posteriors,
        alarms,
        logs: s.keep_logs.then_some(logs),
    })
}

/// Seed of trial `index` under master seed `master`.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, &[index as u64])
}
