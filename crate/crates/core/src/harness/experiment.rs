//! Many trials across candidates and environment variants, aggregated.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Candidate, EnvVariant, TrialSettings};
use super::monitor::Alarm;
use super::trial::{run_trial, trial_seed, TrialContext, TrialResult};
use crate::envmodel::{fit_population, EnvBundle, FitOptions, ParticipantSeries, Stationarity};
use crate::error::{Error, Result};
use crate::policy::PriorSpec;

/// Fitted environments for both stationarity assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub stationary: EnvBundle,
    pub non_stationary: EnvBundle,
}

impl Environment {
    pub fn fit(series: &[ParticipantSeries], opts: &FitOptions, seed: u64) -> Result<Self> {
        Ok(Self {
            stationary: fit_population(series, Stationarity::Stationary, opts, seed)?,
            non_stationary: fit_population(series, Stationarity::NonStationary, opts, seed)?,
        })
    }

    pub fn bundle(&self, stat: Stationarity) -> &EnvBundle {
        match stat {
            Stationarity::Stationary => &self.stationary,
            Stationarity::NonStationary => &self.non_stationary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Mean over participants of the per-decision-point average outcome.
    Average,
    /// 25th percentile over participants of the same quantity.
    P25,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Average, Metric::P25];

    pub fn of(&self, r: &TrialResult) -> f64 {
        match self {
            Metric::Average => r.average,
            Metric::P25 => r.p25,
        }
    }
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Trials of one candidate in one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub candidate: Candidate,
    pub variant: EnvVariant,
    pub settings: TrialSettings,
    pub results: Vec<TrialResult>,
}

impl Cell {
    /// Appends the trials of `other`, which must be the same job.
    pub fn extend(&mut self, other: Cell) {
        debug_assert!(self.candidate == other.candidate && self.variant == other.variant);
        self.results.extend(other.results);
    }

    pub fn metric(&self, m: Metric) -> (f64, f64) {
        mean_se(&self.results.iter().map(|r| m.of(r)).collect::<Vec<_>>())
    }
}

/// A unit of work: one candidate, one variant, one settings override.
#[derive(Debug, Clone)]
pub struct Job {
    pub candidate: Candidate,
    pub variant: EnvVariant,
    pub settings: TrialSettings,
}

/// Runs `trials` trials of every job. Trial `k` of every job shares seed
/// `trial_seed(master, k)`, which gives common random numbers across
/// candidates, variants and settings. Work is spread over the current rayon
/// pool and results come back in job order, independent of thread count.
pub fn run_jobs(env: &Environment, prior: &PriorSpec<f64>, jobs: &[Job], trials: usize, master: u64) -> Result<Vec<Cell>> {
    run_jobs_range(env, prior, jobs, 0..trials, master)
}

/// Like [`run_jobs`] for trial indices `trials` only, so an experiment can be
/// extended without rerunning earlier trials.
pub fn run_jobs_range(env: &Environment, prior: &PriorSpec<f64>, jobs: &[Job], trials: Range<usize>, master: u64) -> Result<Vec<Cell>> {
    let contexts = jobs
        .iter()
        .map(|j| TrialContext::new(env.bundle(j.variant.stationarity), j.variant, j.candidate, &j.settings, prior))
        .collect::<Result<Vec<_>>>()?;
    let count = trials.len();
    let work: Vec<(usize, usize)> = (0..jobs.len()).flat_map(|j| trials.clone().map(move |k| (j, k))).collect();
    let results = work
        .par_iter()
        .map(|&(j, k)| run_trial(&contexts[j], k, trial_seed(master, k)))
        .collect::<Result<Vec<_>>>()?;
    let mut it = results.into_iter();
    Ok(jobs
        .iter()
        .map(|j| Cell {
            candidate: j.candidate,
            variant: j.variant,
            settings: j.settings.clone(),
            results: it.by_ref().take(count).collect(),
        })
        .collect())
}

/// One line of the candidate × variant table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub candidate: String,
    pub variant: String,
    pub metric: Metric,
    pub value: f64,
    pub se: f64,
    pub trials: usize,
}

/// Per-trial metrics, for audit and for the pooled comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub candidate: String,
    pub variant: String,
    pub xi1: f64,
    pub xi2: f64,
    pub prior_trigger: usize,
    pub trial: usize,
    pub seed: u64,
    pub average: f64,
    pub p25: f64,
    pub alarms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmRow {
    pub candidate: String,
    pub variant: String,
    pub trial: usize,
    pub kind: super::monitor::AlarmKind,
    pub participant: Option<usize>,
    pub period: usize,
    pub detail: String,
}

/// Metric rows per cell. Cells without trials contribute nothing.
pub fn summary_rows(cells: &[Cell]) -> Vec<SummaryRow> {
    let mut out = Vec::with_capacity(cells.len() * 2);
    for m in Metric::ALL {
        for c in cells.iter().filter(|c| !c.results.is_empty()) {
            let (value, se) = c.metric(m);
            out.push(SummaryRow {
                candidate: c.candidate.label(),
                variant: c.variant.label(),
                metric: m,
                value,
                se,
                trials: c.results.len(),
            });
        }
    }
    out
}

pub fn trial_rows(cells: &[Cell]) -> Vec<TrialRow> {
    cells
        .iter()
        .flat_map(|c| {
            c.results.iter().map(move |r| TrialRow {
                candidate: c.candidate.label(),
                variant: c.variant.label(),
                xi1: c.settings.xi1,
                xi2: c.settings.xi2,
                prior_trigger: c.settings.prior_trigger,
                trial: r.index,
                seed: r.seed,
                average: r.average,
                p25: r.p25,
                alarms: r.alarms.len(),
            })
        })
        .collect()
}

pub fn alarm_rows(cells: &[Cell]) -> Vec<AlarmRow> {
    let row = |c: &Cell, r: &TrialResult, a: &Alarm| AlarmRow {
        candidate: c.candidate.label(),
        variant: c.variant.label(),
        trial: r.index,
        kind: a.kind,
        participant: a.participant,
        period: a.period,
        detail: a.detail.clone(),
    };
    cells.iter().flat_map(|c| c.results.iter().flat_map(move |r| r.alarms.iter().map(move |a| row(c, r, a)))).collect()
}

/// Every candidate in every variant with shared settings.
pub fn run_experiment(
    env: &Environment,
    prior: &PriorSpec<f64>,
    variants: &[EnvVariant],
    candidates: &[Candidate],
    settings: &TrialSettings,
    trials: usize,
    master: u64,
) -> Result<Vec<Cell>> {
    let jobs: Vec<Job> = variants
        .iter()
        .flat_map(|&variant| candidates.iter().map(move |&candidate| Job { candidate, variant, settings: settings.clone() }))
        .collect();
    run_jobs(env, prior, &jobs, trials, master)
}

/// One cell of the reward-cost grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub variant: String,
    pub xi1: f64,
    pub xi2: f64,
    pub metric: Metric,
    pub value: f64,
    pub se: f64,
    /// Whether this cell maximizes the metric within its variant.
    pub best: bool,
}

pub fn grid_rows(cells: &[Cell]) -> Vec<GridRow> {
    let cells: Vec<&Cell> = cells.iter().filter(|c| !c.results.is_empty()).collect();
    let mut variants: Vec<EnvVariant> = Vec::new();
    for c in &cells {
        if !variants.contains(&c.variant) {
            variants.push(c.variant);
        }
    }
    let mut out = Vec::new();
    for m in Metric::ALL {
        for &v in &variants {
            let group: Vec<&Cell> = cells.iter().copied().filter(|c| c.variant == v).collect();
            let values: Vec<(f64, f64)> = group.iter().map(|c| c.metric(m)).collect();
            let best = values
                .iter()
                .enumerate()
                .filter(|(_, (x, _))| x.is_finite())
                .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i);
            for (i, (c, (value, se))) in group.iter().zip(values).enumerate() {
                out.push(GridRow {
                    variant: v.label(),
                    xi1: c.settings.xi1,
                    xi2: c.settings.xi2,
                    metric: m,
                    value,
                    se,
                    best: best == Some(i),
                });
            }
        }
    }
    out
}

/// Evaluates `candidate` at every `(ξ₁, ξ₂)` in `grid`.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_xi(
    env: &Environment,
    prior: &PriorSpec<f64>,
    variants: &[EnvVariant],
    candidate: Candidate,
    grid: &[(f64, f64)],
    settings: &TrialSettings,
    trials: usize,
    master: u64,
) -> Result<Vec<Cell>> {
    if grid.is_empty() {
        return Err(Error::Config("empty reward-cost grid".into()));
    }
    let jobs: Vec<Job> = variants
        .iter()
        .flat_map(|&variant| {
            grid.iter().map(move |&(xi1, xi2)| Job { candidate, variant, settings: TrialSettings { xi1, xi2, ..settings.clone() } })
        })
        .collect();
    run_jobs(env, prior, &jobs, trials, master)
}

/// Paired comparison of two prior-period triggers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorPeriodRow {
    pub variant: String,
    pub metric: Metric,
    pub longer_trigger: usize,
    pub longer: f64,
    pub longer_se: f64,
    pub shorter_trigger: usize,
    pub shorter: f64,
    pub shorter_se: f64,
    /// Mean paired difference (longer minus shorter) and its standard error.
    pub diff: f64,
    pub diff_se: f64,
}

/// Runs both triggers with common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn compare_prior_period(
    env: &Environment,
    prior: &PriorSpec<f64>,
    variants: &[EnvVariant],
    candidate: Candidate,
    triggers: (usize, usize),
    settings: &TrialSettings,
    trials: usize,
    master: u64,
) -> Result<(Vec<Cell>, Vec<PriorPeriodRow>)> {
    let jobs: Vec<Job> = variants
        .iter()
        .flat_map(|&variant| {
            [triggers.0, triggers.1].map(|prior_trigger| Job {
                candidate,
                variant,
                settings: TrialSettings { prior_trigger, ..settings.clone() },
            })
        })
        .collect();
    let cells = run_jobs(env, prior, &jobs, trials, master)?;
    let mut rows = Vec::new();
    for m in Metric::ALL {
        for pair in cells.chunks(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let (la, sa) = a.metric(m);
            let (lb, sb) = b.metric(m);
            let diffs: Vec<f64> = a.results.iter().zip(&b.results).map(|(x, y)| m.of(x) - m.of(y)).collect();
            let (diff, diff_se) = mean_se(&diffs);
            rows.push(PriorPeriodRow {
                variant: a.variant.label(),
                metric: m,
                longer_trigger: triggers.0,
                longer: la,
                longer_se: sa,
                shorter_trigger: triggers.1,
                shorter: lb,
                shorter_se: sb,
                diff,
                diff_se,
            });
        }
    }
    Ok((cells, rows))
}
