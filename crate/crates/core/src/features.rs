//! Algorithm state construction.
//!
//! The policy consumes a five-entry feature vector per decision point:
//! time of day, the normalized discounted average of recent brushing
//! quality, the normalized discounted average of recent prompts, whether the
//! app was opened the previous day, and an intercept. Decision points are
//! indexed from 1; odd indices are mornings and even indices are evenings.

use serde::{Deserialize, Serialize};

use crate::error::DomainError;
use crate::scalar::Real;

/// Number of entries in the algorithm feature vector.
pub const STATE_DIM: usize = 5;
/// Decision points covered by the discounted averages (7 days, 2 per day).
pub const LOOKBACK: usize = 14;
/// Upper truncation of the proximal outcome, in seconds.
pub const MAX_OSCB: f64 = 180.0;

/// Discounting of the brushing and prompt histories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpAverageParams<T> {
    pub gamma: T,
    pub lookback: usize,
}

impl<T: Real> Default for ExpAverageParams<T> {
    fn default() -> Self {
        Self { gamma: T::lit(13.0 / 14.0), lookback: LOOKBACK }
    }
}

impl<T: Real> ExpAverageParams<T> {
    /// Normalizing constant `(1 - γ) / (1 - γ^lookback)`.
    pub fn c_gamma(&self) -> T {
        (T::one() - self.gamma) / (T::one() - self.gamma.powi(self.lookback as i32))
    }

    /// Weights applied to the history, most recent first. They sum to one.
    pub fn weights(&self) -> Vec<T> {
        let c = self.c_gamma();
        let mut w = Vec::with_capacity(self.lookback);
        let mut g = T::one();
        for _ in 0..self.lookback {
            w.push(c * g);
            g = g * self.gamma;
        }
        w
    }
}

/// Discounted average of a history ordered most recent first.
///
/// With a full lookback window this is `c_γ Σ_j γ^{j-1} x_{t-j}`; with fewer
/// records it is the plain mean of what is available, and an empty history
/// yields zero.
pub fn exp_average<T: Real>(history: &[T], params: &ExpAverageParams<T>) -> T {
    if history.is_empty() {
        return T::zero();
    }
    if history.len() < params.lookback {
        let sum = history.iter().fold(T::zero(), |a, &x| a + x);
        return sum / T::from_usize(history.len()).unwrap();
    }
    params
        .weights()
        .iter()
        .zip(history)
        .fold(T::zero(), |acc, (&w, &x)| acc + w * x)
}

/// Maps a raw brushing average in `[0, 180]` seconds to the policy scale.
pub fn normalize_bbar<T: Real>(bbar_raw: T) -> Result<T, DomainError> {
    DomainError::check("bbar", bbar_raw.as_f64(), 0.0, MAX_OSCB)?;
    Ok((bbar_raw - T::lit(181.0 / 2.0)) / T::lit(179.0 / 2.0))
}

pub fn denormalize_bbar<T: Real>(bbar_norm: T) -> T {
    bbar_norm * T::lit(179.0 / 2.0) + T::lit(181.0 / 2.0)
}

/// Maps a raw prompt average in `[0, 1]` to `[-1, 1]`.
pub fn normalize_abar<T: Real>(abar_raw: T) -> Result<T, DomainError> {
    DomainError::check("abar", abar_raw.as_f64(), 0.0, 1.0)?;
    Ok(T::two() * (abar_raw - T::half()))
}

pub fn denormalize_abar<T: Real>(abar_norm: T) -> T {
    abar_norm / T::two() + T::half()
}

/// Morning (0) or evening (1) for a 1-based decision point.
pub fn time_of_day(t: usize) -> u8 {
    if t % 2 == 1 {
        0
    } else {
        1
    }
}

/// 1-based study day of a 1-based decision point.
pub fn day_of(t: usize) -> usize {
    t.div_ceil(2)
}

/// Algorithm state `f(S)`. The intercept is implicit and always one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgState<T> {
    pub time_of_day: T,
    pub bbar_norm: T,
    pub abar_norm: T,
    pub prior_day_app: T,
}

impl<T: Real> AlgState<T> {
    /// State used before any brushing window has closed.
    pub fn initial(t: usize) -> Self {
        Self {
            time_of_day: T::from_u8(time_of_day(t)).unwrap(),
            bbar_norm: -T::one(),
            abar_norm: -T::one(),
            prior_day_app: T::zero(),
        }
    }

    pub fn intercept(&self) -> T {
        T::one()
    }

    pub fn to_array(&self) -> [T; STATE_DIM] {
        [self.time_of_day, self.bbar_norm, self.abar_norm, self.prior_day_app, T::one()]
    }
}

/// One decision point in a participant's log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord<T> {
    /// Proximal outcome in seconds, already truncated to `[0, 180]`.
    pub oscb: T,
    pub action: u8,
    pub app_opened: bool,
    pub window_closed: bool,
}

/// Per-participant log indexed by decision point (record `t` at slot `t - 1`).
///
/// The outcome and action of a record are only read for state construction
/// once its `window_closed` flag is set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParticipantLog<T> {
    records: Vec<DecisionRecord<T>>,
}

impl<T: Real> ParticipantLog<T> {
    pub fn new() -> Self {
        Self { records: Vec::new() }
    }

    pub fn from_records(records: Vec<DecisionRecord<T>>) -> Self {
        Self { records }
    }

    pub fn push(&mut self, record: DecisionRecord<T>) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<&DecisionRecord<T>> {
        t.checked_sub(1).and_then(|i| self.records.get(i))
    }

    pub fn records(&self) -> &[DecisionRecord<T>] {
        &self.records
    }

    /// Marks every record with index `<= t` as closed.
    pub fn close_through(&mut self, t: usize) {
        for r in self.records.iter_mut().take(t) {
            r.window_closed = true;
        }
    }

    /// Closed records strictly before `t`, most recent first, at most `LOOKBACK`.
    fn closed_before(&self, t: usize) -> impl Iterator<Item = &DecisionRecord<T>> {
        let end = t.saturating_sub(1).min(self.records.len());
        self.records[..end].iter().rev().filter(|r| r.window_closed).take(LOOKBACK)
    }

    pub fn closed_oscb(&self, t: usize) -> Vec<T> {
        self.closed_before(t).map(|r| r.oscb).collect()
    }

    pub fn closed_actions(&self, t: usize) -> Vec<T> {
        self.closed_before(t).map(|r| T::from_u8(r.action).unwrap()).collect()
    }

    /// Unnormalized `(B̄, Ā)` at decision point `t`; zero when nothing has closed.
    pub fn raw_averages(&self, t: usize, params: &ExpAverageParams<T>) -> (T, T) {
        (exp_average(&self.closed_oscb(t), params), exp_average(&self.closed_actions(t), params))
    }

    /// Whether the app was opened on the day before decision point `t`.
    pub fn prior_day_app(&self, t: usize) -> bool {
        let day = day_of(t);
        if day <= 1 {
            return false;
        }
        let morning = 2 * (day - 1) - 1;
        self.get(morning).or_else(|| self.get(morning + 1)).is_some_and(|r| r.app_opened)
    }
}

/// Most recent state from the participant's own closed history.
pub fn build_fresh_state<T: Real>(log: &ParticipantLog<T>, t: usize) -> AlgState<T> {
    assert!(t >= 1, "decision points are 1-based");
    let params = ExpAverageParams::default();
    let oscb = log.closed_oscb(t);
    let mut state = AlgState::initial(t);
    if !oscb.is_empty() {
        let actions = log.closed_actions(t);
        let bbar = exp_average(&oscb, &params).max(T::zero()).min(T::lit(MAX_OSCB));
        let abar = exp_average(&actions, &params).max(T::zero()).min(T::one());
        state.bbar_norm = normalize_bbar(bbar).expect("clamped");
        state.abar_norm = normalize_abar(abar).expect("clamped");
    }
    state.prior_day_app = if log.prior_day_app(t) { T::one() } else { T::zero() };
    state
}

/// State for a decision point whose brushing data the app could not refresh.
///
/// The brushing average is frozen at the last fresh value and prior-day app
/// engagement is imputed as zero. The prompt average is still current because
/// the algorithm knows its own selections; `recent_actions` is most recent
/// first with the same window rules as the fresh path.
pub fn build_stale_state<T: Real>(last_fresh_bbar_norm: T, recent_actions: &[T], t: usize) -> AlgState<T> {
    let mut state = AlgState::initial(t);
    state.bbar_norm = last_fresh_bbar_norm;
    if !recent_actions.is_empty() {
        let abar = exp_average(recent_actions, &ExpAverageParams::default()).max(T::zero()).min(T::one());
        state.abar_norm = normalize_abar(abar).expect("clamped");
    }
    state
}
