//! Precomputed action schedules for when the app cannot reach the server.
//!
//! Each night the algorithm builds a schedule running to the end of the
//! participant's study. The first day uses fresh states; the following 26
//! decision points use modified states that freeze the brushing average,
//! assume no app engagement and roll the prompt average forward through the
//! schedule's own earlier actions; everything after that is a fair coin. The
//! phone executes the newest schedule it has received.

use serde::{Deserialize, Serialize};

use crate::envmodel::STUDY_POINTS;
use crate::error::Result;
use crate::features::{exp_average, normalize_abar, time_of_day, AlgState, ExpAverageParams, LOOKBACK};

/// Decision points after the creation day that use modified states.
pub const MODIFIED_SPAN: usize = 26;
/// Selection probability once the modified region is exhausted.
pub const FIXED_PI: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Fresh,
    Modified,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub t: usize,
    pub action: u8,
    pub pi: f64,
    pub provenance: Provenance,
    /// Absent in the fixed region.
    pub state: Option<AlgState<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSchedule {
    pub created_at: usize,
    pub rows: Vec<ScheduleRow>,
}

impl ActionSchedule {
    pub fn row(&self, t: usize) -> Option<&ScheduleRow> {
        t.checked_sub(self.created_at).and_then(|k| self.rows.get(k))
    }
}

/// Inputs fixed at the nightly construction time.
pub struct ScheduleInputs<'a> {
    /// Morning decision point the schedule starts at.
    pub t: usize,
    pub fresh_morning: AlgState<f64>,
    pub fresh_evening: AlgState<f64>,
    /// Actions the algorithm has already executed, oldest first.
    pub action_history: &'a [u8],
}

/// Prompt average at the next decision point given actions oldest first.
fn rolling_abar(actions: &[u8], params: &ExpAverageParams<f64>) -> f64 {
    let recent: Vec<f64> = actions.iter().rev().take(LOOKBACK).map(|&a| a as f64).collect();
    if recent.is_empty() {
        return -1.0;
    }
    normalize_abar(exp_average(&recent, params).clamp(0.0, 1.0)).expect("clamped")
}

/// Builds a schedule from `t` through the last study decision point.
///
/// `prob` maps a state to a selection probability and `uniform(j)` supplies
/// the action draw for decision point `j`.
pub fn build_schedule(
    inputs: &ScheduleInputs<'_>,
    mut prob: impl FnMut(&AlgState<f64>) -> Result<f64>,
    mut uniform: impl FnMut(usize) -> f64,
) -> Result<ActionSchedule> {
    let t = inputs.t;
    debug_assert_eq!(time_of_day(t), 0, "schedules start in the morning");
    let params = ExpAverageParams::default();
    let mut actions: Vec<u8> = inputs.action_history.to_vec();
    let mut rows = Vec::with_capacity(STUDY_POINTS + 1 - t.min(STUDY_POINTS));
    for j in t..=STUDY_POINTS {
        let (state, provenance) = match j - t {
            0 => (Some(inputs.fresh_morning), Provenance::Fresh),
            1 => (Some(inputs.fresh_evening), Provenance::Fresh),
            k if k <= MODIFIED_SPAN + 1 => {
                let state = AlgState {
                    time_of_day: time_of_day(j) as f64,
                    bbar_norm: inputs.fresh_morning.bbar_norm,
                    abar_norm: rolling_abar(&actions, &params),
                    prior_day_app: 0.0,
                };
                (Some(state), Provenance::Modified)
            }
            _ => (None, Provenance::Fixed),
        };
        let pi = match &state {
            Some(s) => prob(s)?,
            None => FIXED_PI,
        };
        let action = (uniform(j) < pi) as u8;
        actions.push(action);
        rows.push(ScheduleRow { t: j, action, pi, provenance, state });
    }
    Ok(ActionSchedule { created_at: t, rows })
}

/// The schedule a participant's phone currently holds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleBank {
    pub active: Option<ActionSchedule>,
    /// Creation points of every schedule received, for inspection.
    pub received: Vec<usize>,
}

impl ScheduleBank {
    /// Called when the app syncs; the newest schedule replaces the old one.
    pub fn install(&mut self, schedule: ActionSchedule) {
        self.received.push(schedule.created_at);
        self.active = Some(schedule);
    }

    /// Row executed at `t`, or `None` before any schedule arrived.
    pub fn deliver(&self, t: usize) -> Option<&ScheduleRow> {
        self.active.as_ref().and_then(|s| s.row(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::uniform;

    fn inputs(t: usize, history: &[u8]) -> ScheduleInputs<'_> {
        let mut fresh = AlgState::initial(t);
        fresh.bbar_norm = 0.3;
        fresh.prior_day_app = 1.0;
        let mut evening = fresh;
        evening.time_of_day = 1.0;
        ScheduleInputs { t, fresh_morning: fresh, fresh_evening: evening, action_history: history }
    }

    #[test]
    fn regions_and_fixed_probability() {
        let hist = vec![1u8; 20];
        let s = build_schedule(&inputs(21, &hist), |_| Ok(0.8), |j| uniform(1, &[j as u64])).unwrap();
        assert_eq!(s.rows.len(), 140 - 21 + 1);
        assert_eq!(s.rows.iter().filter(|r| r.provenance == Provenance::Fresh).count(), 2);
        let modified: Vec<usize> = s.rows.iter().filter(|r| r.provenance == Provenance::Modified).map(|r| r.t).collect();
        assert_eq!(modified.len(), 26);
        assert_eq!((modified[0], *modified.last().unwrap()), (23, 48));
        for r in &s.rows {
            match r.provenance {
                Provenance::Fixed => assert!(r.pi == 0.5 && r.state.is_none()),
                _ => assert_eq!(r.pi, 0.8),
            }
        }
        for r in s.rows.iter().filter(|r| r.provenance == Provenance::Modified) {
            let st = r.state.unwrap();
            assert_eq!((st.bbar_norm, st.prior_day_app), (0.3, 0.0));
            assert_eq!(st.time_of_day, time_of_day(r.t) as f64);
        }
    }

    #[test]
    fn rolling_average_replays_schedule() {
        let hist = [0u8, 1, 1, 0, 1];
        let s = build_schedule(&inputs(7, &hist), |st| Ok(0.5 + 0.25 * st.abar_norm), |j| uniform(4, &[j as u64])).unwrap();
        let mut actions: Vec<f64> = hist.iter().map(|&a| a as f64).collect();
        for r in &s.rows {
            if r.provenance == Provenance::Modified {
                let recent: Vec<f64> = actions.iter().rev().take(14).copied().collect();
                let want = 2.0 * exp_average(&recent, &ExpAverageParams::default()) - 1.0;
                assert!((r.state.unwrap().abar_norm - want).abs() < 1e-12, "t={}", r.t);
            }
            actions.push(r.action as f64);
        }
    }

    #[test]
    fn bank_keeps_last_schedule() {
        let mut bank = ScheduleBank::default();
        assert!(bank.deliver(1).is_none());
        let first = build_schedule(&inputs(1, &[]), |_| Ok(0.3), |j| uniform(2, &[j as u64])).unwrap();
        bank.install(first.clone());
        assert_eq!(bank.deliver(40), first.row(40));
        assert_eq!(bank.deliver(40).unwrap().provenance, Provenance::Fixed);
        let hist: Vec<u8> = first.rows[..4].iter().map(|r| r.action).collect();
        let second = build_schedule(&inputs(5, &hist), |_| Ok(0.7), |j| uniform(2, &[j as u64])).unwrap();
        bank.install(second);
        assert_eq!(bank.deliver(5).unwrap().pi, 0.7);
        assert_eq!(bank.received, vec![1, 5]);
        assert!(bank.deliver(141).is_none());
    }

    #[test]
    fn json_roundtrip() {
        let s = build_schedule(&inputs(3, &[1, 0]), |_| Ok(0.4), |j| uniform(0, &[j as u64])).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"modified\""));
        assert_eq!(serde_json::from_str::<ActionSchedule>(&text).unwrap(), s);
    }
}
