//! Checks run over trial logs, mirroring the alarms a study team would watch.

use serde::{Deserialize, Serialize};

use super::trial::LogRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorThresholds {
    /// A participant-week with fewer prompts than this is flagged.
    pub min_prompts: usize,
    /// A participant-week with at least this many prompts is flagged.
    pub max_prompts: usize,
}

impl Default for MonitorThresholds {
    fn default() -> Self {
        Self { min_prompts: 1, max_prompts: 14 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlarmKind {
    InsufficientDosage,
    ExcessiveDosage,
    DataValidity,
    RandomizationFailure,
    UpdateFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub kind: AlarmKind,
    /// Participant slot, when the alarm concerns one participant.
    pub participant: Option<usize>,
    /// Participant week (1-based) or study day for update alarms.
    pub period: usize,
    pub detail: String,
}

/// Decision points per monitoring week.
const WEEK: usize = 14;

/// Scans one trial's log. `rows` must be grouped by participant in
/// decision-point order; `expected_updates` and `executed_updates` are
/// study days.
pub fn monitor(rows: &[LogRow], expected_updates: &[usize], executed_updates: &[usize], th: &MonitorThresholds) -> Vec<Alarm> {
    let mut alarms = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let slot = rows[start].slot;
        let end = start + rows[start..].iter().take_while(|r| r.slot == slot).count();
        check_participant(slot, &rows[start..end], th, &mut alarms);
        start = end;
    }
    for &d in expected_updates {
        if executed_updates.binary_search(&d).is_err() {
            alarms.push(Alarm {
                kind: AlarmKind::UpdateFailure,
                participant: None,
                period: d,
                detail: format!("no posterior update on day {d}"),
            });
        }
    }
    alarms
}

fn check_participant(slot: usize, rows: &[LogRow], th: &MonitorThresholds, alarms: &mut Vec<Alarm>) {
    let mut expected_t = 1;
    for r in rows {
        if r.t != expected_t {
            alarms.push(Alarm {
                kind: AlarmKind::DataValidity,
                participant: Some(slot),
                period: (r.t - 1) / WEEK + 1,
                detail: format!("expected decision point {expected_t}, found {}", r.t),
            });
        }
        expected_t = r.t + 1;
        if !(r.pi.is_finite() && (0.0..=1.0).contains(&r.pi)) {
            alarms.push(Alarm {
                kind: AlarmKind::RandomizationFailure,
                participant: Some(slot),
                period: (r.t - 1) / WEEK + 1,
                detail: format!("missing or invalid selection probability at t={}", r.t),
            });
        }
    }
    for (w, week) in rows.chunks(WEEK).enumerate() {
        if week.len() < WEEK {
            break;
        }
        let prompts: usize = week.iter().map(|r| r.action as usize).sum();
        let kind = if prompts < th.min_prompts {
            AlarmKind::InsufficientDosage
        } else if prompts >= th.max_prompts {
            AlarmKind::ExcessiveDosage
        } else {
            continue;
        };
        alarms.push(Alarm {
            kind,
            participant: Some(slot),
            period: w + 1,
            detail: format!("{prompts} prompts in week {}", w + 1),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(slot: usize, actions: &[u8]) -> Vec<LogRow> {
        actions.iter().enumerate().map(|(k, &a)| LogRow::for_test(slot, k + 1, a, 0.5)).collect()
    }

    #[test]
    fn dosage_alarms() {
        let th = MonitorThresholds::default();
        let mut log = rows(0, &[0; 14]);
        log.extend(rows(1, &[1; 14]));
        let mut mixed = vec![0u8; 14];
        mixed[3] = 1;
        log.extend(rows(2, &mixed));
        let a = monitor(&log, &[], &[], &th);
        assert_eq!(a.len(), 2);
        assert_eq!((a[0].kind, a[0].participant), (AlarmKind::InsufficientDosage, Some(0)));
        assert_eq!((a[1].kind, a[1].participant), (AlarmKind::ExcessiveDosage, Some(1)));
    }

    #[test]
    fn healthy_log_is_quiet() {
        let acts: Vec<u8> = (0..140).map(|i| (i % 3 == 0) as u8).collect();
        let log = rows(4, &acts);
        assert!(monitor(&log, &[8, 15], &[8, 15], &MonitorThresholds::default()).is_empty());
    }

    #[test]
    fn structural_alarms() {
        let mut log = rows(0, &[1, 0, 1, 0]);
        log.remove(1);
        log[2].pi = f64::NAN;
        let a = monitor(&log, &[8, 15], &[8], &MonitorThresholds::default());
        let kinds: Vec<AlarmKind> = a.iter().map(|x| x.kind).collect();
        assert_eq!(kinds, vec![AlarmKind::DataValidity, AlarmKind::RandomizationFailure, AlarmKind::UpdateFailure]);
        assert_eq!(a[2].period, 15);
    }
}
