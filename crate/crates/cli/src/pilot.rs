//! Pilot-study CSV: one row per decision point with the algorithm state,
//! the action, its selection probability and the observed reward.

use std::path::Path;

use oralytics_core::features::AlgState;
use oralytics_core::policy::{PilotParticipant, PilotRow};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotCsvRow {
    pub participant_id: String,
    pub time_of_day: f64,
    pub bbar_norm: f64,
    pub abar_norm: f64,
    pub prior_day_app: f64,
    pub action: u8,
    pub pi: f64,
    pub reward: f64,
}

/// Groups rows by participant in order of first appearance.
pub fn read_pilot(path: &Path) -> Result<Vec<PilotParticipant<f64>>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out: Vec<PilotParticipant<f64>> = Vec::new();
    for row in rdr.deserialize::<PilotCsvRow>() {
        let r = row.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if r.action > 1 {
            return Err(CliError::Data(format!("participant {}: action {} is not 0 or 1", r.participant_id, r.action)));
        }
        let state = AlgState { time_of_day: r.time_of_day, bbar_norm: r.bbar_norm, abar_norm: r.abar_norm, prior_day_app: r.prior_day_app };
        let row = PilotRow { state, action: r.action, pi: r.pi, reward: r.reward };
        match out.iter_mut().find(|p| p.id == r.participant_id) {
            Some(p) => p.rows.push(row),
            None => out.push(PilotParticipant { id: r.participant_id, rows: vec![row] }),
        }
    }
    Ok(out)
}
