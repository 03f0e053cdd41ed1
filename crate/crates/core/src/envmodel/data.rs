//! Brushing-session CSV ingestion.
//!
//! Input has one row per brushing session with a participant id, a study day,
//! a morning/evening flag and the brushing and over-pressure durations in
//! seconds. Header names are matched case-insensitively against a set of
//! aliases. A window without a session has outcome zero; when a window has
//! several sessions the first one in file order wins. Only the first 70 days
//! are kept.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::state::{EnvContext, Stationarity, STUDY_DAYS, STUDY_POINTS};
use crate::error::{Error, Result};
use crate::reward::proximal_outcome;

const PARTICIPANT: &[&str] = &["participant", "participant_id", "user_id", "user", "robas_id", "id"];
const DAY: &[&str] = &["day", "day_in_study", "study_day"];
const TIME_OF_DAY: &[&str] = &["time_of_day", "tod", "session", "session_type", "window"];
const BRUSHING: &[&str] = &["brushing_duration", "brush_duration", "brushing_seconds", "duration"];
const PRESSURE: &[&str] = &["pressure_duration", "overpressure_duration", "pressure_seconds", "pressure"];

/// One participant's outcomes at decision points `1..=140`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSeries {
    pub id: String,
    pub oscb: Vec<f64>,
}

impl ParticipantSeries {
    pub fn contexts(&self) -> Vec<EnvContext> {
        (1..=self.oscb.len()).map(|t| EnvContext::at(t, &self.oscb[..t - 1])).collect()
    }

    /// Baseline design rows `g(S_t)`.
    pub fn design(&self, stat: Stationarity) -> Vec<Vec<f64>> {
        self.contexts().iter().map(|c| c.g(stat).to_vec()).collect()
    }
}

/// What ingestion did to each participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub id: String,
    pub rows: usize,
    pub rows_after_day_70: usize,
    pub duplicate_sessions: usize,
    pub missing_sessions: usize,
}

fn column(headers: &csv::StringRecord, aliases: &[&str]) -> Result<usize> {
    headers
        .iter()
        .position(|h| aliases.iter().any(|a| h.trim().eq_ignore_ascii_case(a)))
        .ok_or_else(|| Error::Data(format!("missing column; expected one of {aliases:?}")))
}

fn parse_time_of_day(s: &str) -> Result<usize> {
    match s.trim().to_ascii_lowercase().as_str() {
        "0" | "morning" | "am" | "m" => Ok(0),
        "1" | "evening" | "pm" | "e" => Ok(1),
        other => Err(Error::Data(format!("unrecognized time of day '{other}'"))),
    }
}

fn parse_num(s: &str, what: &str, line: u64) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Data(format!("line {line}: {what} '{s}' is not a number")))
}

pub fn read_sessions<R: Read>(reader: R) -> Result<(Vec<ParticipantSeries>, Vec<IngestReport>)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let (ip, id, it, ib, ipr) = (
        column(&headers, PARTICIPANT)?,
        column(&headers, DAY)?,
        column(&headers, TIME_OF_DAY)?,
        column(&headers, BRUSHING)?,
        column(&headers, PRESSURE)?,
    );
    let mut order: Vec<String> = Vec::new();
    let mut slots: HashMap<String, (Vec<Option<f64>>, IngestReport)> = HashMap::new();
    let mut raw_rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let pid = rec.get(ip).unwrap_or("").to_string();
        if pid.is_empty() {
            return Err(Error::Data(format!("line {line}: empty participant id")));
        }
        let day = parse_num(rec.get(id).unwrap_or(""), "day", line)?;
        if day < 0.0 || day.fract() != 0.0 {
            return Err(Error::Data(format!("line {line}: day {day} is not a non-negative integer")));
        }
        let tod = parse_time_of_day(rec.get(it).unwrap_or(""))?;
        let b = parse_num(rec.get(ib).unwrap_or(""), "brushing duration", line)?;
        let p = parse_num(rec.get(ipr).unwrap_or(""), "pressure duration", line)?;
        let q = proximal_outcome(b, p).map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        raw_rows.push((pid, day as usize, tod, q));
    }
    // Zero-based day numbering is shifted to one-based.
    let offset = usize::from(raw_rows.iter().any(|r| r.1 == 0));
    for (pid, day, tod, q) in raw_rows {
        let day = day + offset;
        let entry = slots.entry(pid.clone()).or_insert_with(|| {
            order.push(pid.clone());
            (
                vec![None; STUDY_POINTS],
                IngestReport { id: pid.clone(), rows: 0, rows_after_day_70: 0, duplicate_sessions: 0, missing_sessions: 0 },
            )
        });
        entry.1.rows += 1;
        if day > STUDY_DAYS {
            entry.1.rows_after_day_70 += 1;
            continue;
        }
        let slot = &mut entry.0[2 * (day - 1) + tod];
        if slot.is_some() {
            entry.1.duplicate_sessions += 1;
        } else {
            *slot = Some(q);
        }
    }
    let mut series = Vec::with_capacity(order.len());
    let mut reports = Vec::with_capacity(order.len());
    for pid in order {
        let (slots, mut report) = slots.remove(&pid).expect("inserted above");
        report.missing_sessions = slots.iter().filter(|s| s.is_none()).count();
        series.push(ParticipantSeries { id: pid, oscb: slots.into_iter().map(|s| s.unwrap_or(0.0)).collect() });
        reports.push(report);
    }
    if series.is_empty() {
        return Err(Error::Data("no sessions in input".into()));
    }
    Ok((series, reports))
}

pub fn read_sessions_csv(path: &Path) -> Result<(Vec<ParticipantSeries>, Vec<IngestReport>)> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_sessions(std::io::BufReader::new(f))
}

/// One brushing session in the on-disk format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub participant_id: String,
    pub day: usize,
    pub time_of_day: usize,
    pub brushing_duration: f64,
    pub pressure_duration: f64,
}

pub fn write_sessions<W: Write>(rows: &[SessionRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases_missing_and_duplicates() {
        let csv = "\
User_ID,Day,Session,Brush_Duration,Pressure
a,1,morning,130,10
a,1,morning,50,0
a,2,evening,200,0
a,71,morning,100,0
b,1,1,20,30
";
        let (series, reports) = read_sessions(csv.as_bytes()).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].id, "a");
        assert_eq!(series[0].oscb.len(), 140);
        assert_eq!(series[0].oscb[0], 120.0);
        assert_eq!(series[0].oscb[1], 0.0);
        assert_eq!(series[0].oscb[3], 180.0);
        assert_eq!(reports[0].duplicate_sessions, 1);
        assert_eq!(reports[0].rows_after_day_70, 1);
        assert_eq!(reports[0].missing_sessions, 138);
        assert_eq!(series[1].oscb[1], 0.0);
    }

    #[test]
    fn zero_based_days_are_shifted() {
        let csv = "participant,day,time_of_day,brushing_duration,pressure_duration\np,0,0,60,0\np,1,1,70,0\n";
        let (s, _) = read_sessions(csv.as_bytes()).unwrap();
        assert_eq!(s[0].oscb[0], 60.0);
        assert_eq!(s[0].oscb[3], 70.0);
    }

    #[test]
    fn bad_input_is_a_data_error() {
        assert!(matches!(read_sessions("x,y\n1,2\n".as_bytes()), Err(Error::Data(_))));
        let bad_tod = "participant,day,time_of_day,brushing_duration,pressure_duration\np,1,noon,1,0\n";
        assert!(matches!(read_sessions(bad_tod.as_bytes()), Err(Error::Data(_))));
        let neg = "participant,day,time_of_day,brushing_duration,pressure_duration\np,1,0,-1,0\n";
        assert!(matches!(read_sessions(neg.as_bytes()), Err(Error::Data(_))));
        assert!(matches!(read_sessions_csv(Path::new("/nonexistent/file.csv")), Err(Error::Io(_))));
    }

    #[test]
    fn write_then_read_roundtrip() {
        let rows: Vec<SessionRow> = (1..=70)
            .flat_map(|d| {
                (0..2).map(move |tod| SessionRow {
                    participant_id: "z".into(),
                    day: d,
                    time_of_day: tod,
                    brushing_duration: (d * 2 + tod) as f64 + 0.25,
                    pressure_duration: 0.0,
                })
            })
            .collect();
        let mut buf = Vec::new();
        write_sessions(&rows, &mut buf).unwrap();
        let (s, _) = read_sessions(buf.as_slice()).unwrap();
        for (t, q) in s[0].oscb.iter().enumerate() {
            assert_eq!(*q, rows[t].brushing_duration);
        }
    }
}
