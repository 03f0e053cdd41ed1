//! Versioned CSV emission and reading.
//!
//! Every file starts with a `#schema=<name>.v<version>` line followed by a
//! header row; readers check the schema line and skip it.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::experiment::Cell;
use super::trial::LogRow;
use crate::error::{Error, Result};

pub const SUMMARY_SCHEMA: &str = "summary.v1";
pub const TRIALS_SCHEMA: &str = "trials.v1";
pub const ALARMS_SCHEMA: &str = "alarms.v1";
pub const GRID_SCHEMA: &str = "grid.v1";
pub const PRIOR_PERIOD_SCHEMA: &str = "prior_period.v1";
pub const LOG_SCHEMA: &str = "log.v1";
pub const DECISIONS_SCHEMA: &str = "decisions.v1";

/// Writes `rows` with the schema line. Floats use the shortest exact
/// representation, so files round-trip losslessly.
pub fn write_csv<T: Serialize, W: Write>(schema: &str, rows: &[T], mut out: W) -> Result<()> {
    writeln!(out, "#schema={schema}")?;
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    if rows.is_empty() {
        // Still emit the header so consumers see the columns.
        w.flush()?;
        drop(w);
        return Ok(());
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(schema: &str, rows: &[T], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut buf = std::io::BufWriter::new(f);
    write_csv(schema, rows, &mut buf)?;
    buf.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned, R: Read>(schema: &str, input: R) -> Result<Vec<T>> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let found = first.trim().strip_prefix("#schema=").unwrap_or("");
    if found != schema {
        return Err(Error::Data(format!("expected schema {schema}, found '{}'", first.trim())));
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn read_csv_file<T: DeserializeOwned>(schema: &str, path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_csv(schema, f)
}

/// Identifies the trial a decision-log row belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct DecisionKey {
    pub candidate: String,
    pub variant: String,
    pub xi1: f64,
    pub xi2: f64,
    pub prior_trigger: usize,
    pub trial: usize,
}

const KEY_COLUMNS: usize = 6;

/// Every kept decision log, each row prefixed with its trial key.
pub fn decision_rows(cells: &[Cell]) -> Vec<(DecisionKey, LogRow)> {
    let mut out = Vec::new();
    for c in cells {
        for r in &c.results {
            let key = DecisionKey {
                candidate: c.candidate.label(),
                variant: c.variant.label(),
                xi1: c.settings.xi1,
                xi2: c.settings.xi2,
                prior_trigger: c.settings.prior_trigger,
                trial: r.index,
            };
            out.extend(r.logs.iter().flatten().map(|l| (key.clone(), l.clone())));
        }
    }
    out
}

/// Reads a file written from [`decision_rows`]; the csv crate cannot
/// deserialize a flattened tuple, so each record is split at the key.
pub fn read_decisions<R: Read>(input: R) -> Result<Vec<(DecisionKey, LogRow)>> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim().strip_prefix("#schema=") != Some(DECISIONS_SCHEMA) {
        return Err(Error::Data(format!("expected schema {DECISIONS_SCHEMA}, found '{}'", first.trim())));
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.len() <= KEY_COLUMNS {
        return Err(Error::Data("decision log has too few columns".into()));
    }
    let split = |rec: &csv::StringRecord, range: std::ops::Range<usize>| rec.iter().skip(range.start).take(range.len()).collect::<csv::StringRecord>();
    let (kh, lh) = (split(&headers, 0..KEY_COLUMNS), split(&headers, KEY_COLUMNS..headers.len()));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let key: DecisionKey = split(&rec, 0..KEY_COLUMNS).deserialize(Some(&kh))?;
        let log: LogRow = split(&rec, KEY_COLUMNS..rec.len()).deserialize(Some(&lh))?;
        out.push((key, log));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::experiment::{Metric, SummaryRow};

    #[test]
    fn roundtrip_is_lossless() {
        let rows = vec![
            SummaryRow { candidate: "b5.15-weekly-full".into(), variant: "STAT_LOW_R-z8".into(), metric: Metric::Average, value: 0.1 + 0.2, se: 1e-300, trials: 3 },
            SummaryRow { candidate: "c".into(), variant: "v".into(), metric: Metric::P25, value: f64::NAN, se: -0.0, trials: 0 },
        ];
        let mut buf = Vec::new();
        write_csv(SUMMARY_SCHEMA, &rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#schema=summary.v1\ncandidate,variant,metric,value,se,trials\n"), "{text}");
        let back: Vec<SummaryRow> = read_csv(SUMMARY_SCHEMA, buf.as_slice()).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].value.is_nan());
        assert_eq!(back[1].se.to_bits(), (-0.0f64).to_bits());
        assert!(read_csv::<SummaryRow, _>(GRID_SCHEMA, buf.as_slice()).is_err());
    }

    #[test]
    fn keyed_decisions_roundtrip() {
        let key = |trial| DecisionKey { candidate: "c".into(), variant: "v".into(), xi1: 80.0, xi2: 40.0, prior_trigger: 15, trial };
        let rows = vec![(key(0), LogRow::for_test(0, 1, 1, 0.3)), (key(1), LogRow::for_test(2, 7, 0, 0.1 + 0.2))];
        let mut buf = Vec::new();
        write_csv(DECISIONS_SCHEMA, &rows, &mut buf).unwrap();
        assert_eq!(read_decisions(buf.as_slice()).unwrap(), rows);
        let mut plain = Vec::new();
        write_csv(LOG_SCHEMA, &[rows[0].1.clone()], &mut plain).unwrap();
        assert!(read_decisions(plain.as_slice()).is_err());
    }
}
