use std::io::Write;

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::record::{Summary, SummaryRow, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Jsonl,
    Csv,
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    summary: &'a Summary,
}

fn io_err(e: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: "<output>".into(),
        source: e,
    }
}

/// One record per line in trial order, then `{"summary": ...}`. LF endings.
pub fn write_jsonl<W: Write>(mut w: W, records: &[TrialRecord], summary: &Summary) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| HarnessError::Config(e.to_string()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    serde_json::to_writer(&mut w, &SummaryLine { summary }).map_err(|e| HarnessError::Config(e.to_string()))?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Summary rows only, flattened.
pub fn write_csv<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    wtr.flush().map_err(io_err)
}

/// Parse a JSONL stream back into records, skipping the summary line.
pub fn read_records(text: &str) -> Result<Vec<TrialRecord>> {
    text.lines()
        .filter(|l| !l.starts_with("{\"summary\""))
        .map(|l| serde_json::from_str(l).map_err(|e| HarnessError::Config(e.to_string())))
        .collect()
}
