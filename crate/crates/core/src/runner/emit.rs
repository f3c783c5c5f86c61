use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::windows::{MetricsRecord, WindowSpan};
use super::{RunMeta, SimOutput};

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("failed to write {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
}

fn io_failure(path: &Path) -> impl FnOnce(io::Error) -> EmitError + '_ {
    move |source| EmitError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize)]
pub struct WindowEntry {
    #[serde(flatten)]
    pub span: WindowSpan,
    pub metrics: MetricsRecord,
}

/// JSON summary document.
#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub run: &'a RunMeta,
    pub windows: Vec<WindowEntry>,
}

impl<'a> Summary<'a> {
    pub fn of(out: &'a SimOutput) -> Self {
        Self {
            run: &out.meta,
            windows: out
                .windows
                .iter()
                .map(|w| WindowEntry {
                    span: w.span,
                    metrics: MetricsRecord::from(&w.metrics),
                })
                .collect(),
        }
    }
}

/// Writes the time series as CSV: a `time` column followed by every channel.
/// Values use the shortest representation that parses back to the same
/// `f64`.
pub fn write_csv<W: Write>(out: &SimOutput, sink: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let header = std::iter::once("time").chain(out.channels.iter().map(|(n, _)| n.as_str()));
    w.write_record(header)?;
    let mut row = Vec::with_capacity(out.channels.len() + 1);
    for (i, t) in out.time.iter().enumerate() {
        row.clear();
        row.push(t.to_string());
        row.extend(out.channels.iter().map(|(_, v)| v[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn write_summary<W: Write>(out: &SimOutput, mut sink: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut sink, &Summary::of(out))?;
    sink.write_all(b"\n")
}

/// Writes `csv_path` and `json_path`.
pub fn emit(out: &SimOutput, csv_path: &Path, json_path: &Path) -> Result<(), EmitError> {
    let csv_file = File::create(csv_path).map_err(io_failure(csv_path))?;
    write_csv(out, BufWriter::new(csv_file)).map_err(io_failure(csv_path))?;
    let json_file = File::create(json_path).map_err(io_failure(json_path))?;
    let mut sink = BufWriter::new(json_file);
    write_summary(out, &mut sink).map_err(io_failure(json_path))?;
    sink.flush().map_err(io_failure(json_path))
}
