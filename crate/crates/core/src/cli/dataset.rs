//! CSV ingestion and output of multichannel series.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::MultiSignal;

use super::output::write_atomic;

/// Named channels read from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    /// Sampling rate in samples per second; carried into reports only.
    pub rate: Option<f64>,
    pub signal: MultiSignal,
}

impl Dataset {
    pub fn new(names: Vec<String>, signal: MultiSignal) -> Result<Self> {
        if names.len() != signal.channel_count() {
            return Err(Error::InvalidParameters(format!(
                "{} names for {} channels",
                names.len(),
                signal.channel_count()
            )));
        }
        Ok(Self {
            names,
            rate: None,
            signal,
        })
    }

    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestOptions {
    /// Subtract each channel's mean.
    pub demean: bool,
    /// Columns to keep, by header name or 1-based position, in this order.
    pub columns: Option<Vec<String>>,
    pub rate: Option<f64>,
}

/// Reads a CSV file with a header row and a numeric body. Lines starting
/// with `#` are skipped.
pub fn ingest(path: &Path, options: &IngestOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_or_format(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| io_or_format(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "missing header row".into(),
        });
    }
    let keep = select_columns(path, &header, options.columns.as_deref())?;
    let mut channels = vec![Vec::new(); keep.len()];
    for record in reader.records() {
        let record = record.map_err(|e| io_or_format(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(Error::Ingest {
                path: path.to_path_buf(),
                row: line,
                column: format!("{} fields", record.len()),
                message: format!("expected {} fields as in the header", header.len()),
            });
        }
        for (k, &c) in keep.iter().enumerate() {
            let cell = &record[c];
            let fail = |message: String| Error::Ingest {
                path: path.to_path_buf(),
                row: line,
                column: header[c].clone(),
                message,
            };
            if cell.is_empty() {
                return Err(fail("missing value".into()));
            }
            let value: f64 = cell
                .parse()
                .map_err(|_| fail(format!("not a number: {cell:?}")))?;
            if !value.is_finite() {
                return Err(fail(format!("non-finite value {cell:?}")));
            }
            channels[k].push(value);
        }
    }
    if channels[0].is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    if options.demean {
        for channel in &mut channels {
            let mean = channel.iter().sum::<f64>() / channel.len() as f64;
            channel.iter_mut().for_each(|v| *v -= mean);
        }
    }
    Ok(Dataset {
        names: keep.iter().map(|&c| header[c].clone()).collect(),
        rate: options.rate,
        signal: MultiSignal::new(channels)?,
    })
}

fn select_columns(path: &Path, header: &[String], wanted: Option<&[String]>) -> Result<Vec<usize>> {
    let Some(wanted) = wanted else {
        return Ok((0..header.len()).collect());
    };
    wanted
        .iter()
        .map(|w| {
            header
                .iter()
                .position(|h| h == w)
                .or_else(|| w.parse::<usize>().ok().filter(|&k| (1..=header.len()).contains(&k)).map(|k| k - 1))
                .ok_or_else(|| Error::Format {
                    path: path.to_path_buf(),
                    message: format!("no column named {w:?}"),
                })
        })
        .collect()
}

fn io_or_format(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!("checked to be an I/O error"),
        }
    } else {
        Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

/// Writes the dataset as CSV with 17 significant digits per value.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{}", dataset.names.join(","))?;
    let signal = &dataset.signal;
    for t in 0..signal.len() {
        let row: Vec<String> = (0..signal.channel_count())
            .map(|i| format!("{:.16e}", signal.channel(i)[t]))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    write_atomic(path, &out)
}
