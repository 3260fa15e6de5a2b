//! Result rows and their CSV / JSON serialization.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub trial: usize,
    pub axis1: String,
    pub axis2: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<Row>,
}

impl ExperimentResult {
    /// Mean over trials of one `(axis1, axis2, metric)` series.
    pub fn mean_of(&self, axis1: &str, axis2: &str, metric: &str) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.axis1 == axis1 && r.axis2 == axis2 && r.metric == metric)
            .map(|r| r.value)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown format `{s}` (known: csv, json)"))),
        }
    }
}

/// Formats with 12 significant digits, fixed notation for moderate
/// magnitudes and scientific otherwise.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.11e}");
    let exp: i32 = sci.split_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let (m, e) = sci.split_once('e').unwrap_or((&sci, "0"));
        let m = if m.contains('.') { m.trim_end_matches('0').trim_end_matches('.') } else { m };
        format!("{m}e{e}")
    }
}

/// The value as printed, parsed back.
pub fn round_sig(v: f64) -> f64 {
    format_sig(v).parse().unwrap_or(v)
}

const HEADER: [&str; 8] = ["experiment", "seed", "trial", "axis1", "axis2", "metric_name", "value", "config_hash"];

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn write_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(HEADER).map_err(ser)?;
    let seed = result.seed.to_string();
    for r in &result.rows {
        w.write_record([
            result.experiment.as_str(),
            &seed,
            &r.trial.to_string(),
            &r.axis1,
            &r.axis2,
            &r.metric,
            &format_sig(r.value),
            &result.config_hash,
        ])
        .map_err(ser)?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))
}

pub fn write_json<W: Write>(result: &ExperimentResult, mut out: W) -> Result<()> {
    let mut rounded = result.clone();
    for r in &mut rounded.rows {
        r.value = round_sig(r.value);
    }
    serde_json::to_writer_pretty(&mut out, &rounded).map_err(|e| Error::Serialization(e.to_string()))?;
    out.write_all(b"\n").map_err(|e| Error::Serialization(e.to_string()))
}

pub fn emit_results(result: &ExperimentResult, format: Format, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut buf = BufWriter::new(file);
    match format {
        Format::Csv => write_csv(result, &mut buf)?,
        Format::Json => write_json(result, &mut buf)?,
    }
    buf.flush().map_err(io_err(path))
}

/// Reads rows back from a CSV written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<ExperimentResult> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::Reader::from_reader(file);
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    let headers = rdr.headers().map_err(ser)?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Serialization(format!("unexpected CSV header in {}", path.display())));
    }
    let mut result = ExperimentResult { experiment: String::new(), seed: 0, config_hash: String::new(), rows: Vec::new() };
    for rec in rdr.records() {
        let rec = rec.map_err(ser)?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let num = |i: usize| -> Result<f64> {
            rec.get(i).unwrap_or("").parse().map_err(|_| Error::Serialization(format!("bad number in column {i}")))
        };
        result.experiment = field(0);
        result.seed = num(1)? as u64;
        result.config_hash = field(7);
        result.rows.push(Row { trial: num(2)? as usize, axis1: field(3), axis2: field(4), metric: field(5), value: num(6)? });
    }
    Ok(result)
}
