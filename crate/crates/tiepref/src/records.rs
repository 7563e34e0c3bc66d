//! Line-delimited preference records.
//!
//! ```text
//! #meta seed=7 theta=5 dimension=4 n_records=2 n_ties=1
//! {"prompt_id":0,"response_a":[0,3,1,2],"response_b":[1,1,0,2],"label":"tie"}
//! {"prompt_id":0,"response_a":[2,0,0,1],"response_b":[3,3,1,0],"label":"first"}
//! ```
//!
//! `seed` and `theta` may be `none` for datasets not produced by the generator.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tiepref_core::dataset::{ComparisonRecord, PreferenceDataset, PreferenceLabel, ResponseVector};

use crate::meta::{Meta, MetaError};

#[derive(Debug, thiserror::Error)]
pub enum RecordsError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line 1: {0}")]
    Header(#[from] MetaError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("header declares {field}={declared} but the file holds {actual}")]
    Count { field: &'static str, declared: usize, actual: usize },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    prompt_id: u32,
    response_a: Vec<u8>,
    response_b: Vec<u8>,
    label: String,
}

fn optional<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_owned(), |v| v.to_string())
}

pub fn write_records<W: Write>(dataset: &PreferenceDataset, out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(
        out,
        "#meta seed={} theta={} dimension={} n_records={} n_ties={}",
        optional(dataset.seed),
        optional(dataset.theta),
        dataset.dimension(),
        dataset.len(),
        dataset.n_ties()
    )?;
    for r in dataset.records() {
        let line = Line {
            prompt_id: r.prompt_id,
            response_a: r.response_a.features().to_vec(),
            response_b: r.response_b.features().to_vec(),
            label: r.label.as_str().to_owned(),
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_records<R: Read>(input: R) -> Result<PreferenceDataset, RecordsError> {
    let mut lines = BufReader::new(input).lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(MetaError::Missing.into()),
    };
    let meta = Meta::parse(&header)?;
    let dimension: usize = meta.required("dimension")?;
    let n_records: usize = meta.required("n_records")?;
    let n_ties: usize = meta.required("n_ties")?;
    let seed: Option<u64> = meta.optional("seed")?;
    let theta: Option<f64> = meta.optional("theta")?;

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let number = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line =
            serde_json::from_str(&line).map_err(|e| RecordsError::Parse { line: number, message: e.to_string() })?;
        let label = PreferenceLabel::parse(&parsed.label).ok_or_else(|| RecordsError::Parse {
            line: number,
            message: format!("unknown label {:?}, expected first, second or tie", parsed.label),
        })?;
        let invalid = |e: tiepref_core::Error| RecordsError::Invalid { line: number, message: e.to_string() };
        let a = ResponseVector::new(parsed.response_a).map_err(invalid)?;
        let b = ResponseVector::new(parsed.response_b).map_err(invalid)?;
        for v in [&a, &b] {
            if v.dimension() != dimension {
                return Err(RecordsError::Invalid {
                    line: number,
                    message: format!("response of length {} in a dimension-{dimension} dataset", v.dimension()),
                });
            }
        }
        records.push(ComparisonRecord::new(parsed.prompt_id, a, b, label).map_err(invalid)?);
    }

    let mut dataset = PreferenceDataset::new(dimension, records)
        .map_err(|e| RecordsError::Invalid { line: 1, message: e.to_string() })?;
    if dataset.len() != n_records {
        return Err(RecordsError::Count { field: "n_records", declared: n_records, actual: dataset.len() });
    }
    if dataset.n_ties() != n_ties {
        return Err(RecordsError::Count { field: "n_ties", declared: n_ties, actual: dataset.n_ties() });
    }
    dataset.seed = seed;
    dataset.theta = theta;
    Ok(dataset)
}

pub fn save_records(dataset: &PreferenceDataset, path: &Path) -> std::io::Result<()> {
    write_records(dataset, File::create(path)?)
}

pub fn load_records(path: &Path) -> Result<PreferenceDataset, RecordsError> {
    read_records(File::open(path)?)
}
