//! Reward checkpoints: a `#meta` header and one real per line.
//!
//! | kind      | header keys                                   | body                          |
//! |-----------|-----------------------------------------------|-------------------------------|
//! | `tabular` | `dim prompts storage=dense n_params`          | cell values                   |
//! | `tabular` | `dim prompts storage=hashed hashed_seed`      | empty                         |
//! | `linear`  | `dim prompts n_params`                        | weights, then prompt offsets  |
//! | `mlp`     | `dim prompts hidden n_params`                 | W1, b1, w2, b2                |
//! | `policy`  | `dim prompts beta n_params`                   | policy log-probs, then reference log-probs |

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use tiepref_core::reward::{
    normalize_log_probs, AnyReward, LinearReward, MlpReward, PolicyLogRatioReward, RewardModel, TabularReward, ALPHABET,
};

use crate::meta::{Meta, MetaError};

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line 1: {0}")]
    Header(#[from] MetaError),
    #[error("line {line}: {value:?} is not a real number")]
    Value { line: usize, value: String },
    #[error("unknown reward kind {0:?}")]
    Kind(String),
    #[error("header declares {expected} values but the file holds {actual}")]
    Length { expected: usize, actual: usize },
    #[error(transparent)]
    Model(#[from] tiepref_core::Error),
}

pub fn write_checkpoint<W: Write>(model: &AnyReward, out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    let n = model.num_params();
    let mut body: Vec<f64> = model.params().to_vec();
    match model {
        AnyReward::Tabular(m) => match m.hashed_seed() {
            Some(seed) => writeln!(
                out,
                "#meta kind=tabular dim={} prompts={} storage=hashed hashed_seed={seed}",
                m.dimension(),
                m.n_prompts()
            )?,
            None => writeln!(
                out,
                "#meta kind=tabular dim={} prompts={} storage=dense n_params={n}",
                m.dimension(),
                m.n_prompts()
            )?,
        },
        AnyReward::Linear(m) => {
            writeln!(out, "#meta kind=linear dim={} prompts={} n_params={n}", m.dimension(), m.n_prompts())?
        }
        AnyReward::Mlp(m) => writeln!(
            out,
            "#meta kind=mlp dim={} prompts={} hidden={} n_params={n}",
            m.dimension(),
            m.n_prompts(),
            m.hidden()
        )?,
        AnyReward::Policy(m) => {
            writeln!(
                out,
                "#meta kind=policy dim={} prompts={} beta={} n_params={n}",
                m.dimension(),
                m.n_prompts(),
                m.beta()
            )?;
            // Logits are stored normalized; scores are unchanged by the shift.
            normalize_log_probs(&mut body, ALPHABET.pow(m.dimension() as u32));
            body.extend_from_slice(m.reference_logprobs());
        }
    }
    for v in body {
        writeln!(out, "{v}")?;
    }
    out.flush()
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<AnyReward, CheckpointError> {
    let mut lines = BufReader::new(input).lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(MetaError::Missing.into()),
    };
    let meta = Meta::parse(&header)?;
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let v: f64 = text.parse().map_err(|_| CheckpointError::Value { line: i + 2, value: text.to_owned() })?;
        values.push(v);
    }

    let dim: usize = meta.required("dim")?;
    let prompts: usize = meta.required("prompts")?;
    let kind = meta.raw("kind").ok_or(MetaError::Absent("kind"))?;
    if kind == "tabular" && meta.raw("storage") == Some("hashed") {
        expect_len(0, &values)?;
        return Ok(AnyReward::Tabular(TabularReward::hashed(prompts, dim, meta.required("hashed_seed")?)));
    }
    let n: usize = meta.required("n_params")?;
    let model = match kind {
        "tabular" => {
            expect_len(n, &values)?;
            AnyReward::Tabular(TabularReward::from_values(prompts, dim, values)?)
        }
        "linear" => {
            expect_len(n, &values)?;
            AnyReward::Linear(LinearReward::from_params(prompts, dim, values)?)
        }
        "mlp" => {
            expect_len(n, &values)?;
            AnyReward::Mlp(MlpReward::from_params(prompts, dim, meta.required("hidden")?, values)?)
        }
        "policy" => {
            expect_len(2 * n, &values)?;
            let reference = values.split_off(n);
            AnyReward::Policy(PolicyLogRatioReward::new(prompts, dim, meta.required("beta")?, values, reference)?)
        }
        other => return Err(CheckpointError::Kind(other.to_owned())),
    };
    Ok(model)
}

fn expect_len(expected: usize, values: &[f64]) -> Result<(), CheckpointError> {
    if values.len() != expected {
        return Err(CheckpointError::Length { expected, actual: values.len() });
    }
    Ok(())
}

pub fn save_checkpoint(model: &AnyReward, path: &Path) -> std::io::Result<()> {
    write_checkpoint(model, File::create(path)?)
}

pub fn load_checkpoint(path: &Path) -> Result<AnyReward, CheckpointError> {
    read_checkpoint(File::open(path)?)
}
