use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_features, check_params, response_code, responses_per_prompt, RewardModel};
use crate::rng::{hash_words, stream_rng, Stream};
use crate::{Error, Result};

/// Grids larger than this are never materialized.
pub const DENSE_CELL_LIMIT: usize = 1 << 22;

/// Ground-truth rewards are drawn uniformly from `[TRUTH_LOW, TRUTH_HIGH]`.
pub const TRUTH_LOW: f64 = -2.0;
pub const TRUTH_HIGH: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
enum Cells {
    Dense(Vec<f64>),
    /// Each cell is an independent uniform draw keyed by `(seed, prompt, response)`.
    Hashed {
        seed: u64,
    },
}

/// One reward per `(prompt, response)` cell.
///
/// Prompts at or beyond `n_prompts` are absent keys and score 0. A dense table
/// is trainable (one parameter per cell); a hashed table has no parameters and
/// serves as a ground truth on grids too large to store.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularReward {
    n_prompts: usize,
    dimension: usize,
    cells: Cells,
}

impl TabularReward {
    pub fn zeros(n_prompts: usize, dimension: usize) -> Result<Self> {
        let per = dense_size(n_prompts, dimension)?;
        Ok(Self { n_prompts, dimension, cells: Cells::Dense(vec![0.0; per]) })
    }

    /// Dense table from values laid out prompt-major, responses in base-4 order.
    pub fn from_values(n_prompts: usize, dimension: usize, values: Vec<f64>) -> Result<Self> {
        check_params(dense_size(n_prompts, dimension)?, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("tabular reward values must be finite".into()));
        }
        Ok(Self { n_prompts, dimension, cells: Cells::Dense(values) })
    }

    pub fn hashed(n_prompts: usize, dimension: usize, seed: u64) -> Self {
        Self { n_prompts, dimension, cells: Cells::Hashed { seed } }
    }

    pub fn n_prompts(&self) -> usize {
        self.n_prompts
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Seed of a hashed table, `None` for a dense one.
    pub fn hashed_seed(&self) -> Option<u64> {
        match self.cells {
            Cells::Hashed { seed } => Some(seed),
            Cells::Dense(_) => None,
        }
    }

    pub fn set(&mut self, prompt_id: u32, features: &[u8], value: f64) -> Result<()> {
        let idx = self.cell_index(prompt_id, features)?.ok_or_else(|| {
            Error::OutOfDomain(format!("prompt {prompt_id} outside a {}-prompt table", self.n_prompts))
        })?;
        match &mut self.cells {
            Cells::Dense(v) => v[idx] = value,
            Cells::Hashed { .. } => return Err(Error::InvalidParameter("hashed tables are read-only".into())),
        }
        Ok(())
    }

    fn cell_index(&self, prompt_id: u32, features: &[u8]) -> Result<Option<usize>> {
        check_features(features, self.dimension)?;
        if prompt_id as usize >= self.n_prompts {
            return Ok(None);
        }
        let per = responses_per_prompt(self.dimension).unwrap_or(usize::MAX);
        Ok(Some((prompt_id as usize).saturating_mul(per).saturating_add(response_code(features))))
    }
}

fn dense_size(n_prompts: usize, dimension: usize) -> Result<usize> {
    responses_per_prompt(dimension)
        .and_then(|per| per.checked_mul(n_prompts))
        .filter(|&n| n <= DENSE_CELL_LIMIT)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "{n_prompts} prompts x 4^{dimension} responses exceeds the dense table limit"
            ))
        })
}

fn hashed_cell(seed: u64, prompt_id: u32, features: &[u8]) -> f64 {
    let key = hash_words(seed, core::iter::once(prompt_id as u64).chain(features.iter().map(|&f| f as u64)));
    ChaCha8Rng::seed_from_u64(key).gen_range(TRUTH_LOW..=TRUTH_HIGH)
}

impl RewardModel for TabularReward {
    fn kind(&self) -> &'static str {
        "tabular"
    }

    fn params(&self) -> &[f64] {
        match &self.cells {
            Cells::Dense(v) => v,
            Cells::Hashed { .. } => &[],
        }
    }

    fn params_mut(&mut self) -> &mut [f64] {
        match &mut self.cells {
            Cells::Dense(v) => v,
            Cells::Hashed { .. } => &mut [],
        }
    }

    fn score(&self, prompt_id: u32, features: &[u8]) -> Result<f64> {
        let Some(idx) = self.cell_index(prompt_id, features)? else {
            return Ok(0.0);
        };
        Ok(match &self.cells {
            Cells::Dense(v) => v[idx],
            Cells::Hashed { seed } => hashed_cell(*seed, prompt_id, features),
        })
    }

    fn accumulate_gradient(&self, prompt_id: u32, features: &[u8], scale: f64, grad: &mut [f64]) -> Result<()> {
        check_params(self.num_params(), grad.len())?;
        let idx = self.cell_index(prompt_id, features)?;
        if let (Some(idx), Cells::Dense(_)) = (idx, &self.cells) {
            grad[idx] += scale;
        }
        Ok(())
    }
}

/// Random ground-truth reward: i.i.d. uniform cells on `[-2, 2]`.
///
/// The full grid is drawn from one seeded stream when it fits under
/// [`DENSE_CELL_LIMIT`]; larger grids are hashed per cell instead.
pub fn random_ground_truth(dimension: usize, n_prompts: usize, seed: u64) -> Result<TabularReward> {
    if dimension == 0 || n_prompts == 0 {
        return Err(Error::InvalidParameter("ground truth needs dimension and prompts >= 1".into()));
    }
    match dense_size(n_prompts, dimension) {
        Ok(n) => {
            let mut rng = stream_rng(seed, Stream::GroundTruth, 0);
            let values = (0..n).map(|_| rng.gen_range(TRUTH_LOW..=TRUTH_HIGH)).collect();
            TabularReward::from_values(n_prompts, dimension, values)
        }
        Err(_) => Ok(TabularReward::hashed(n_prompts, dimension, seed)),
    }
}
