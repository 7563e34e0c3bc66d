use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_features, check_params, RewardModel, ALPHABET};
use crate::{Error, Result};

/// One-hot linear reward: a weight per (position, value) plus a per-prompt
/// offset. Parameter layout: `dimension * 4` weights, then `n_prompts` offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearReward {
    dimension: usize,
    n_prompts: usize,
    params: Vec<f64>,
}

impl LinearReward {
    pub fn zeros(n_prompts: usize, dimension: usize) -> Self {
        Self { dimension, n_prompts, params: vec![0.0; dimension * ALPHABET + n_prompts] }
    }

    pub fn from_params(n_prompts: usize, dimension: usize, params: Vec<f64>) -> Result<Self> {
        check_params(dimension * ALPHABET + n_prompts, params.len())?;
        Ok(Self { dimension, n_prompts, params })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_prompts(&self) -> usize {
        self.n_prompts
    }

    fn offset_index(&self, prompt_id: u32) -> Result<usize> {
        let p = prompt_id as usize;
        if p >= self.n_prompts {
            return Err(Error::OutOfDomain(format!(
                "prompt {prompt_id} outside a {}-prompt linear model",
                self.n_prompts
            )));
        }
        Ok(self.dimension * ALPHABET + p)
    }
}

impl RewardModel for LinearReward {
    fn kind(&self) -> &'static str {
        "linear"
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn score(&self, prompt_id: u32, features: &[u8]) -> Result<f64> {
        check_features(features, self.dimension)?;
        let offset = self.params[self.offset_index(prompt_id)?];
        Ok(features.iter().enumerate().fold(offset, |acc, (i, &f)| acc + self.params[i * ALPHABET + f as usize]))
    }

    fn accumulate_gradient(&self, prompt_id: u32, features: &[u8], scale: f64, grad: &mut [f64]) -> Result<()> {
        check_params(self.params.len(), grad.len())?;
        check_features(features, self.dimension)?;
        grad[self.offset_index(prompt_id)?] += scale;
        for (i, &f) in features.iter().enumerate() {
            grad[i * ALPHABET + f as usize] += scale;
        }
        Ok(())
    }
}
