use alloc::vec::Vec;

use rand::Rng;

use super::{check_features, check_params, RewardModel, ALPHABET};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

/// Default hidden width.
pub const DEFAULT_HIDDEN: usize = 64;
/// Initial parameters are uniform on `[-INIT_SCALE, INIT_SCALE]`.
pub const INIT_SCALE: f64 = 0.1;

/// One-hidden-layer tanh perceptron over a one-hot input.
///
/// The input is the one-hot of `prompt_id mod n_prompts` followed by a one-hot
/// per feature position, so exactly `dimension + 1` inputs are active and the
/// first layer reduces to a sum of `dimension + 1` weight columns.
///
/// Parameter layout: `W1` (`hidden x inputs`, row-major), `b1` (`hidden`),
/// `w2` (`hidden`), `b2` (1).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpReward {
    n_prompts: usize,
    dimension: usize,
    hidden: usize,
    params: Vec<f64>,
}

impl MlpReward {
    pub fn param_count(n_prompts: usize, dimension: usize, hidden: usize) -> usize {
        let inputs = n_prompts + dimension * ALPHABET;
        hidden * inputs + 2 * hidden + 1
    }

    pub fn new_random(n_prompts: usize, dimension: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, Stream::ModelInit, 0);
        let n = Self::param_count(n_prompts, dimension, hidden);
        let params = (0..n).map(|_| rng.gen_range(-INIT_SCALE..=INIT_SCALE)).collect();
        Self::from_params(n_prompts, dimension, hidden, params)
    }

    pub fn from_params(n_prompts: usize, dimension: usize, hidden: usize, params: Vec<f64>) -> Result<Self> {
        if hidden == 0 || n_prompts == 0 || dimension == 0 {
            return Err(Error::InvalidParameter("mlp needs hidden width, prompts and dimension >= 1".into()));
        }
        check_params(Self::param_count(n_prompts, dimension, hidden), params.len())?;
        Ok(Self { n_prompts, dimension, hidden, params })
    }

    pub fn n_prompts(&self) -> usize {
        self.n_prompts
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn inputs(&self) -> usize {
        self.n_prompts + self.dimension * ALPHABET
    }

    fn active_inputs<'a>(&'a self, prompt_id: u32, features: &'a [u8]) -> impl Iterator<Item = usize> + 'a {
        let p = prompt_id as usize % self.n_prompts;
        core::iter::once(p)
            .chain(features.iter().enumerate().map(move |(i, &f)| self.n_prompts + i * ALPHABET + f as usize))
    }

    /// Hidden activations for one input.
    fn hidden_activations(&self, prompt_id: u32, features: &[u8]) -> Vec<f64> {
        let inputs = self.inputs();
        let b1 = self.hidden * inputs;
        (0..self.hidden)
            .map(|j| {
                let row = &self.params[j * inputs..(j + 1) * inputs];
                let pre = self.active_inputs(prompt_id, features).fold(self.params[b1 + j], |acc, k| acc + row[k]);
                libm::tanh(pre)
            })
            .collect()
    }
}

impl RewardModel for MlpReward {
    fn kind(&self) -> &'static str {
        "mlp"
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn score(&self, prompt_id: u32, features: &[u8]) -> Result<f64> {
        check_features(features, self.dimension)?;
        let z = self.hidden_activations(prompt_id, features);
        let w2 = self.hidden * self.inputs() + self.hidden;
        let b2 = self.params[w2 + self.hidden];
        Ok(z.iter().zip(&self.params[w2..w2 + self.hidden]).fold(b2, |acc, (z, w)| acc + z * w))
    }

    fn accumulate_gradient(&self, prompt_id: u32, features: &[u8], scale: f64, grad: &mut [f64]) -> Result<()> {
        check_params(self.params.len(), grad.len())?;
        check_features(features, self.dimension)?;
        let inputs = self.inputs();
        let b1 = self.hidden * inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden;
        let z = self.hidden_activations(prompt_id, features);

        grad[b2] += scale;
        for (j, &zj) in z.iter().enumerate() {
            grad[w2 + j] += scale * zj;
            let back = scale * self.params[w2 + j] * (1.0 - zj * zj);
            grad[b1 + j] += back;
            for k in self.active_inputs(prompt_id, features) {
                grad[j * inputs + k] += back;
            }
        }
        Ok(())
    }
}
