//! Reward parameterizations `r_ψ(x, y)` with analytic parameter gradients.
//!
//! Every model scores a prompt id and a response feature vector over the
//! alphabet `{0, 1, 2, 3}`. Parameters are exposed as one flat slice so the
//! optimizer never needs to know the architecture.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::ResponseVector;
use crate::{Error, Result};

mod linear;
mod mlp;
mod policy;
mod tabular;

pub use linear::LinearReward;
pub use mlp::{MlpReward, DEFAULT_HIDDEN, INIT_SCALE};
pub use policy::{normalize_log_probs, PolicyLogRatioReward};
pub use tabular::{random_ground_truth, TabularReward, DENSE_CELL_LIMIT, TRUTH_HIGH, TRUTH_LOW};

/// Size of the per-position feature alphabet.
pub const ALPHABET: usize = 4;

pub trait RewardModel {
    /// Short identifier written into checkpoints.
    fn kind(&self) -> &'static str;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    fn num_params(&self) -> usize {
        self.params().len()
    }

    fn score(&self, prompt_id: u32, features: &[u8]) -> Result<f64>;

    /// Adds `scale * ∂score/∂ψ` into `grad`.
    fn accumulate_gradient(&self, prompt_id: u32, features: &[u8], scale: f64, grad: &mut [f64]) -> Result<()>;

    fn score_gradient(&self, prompt_id: u32, features: &[u8]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.num_params()];
        self.accumulate_gradient(prompt_id, features, 1.0, &mut grad)?;
        Ok(grad)
    }
}

/// Preference strength `r(x, a) - r(x, b)`.
pub fn delta<M: RewardModel + ?Sized>(
    model: &M,
    prompt_id: u32,
    a: &ResponseVector,
    b: &ResponseVector,
) -> Result<f64> {
    Ok(model.score(prompt_id, a.features())? - model.score(prompt_id, b.features())?)
}

/// Number of distinct responses of the given dimension, if it fits in `usize`.
pub fn responses_per_prompt(dimension: usize) -> Option<usize> {
    u32::try_from(dimension).ok().and_then(|d| ALPHABET.checked_pow(d))
}

pub(crate) fn check_features(features: &[u8], dimension: usize) -> Result<()> {
    if features.len() != dimension {
        return Err(Error::OutOfDomain(format!("response has {} features, model expects {dimension}", features.len())));
    }
    if let Some(bad) = features.iter().find(|&&f| f as usize >= ALPHABET) {
        return Err(Error::OutOfDomain(format!("feature value {bad} outside 0..=3")));
    }
    Ok(())
}

/// Base-4 index of a response, most significant position first.
pub(crate) fn response_code(features: &[u8]) -> usize {
    features.iter().fold(0usize, |acc, &f| acc * ALPHABET + f as usize)
}

/// Inverse of the base-4 response index.
pub fn response_from_code(mut code: usize, dimension: usize) -> Vec<u8> {
    let mut out = vec![0u8; dimension];
    for slot in out.iter_mut().rev() {
        *slot = (code % ALPHABET) as u8;
        code /= ALPHABET;
    }
    out
}

fn check_params(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Shape { expected, actual });
    }
    Ok(())
}

/// Reward model chosen at runtime (CLI, checkpoints).
#[derive(Debug, Clone, PartialEq)]
pub enum AnyReward {
    Tabular(TabularReward),
    Linear(LinearReward),
    Mlp(MlpReward),
    Policy(PolicyLogRatioReward),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $body:expr) => {
        match $self {
            AnyReward::Tabular($m) => $body,
            AnyReward::Linear($m) => $body,
            AnyReward::Mlp($m) => $body,
            AnyReward::Policy($m) => $body,
        }
    };
}

impl RewardModel for AnyReward {
    fn kind(&self) -> &'static str {
        dispatch!(self, m => m.kind())
    }

    fn params(&self) -> &[f64] {
        dispatch!(self, m => m.params())
    }

    fn params_mut(&mut self) -> &mut [f64] {
        dispatch!(self, m => m.params_mut())
    }

    fn score(&self, prompt_id: u32, features: &[u8]) -> Result<f64> {
        dispatch!(self, m => m.score(prompt_id, features))
    }

    fn accumulate_gradient(&self, prompt_id: u32, features: &[u8], scale: f64, grad: &mut [f64]) -> Result<()> {
        dispatch!(self, m => m.accumulate_gradient(prompt_id, features, scale, grad))
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for code in 0..64 {
            let f = response_from_code(code, 3);
            assert_eq!(response_code(&f), code);
        }
        assert_eq!(responses_per_prompt(3), Some(64));
        assert_eq!(responses_per_prompt(40), None);
    }

    #[test]
    fn feature_checks() {
        assert!(check_features(&[0, 3, 1], 3).is_ok());
        assert!(matches!(check_features(&[0, 4, 1], 3), Err(Error::OutOfDomain(_))));
        assert!(matches!(check_features(&[0, 1], 3), Err(Error::OutOfDomain(_))));
    }
}
