use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_features, check_params, response_code, responses_per_prompt, RewardModel};
use crate::{Error, Result};

/// Largest tolerated `|logsumexp|` of a prompt's log-probabilities.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// DPO-style implicit reward `β (log π(y|x) - log π_ref(y|x))` over toy tabular
/// policies, one categorical distribution over all `4^dimension` responses per
/// prompt.
///
/// The trainable parameters are the policy's logits; `log π` is the logit minus
/// the prompt's logsumexp, so the policy stays normalized under any update.
/// The per-prompt partition term of the reparameterization is not represented:
/// it is shared by both responses of a pair and cancels in every difference.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLogRatioReward {
    n_prompts: usize,
    dimension: usize,
    beta: f64,
    logits: Vec<f64>,
    reference: Vec<f64>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + libm::log(xs.iter().map(|x| libm::exp(x - m)).sum::<f64>())
}

/// Shifts each prompt block of `values` so it logsumexps to zero.
pub fn normalize_log_probs(values: &mut [f64], per_prompt: usize) {
    for block in values.chunks_mut(per_prompt) {
        let z = log_sum_exp(block);
        block.iter_mut().for_each(|v| *v -= z);
    }
}

impl PolicyLogRatioReward {
    pub fn new(
        n_prompts: usize,
        dimension: usize,
        beta: f64,
        policy_logprob: Vec<f64>,
        reference_logprob: Vec<f64>,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        let per = responses_per_prompt(dimension)
            .filter(|&p| p.checked_mul(n_prompts).is_some_and(|n| n <= super::DENSE_CELL_LIMIT))
            .ok_or_else(|| Error::InvalidParameter("policy table too large".into()))?;
        check_params(per * n_prompts, policy_logprob.len())?;
        check_params(per * n_prompts, reference_logprob.len())?;
        for (name, table) in [("policy", &policy_logprob), ("reference", &reference_logprob)] {
            for (p, block) in table.chunks(per).enumerate() {
                let z = log_sum_exp(block);
                if !(z.abs() <= NORMALIZATION_TOLERANCE) {
                    return Err(Error::InvalidParameter(format!(
                        "{name} log-probabilities of prompt {p} are not normalized (logsumexp {z})"
                    )));
                }
            }
        }
        Ok(Self { n_prompts, dimension, beta, logits: policy_logprob, reference: reference_logprob })
    }

    /// Policy initialized to the reference, so every reward is zero.
    pub fn from_reference(n_prompts: usize, dimension: usize, beta: f64, reference_logprob: Vec<f64>) -> Result<Self> {
        Self::new(n_prompts, dimension, beta, reference_logprob.clone(), reference_logprob)
    }

    /// Uniform reference and policy.
    pub fn uniform(n_prompts: usize, dimension: usize, beta: f64) -> Result<Self> {
        let per =
            responses_per_prompt(dimension).ok_or_else(|| Error::InvalidParameter("policy table too large".into()))?;
        let lp = -libm::log(per as f64);
        Self::from_reference(n_prompts, dimension, beta, vec![lp; per * n_prompts])
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_prompts(&self) -> usize {
        self.n_prompts
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn reference_logprobs(&self) -> &[f64] {
        &self.reference
    }

    fn per_prompt(&self) -> usize {
        self.logits.len() / self.n_prompts.max(1)
    }

    fn locate(&self, prompt_id: u32, features: &[u8]) -> Result<(usize, usize)> {
        check_features(features, self.dimension)?;
        let p = prompt_id as usize;
        if p >= self.n_prompts {
            return Err(Error::OutOfDomain(format!("prompt {prompt_id} outside a {}-prompt policy", self.n_prompts)));
        }
        let per = self.per_prompt();
        Ok((p * per, response_code(features)))
    }

    pub fn policy_logprob(&self, prompt_id: u32, features: &[u8]) -> Result<f64> {
        let (start, y) = self.locate(prompt_id, features)?;
        let block = &self.logits[start..start + self.per_prompt()];
        Ok(block[y] - log_sum_exp(block))
    }

    pub fn reference_logprob(&self, prompt_id: u32, features: &[u8]) -> Result<f64> {
        let (start, y) = self.locate(prompt_id, features)?;
        let block = &self.reference[start..start + self.per_prompt()];
        Ok(block[y] - log_sum_exp(block))
    }
}

impl RewardModel for PolicyLogRatioReward {
    fn kind(&self) -> &'static str {
        "policy"
    }

    fn params(&self) -> &[f64] {
        &self.logits
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn score(&self, prompt_id: u32, features: &[u8]) -> Result<f64> {
        Ok(self.beta * (self.policy_logprob(prompt_id, features)? - self.reference_logprob(prompt_id, features)?))
    }

    fn accumulate_gradient(&self, prompt_id: u32, features: &[u8], scale: f64, grad: &mut [f64]) -> Result<()> {
        check_params(self.logits.len(), grad.len())?;
        let (start, y) = self.locate(prompt_id, features)?;
        let per = self.per_prompt();
        let block = &self.logits[start..start + per];
        let z = log_sum_exp(block);
        let s = scale * self.beta;
        for (g, l) in grad[start..start + per].iter_mut().zip(block) {
            *g -= s * libm::exp(l - z);
        }
        grad[start + y] += s;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::{fd_score_gradient, max_rel_error};
    use super::super::{delta, response_from_code};
    use super::*;
    use crate::dataset::ResponseVector;

    fn random_table(n_prompts: usize, per: usize, salt: f64) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n_prompts * per).map(|i| ((i as f64 + salt) * 1.7).sin() * 2.0).collect();
        normalize_log_probs(&mut v, per);
        v
    }

    #[test]
    fn equal_tables_score_zero() {
        let r = random_table(2, 16, 0.3);
        let m = PolicyLogRatioReward::from_reference(2, 2, 0.1, r).unwrap();
        for code in 0..16 {
            assert_eq!(m.score(1, &response_from_code(code, 2)).unwrap(), 0.0);
        }
    }

    #[test]
    fn delta_is_beta_times_log_ratio_difference() {
        let m = PolicyLogRatioReward::new(1, 1, 0.1, random_table(1, 4, 1.0), random_table(1, 4, 2.0)).unwrap();
        let (w, l) = (ResponseVector::new(vec![2]).unwrap(), ResponseVector::new(vec![0]).unwrap());
        let d = delta(&m, 0, &w, &l).unwrap();
        let expect = 0.1
            * ((m.policy_logprob(0, &[2]).unwrap() - m.reference_logprob(0, &[2]).unwrap())
                - (m.policy_logprob(0, &[0]).unwrap() - m.reference_logprob(0, &[0]).unwrap()));
        assert!((d - expect).abs() < 1e-15);
    }

    #[test]
    fn rejects_unnormalized_tables() {
        let mut bad = random_table(1, 4, 0.0);
        bad[0] += 1e-6;
        assert!(PolicyLogRatioReward::from_reference(1, 1, 0.1, bad).is_err());
        assert!(PolicyLogRatioReward::uniform(1, 1, 0.0).is_err());
        let m = PolicyLogRatioReward::uniform(2, 1, 0.1).unwrap();
        assert!(matches!(m.score(2, &[0]), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn per_prompt_constant_cancels_in_delta() {
        let policy = random_table(2, 16, 0.5);
        let reference = random_table(2, 16, 4.0);
        let m = PolicyLogRatioReward::new(2, 2, 0.5, policy.clone(), reference.clone()).unwrap();
        let shift = |t: &[f64]| {
            let mut s: Vec<f64> = t.iter().enumerate().map(|(i, v)| v + if i < 16 { 3.7 } else { -11.0 }).collect();
            normalize_log_probs(&mut s, 16);
            s
        };
        let shifted = PolicyLogRatioReward::new(2, 2, 0.5, shift(&policy), shift(&reference)).unwrap();
        for p in 0..2u32 {
            for (a, b) in [(0usize, 5usize), (15, 3), (7, 8)] {
                let (a, b) = (
                    ResponseVector::new(response_from_code(a, 2)).unwrap(),
                    ResponseVector::new(response_from_code(b, 2)).unwrap(),
                );
                let d0 = delta(&m, p, &a, &b).unwrap();
                let d1 = delta(&shifted, p, &a, &b).unwrap();
                assert!((d0 - d1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            let mut m = PolicyLogRatioReward::new(
                2,
                2,
                0.7,
                random_table(2, 16, seed as f64),
                random_table(2, 16, 100.0 + seed as f64),
            )
            .unwrap();
            let x = response_from_code(seed * 3 % 16, 2);
            let fd = fd_score_gradient(&mut m, (seed % 2) as u32, &x);
            let g = m.score_gradient((seed % 2) as u32, &x).unwrap();
            assert!(max_rel_error(&g, &fd, 1e-4) < 1e-5);
        }
    }
}
