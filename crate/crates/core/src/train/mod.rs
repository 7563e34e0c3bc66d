//! Training objectives, RMSprop, and the minibatch training loop.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::dataset::PreferenceDataset;
use crate::reward::RewardModel;
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result, TieModelParams};

mod objective;
mod rmsprop;

pub use objective::{
    correction_offset, loss_gradient, nll_bias_corrected, nll_bt, nll_btt, weighted_pairs, CorrectionMap, LabelWeights,
    LossKind, Objective, OffsetGradient, WeightedPair,
};
pub use rmsprop::{rmsprop_step, RmsPropConfig, RmsPropState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    /// Required by `Btt` and `BiasCorrected`.
    pub theta: Option<TieModelParams>,
    pub correction: CorrectionMap,
    pub offset_gradient: OffsetGradient,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub max_epochs: usize,
    /// Stop once `|L_prev - L| <= tol * |L_prev|` between consecutive epochs.
    /// Zero disables the rule.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Bt,
            theta: None,
            correction: CorrectionMap::default(),
            offset_gradient: OffsetGradient::default(),
            learning_rate: 1e-3,
            batch_size: 64,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            max_epochs: 1000,
            convergence_tol: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if !(self.rmsprop_decay > 0.0 && self.rmsprop_decay < 1.0) {
            return bad("rmsprop decay must lie in (0, 1)");
        }
        if !(self.rmsprop_epsilon > 0.0) {
            return bad("rmsprop epsilon must be positive");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence tolerance must be non-negative");
        }
        if self.loss != LossKind::Bt && self.theta.is_none() {
            return bad("theta is required for the btt and bias-corrected losses");
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        Objective {
            kind: self.loss,
            params: self.theta.unwrap_or(TieModelParams::BT),
            correction: self.correction,
            offset_gradient: self.offset_gradient,
        }
    }

    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig { learning_rate: self.learning_rate, decay: self.rmsprop_decay, epsilon: self.rmsprop_epsilon }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the minibatch losses seen during the epoch (pre-update).
    pub loss: f64,
    /// Norm of the epoch-averaged minibatch gradient.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
    pub stop: StopReason,
}

impl TrainingReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Trains `model` in place on a labeled dataset.
pub fn train<M: RewardModel + ?Sized>(
    model: &mut M,
    dataset: &PreferenceDataset,
    config: &TrainConfig,
) -> Result<TrainingReport> {
    train_pairs(model, &weighted_pairs(dataset), config, |_| {})
}

/// Trains on weighted comparisons, calling `observe` after every epoch.
///
/// Each epoch visits the pairs in a fresh seeded permutation, in minibatches of
/// `batch_size` (the last one may be short), with one RMSprop step per batch.
pub fn train_pairs<M: RewardModel + ?Sized>(
    model: &mut M,
    pairs: &[WeightedPair],
    config: &TrainConfig,
    mut observe: impl FnMut(&EpochStats),
) -> Result<TrainingReport> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidDataset("cannot train on an empty dataset".into()));
    }
    let objective = config.objective();
    objective.validate(pairs)?;

    let opt = config.rmsprop();
    let n_params = model.num_params();
    let mut state = RmsPropState::zeros(n_params);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = stream_rng(config.seed, Stream::Shuffle, 0);
    let mut epochs = Vec::new();
    let mut grad_sum = vec![0.0; n_params];

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        grad_sum.iter_mut().for_each(|g| *g = 0.0);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grad) = objective.loss_and_gradient(&*model, batch.iter().map(|&i| &pairs[i]))?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            let w = batch.len() as f64;
            loss_sum += loss * w;
            grad_sum.iter_mut().zip(&grad).for_each(|(s, g)| *s += g * w);
            rmsprop_step(model.params_mut(), &grad, &mut state, &opt)?;
        }
        let n = pairs.len() as f64;
        let stats = EpochStats {
            epoch,
            loss: loss_sum / n,
            grad_norm: libm::sqrt(grad_sum.iter().map(|g| (g / n) * (g / n)).sum::<f64>()),
        };
        observe(&stats);
        let converged = config.convergence_tol > 0.0
            && epochs.last().is_some_and(|prev: &EpochStats| {
                (prev.loss - stats.loss).abs() <= config.convergence_tol * prev.loss.abs()
            });
        epochs.push(stats);
        if converged {
            return Ok(TrainingReport { epochs, stop: StopReason::Converged });
        }
    }
    Ok(TrainingReport { epochs, stop: StopReason::MaxEpochs })
}
