//! Negative log-likelihoods over weighted comparisons and their gradients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{ComparisonRecord, PreferenceDataset, PreferenceLabel, ResponseVector};
use crate::prob::{bias_term_derivative, forward_bias_map, invert_bias_map, sigmoid, softplus};
use crate::reward::RewardModel;
use crate::{Error, Result, TieModelParams};

/// Label distribution of one comparison. Observed records are one-hot; exact
/// expectations use the model probabilities as weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelWeights {
    pub first: f64,
    pub second: f64,
    pub tie: f64,
}

impl LabelWeights {
    pub fn one_hot(label: PreferenceLabel) -> Self {
        let mut w = Self { first: 0.0, second: 0.0, tie: 0.0 };
        match label {
            PreferenceLabel::FirstWins => w.first = 1.0,
            PreferenceLabel::SecondWins => w.second = 1.0,
            PreferenceLabel::Tie => w.tie = 1.0,
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPair {
    pub prompt_id: u32,
    pub response_a: ResponseVector,
    pub response_b: ResponseVector,
    pub weights: LabelWeights,
}

impl WeightedPair {
    pub fn delta<M: RewardModel + ?Sized>(&self, model: &M) -> Result<f64> {
        crate::reward::delta(model, self.prompt_id, &self.response_a, &self.response_b)
    }
}

impl From<&ComparisonRecord> for WeightedPair {
    fn from(r: &ComparisonRecord) -> Self {
        Self {
            prompt_id: r.prompt_id,
            response_a: r.response_a.clone(),
            response_b: r.response_b.clone(),
            weights: LabelWeights::one_hot(r.label),
        }
    }
}

pub fn weighted_pairs(dataset: &PreferenceDataset) -> Vec<WeightedPair> {
    dataset.records().iter().map(WeightedPair::from).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Logistic likelihood on decided comparisons.
    Bt,
    /// Rao-Kupper likelihood including tied comparisons.
    Btt,
    /// BT likelihood evaluated at a bias-corrected strength.
    BiasCorrected,
}

/// Which strength the bias-corrected loss feeds to the BT likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectionMap {
    /// `forward_bias_map(Δψ)`: the model's strength is read as the true one and
    /// mapped to what a BT fit on tie-broken data would see. The optimum is the
    /// unbiased strength.
    #[default]
    Forward,
    /// `invert_bias_map(Δψ)`: the model's strength is read as a BT estimate
    /// and debiased by root finding before entering the likelihood.
    Inverse,
}

/// Whether gradients flow through the correction offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffsetGradient {
    /// The offset is a per-step constant (margin-style loss).
    #[default]
    Detached,
    Attached,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub kind: LossKind,
    pub params: TieModelParams,
    pub correction: CorrectionMap,
    pub offset_gradient: OffsetGradient,
}

/// Corrected strength minus `delta_psi`.
pub fn correction_offset(delta_psi: f64, params: TieModelParams, map: CorrectionMap) -> Result<f64> {
    let corrected = match map {
        CorrectionMap::Forward => forward_bias_map(delta_psi, params)?,
        CorrectionMap::Inverse => invert_bias_map(delta_psi, params)?,
    };
    Ok(corrected - delta_psi)
}

/// `(loss, ∂loss/∂Δ)` of the logistic likelihood at strength `d`.
#[inline]
fn bt_terms(d: f64, w: &LabelWeights) -> (f64, f64) {
    let loss = w.first * softplus(-d) + w.second * softplus(d);
    let slope = -w.first * sigmoid(-d) + w.second * sigmoid(d);
    (loss, slope)
}

impl Objective {
    pub fn bt() -> Self {
        Self {
            kind: LossKind::Bt,
            params: TieModelParams::BT,
            correction: CorrectionMap::default(),
            offset_gradient: OffsetGradient::default(),
        }
    }

    pub fn btt(params: TieModelParams) -> Self {
        Self { kind: LossKind::Btt, params, ..Self::bt() }
    }

    pub fn bias_corrected(params: TieModelParams) -> Self {
        Self { kind: LossKind::BiasCorrected, params, ..Self::bt() }
    }

    pub fn with_correction(mut self, map: CorrectionMap, gradient: OffsetGradient) -> Self {
        self.correction = map;
        self.offset_gradient = gradient;
        self
    }

    /// Rejects inputs the likelihood cannot score before any work is done.
    pub fn validate<'a>(&self, pairs: impl IntoIterator<Item = &'a WeightedPair>) -> Result<()> {
        for (index, p) in pairs.into_iter().enumerate() {
            let w = &p.weights;
            if [w.first, w.second, w.tie].iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidDataset(format!("record {index} has invalid label weights")));
            }
            if w.tie > 0.0 {
                match self.kind {
                    LossKind::Btt if self.params.is_bt() => return Err(Error::InfiniteLikelihood { index }),
                    LossKind::Btt => {}
                    _ => {
                        return Err(Error::InvalidDataset(format!(
                            "record {index} is a tie; this loss needs decided records only"
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// `(loss, ∂loss/∂Δψ)` for one comparison with model strength `delta`.
    pub fn pair_terms(&self, delta: f64, w: &LabelWeights) -> Result<(f64, f64)> {
        match self.kind {
            LossKind::Bt => Ok(bt_terms(delta, w)),
            LossKind::Btt => {
                let a = self.params.ln_theta();
                let (lo, hi) = (a - delta, a + delta);
                let win = w.first + w.tie;
                let lose = w.second + w.tie;
                let mut loss = win * softplus(lo) + lose * softplus(hi);
                if w.tie > 0.0 {
                    let t = self.params.theta();
                    loss -= w.tie * libm::log(t * t - 1.0);
                }
                Ok((loss, -win * sigmoid(lo) + lose * sigmoid(hi)))
            }
            LossKind::BiasCorrected => {
                let offset = correction_offset(delta, self.params, self.correction)?;
                let corrected = delta + offset;
                let (loss, slope) = bt_terms(corrected, w);
                let chain = match (self.offset_gradient, self.correction) {
                    (OffsetGradient::Detached, _) => 1.0,
                    (OffsetGradient::Attached, CorrectionMap::Forward) => {
                        1.0 + bias_term_derivative(delta, self.params)?
                    }
                    (OffsetGradient::Attached, CorrectionMap::Inverse) => {
                        1.0 / (1.0 + bias_term_derivative(corrected, self.params)?)
                    }
                };
                Ok((loss, slope * chain))
            }
        }
    }

    /// Mean loss over `pairs`.
    pub fn loss<M: RewardModel + ?Sized>(&self, model: &M, pairs: &[WeightedPair]) -> Result<f64> {
        self.validate(pairs)?;
        let mut total = 0.0;
        for p in pairs {
            total += self.pair_terms(p.delta(model)?, &p.weights)?.0;
        }
        Ok(total / pairs.len().max(1) as f64)
    }

    /// Adds `scale * ∂loss/∂ψ` of one pair into `grad` and returns its loss.
    pub(crate) fn accumulate<M: RewardModel + ?Sized>(
        &self,
        model: &M,
        pair: &WeightedPair,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let (loss, slope) = self.pair_terms(pair.delta(model)?, &pair.weights)?;
        if slope != 0.0 {
            model.accumulate_gradient(pair.prompt_id, pair.response_a.features(), scale * slope, grad)?;
            model.accumulate_gradient(pair.prompt_id, pair.response_b.features(), -scale * slope, grad)?;
        }
        Ok(loss)
    }

    /// Mean loss and its gradient with respect to the model parameters, summed
    /// in batch order.
    pub fn loss_and_gradient<'a, M: RewardModel + ?Sized>(
        &self,
        model: &M,
        batch: impl ExactSizeIterator<Item = &'a WeightedPair>,
    ) -> Result<(f64, Vec<f64>)> {
        let n = batch.len().max(1) as f64;
        let mut grad = vec![0.0; model.num_params()];
        let mut total = 0.0;
        for p in batch {
            total += self.accumulate(model, p, 1.0 / n, &mut grad)?;
        }
        Ok((total / n, grad))
    }
}

/// Gradient of the mean batch loss.
pub fn loss_gradient<M: RewardModel + ?Sized>(
    objective: &Objective,
    model: &M,
    batch: &[WeightedPair],
) -> Result<Vec<f64>> {
    objective.validate(batch)?;
    Ok(objective.loss_and_gradient(model, batch.iter())?.1)
}

/// Mean BT negative log-likelihood on a tie-free dataset.
pub fn nll_bt<M: RewardModel + ?Sized>(model: &M, dataset: &PreferenceDataset) -> Result<f64> {
    Objective::bt().loss(model, &weighted_pairs(dataset))
}

/// Mean BTT negative log-likelihood; ties score with the tie probability.
pub fn nll_btt<M: RewardModel + ?Sized>(model: &M, params: TieModelParams, dataset: &PreferenceDataset) -> Result<f64> {
    Objective::btt(params).loss(model, &weighted_pairs(dataset))
}

/// Mean BT negative log-likelihood at the bias-corrected strength.
pub fn nll_bias_corrected<M: RewardModel + ?Sized>(
    model: &M,
    params: TieModelParams,
    map: CorrectionMap,
    dataset: &PreferenceDataset,
) -> Result<f64> {
    Objective::bias_corrected(params)
        .with_correction(map, OffsetGradient::Detached)
        .loss(model, &weighted_pairs(dataset))
}
