//! Simulation harness: bias gap between BT and BTT fits against a known
//! ground truth, bias curves, and evaluation metrics.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::dataset::{
    break_ties_seeded, generate_synthetic, prompt_pairs, PreferenceDataset, ResponsePair, ResponseVector,
};
use crate::prob::{bias_ratio, bias_unchecked, btt_tie_from_delta, btt_win_from_delta};
use crate::reward::{random_ground_truth, MlpReward, RewardModel};
use crate::rng::{derive_seed, Stream};
use crate::train::{train, LabelWeights, LossKind, TrainConfig, WeightedPair};
use crate::{Error, Result, TieModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub n_prompts: usize,
    pub pairs_per_prompt: usize,
    pub dimension: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { n_prompts: 4, pairs_per_prompt: 1000, dimension: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasGapConfig {
    pub gen: GenConfig,
    /// Shared by both fits; `loss` and `theta` are set per fit.
    pub train: TrainConfig,
    pub hidden: usize,
    pub n_eval_pairs: usize,
}

impl Default for BiasGapConfig {
    fn default() -> Self {
        Self {
            gen: GenConfig::default(),
            train: TrainConfig { learning_rate: 1e-3, max_epochs: 200, ..TrainConfig::default() },
            hidden: crate::reward::DEFAULT_HIDDEN,
            n_eval_pairs: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasGapResult {
    pub theta: f64,
    /// Mean `|Δr_BT - Δr*|` over the evaluation pairs.
    pub mean_abs_bias_bt: f64,
    /// Mean `|Δr_BTT - Δr*|` over the evaluation pairs.
    pub mean_abs_bias_btt: f64,
    /// Mean over pairs of `|Δr_BT - Δr*| - |Δr_BTT - Δr*|`.
    pub gap: f64,
    pub n_eval_pairs: usize,
    pub seed: u64,
}

/// Runs [`run_bias_gap_single`] for each theta.
pub fn run_bias_gap(thetas: &[f64], config: &BiasGapConfig, seed: u64) -> Result<Vec<BiasGapResult>> {
    thetas.iter().map(|&t| run_bias_gap_single(t, config, seed)).collect()
}

/// One BT-versus-BTT comparison.
///
/// Draws a ground truth and a BTT-labeled dataset, breaks its ties uniformly,
/// fits identically initialized MLPs with the BTT loss (tied data) and the BT
/// loss (tie-broken data), and measures both on fresh evaluation pairs.
pub fn run_bias_gap_single(theta: f64, config: &BiasGapConfig, seed: u64) -> Result<BiasGapResult> {
    let ctx = |source: Error| Error::ThetaRun { theta, source: Box::new(source) };
    let params = TieModelParams::new(theta).map_err(ctx)?;
    if params.is_bt() {
        return Err(ctx(Error::InvalidParameter("bias gap needs theta > 1 so ties occur".into())));
    }
    let g = config.gen;
    let truth =
        random_ground_truth(g.dimension, g.n_prompts, derive_seed(seed, Stream::GroundTruth, 0)).map_err(ctx)?;
    let data_seed = derive_seed(seed, Stream::Dataset, 0);
    let tied =
        generate_synthetic(g.n_prompts, g.pairs_per_prompt, g.dimension, &truth, params, data_seed).map_err(ctx)?;
    let broken = break_ties_seeded(&tied, data_seed);

    let init_seed = derive_seed(seed, Stream::ModelInit, 0);
    let fresh = || MlpReward::new_random(g.n_prompts, g.dimension, config.hidden, init_seed);
    let mut btt_model = fresh().map_err(ctx)?;
    let mut bt_model = btt_model.clone();
    let base = TrainConfig { seed: derive_seed(seed, Stream::Shuffle, 0), ..config.train };
    train(&mut btt_model, &tied, &TrainConfig { loss: LossKind::Btt, theta: Some(params), ..base }).map_err(ctx)?;
    train(&mut bt_model, &broken, &TrainConfig { loss: LossKind::Bt, theta: None, ..base }).map_err(ctx)?;

    let eval = eval_pairs(g, config.n_eval_pairs, seed).map_err(ctx)?;
    let bt_err = abs_bias_per_pair(&bt_model, &truth, &eval).map_err(ctx)?;
    let btt_err = abs_bias_per_pair(&btt_model, &truth, &eval).map_err(ctx)?;
    let n = eval.len() as f64;
    let mean_bt = bt_err.iter().sum::<f64>() / n;
    let mean_btt = btt_err.iter().sum::<f64>() / n;
    let gap = bt_err.iter().zip(&btt_err).map(|(a, b)| a - b).sum::<f64>() / n;
    Ok(BiasGapResult {
        theta,
        mean_abs_bias_bt: mean_bt,
        mean_abs_bias_btt: mean_btt,
        gap,
        n_eval_pairs: eval.len(),
        seed,
    })
}

/// Held-out pairs, spread round-robin over prompts, from their own substream.
fn eval_pairs(g: GenConfig, n: usize, seed: u64) -> Result<Vec<ResponsePair>> {
    if n == 0 {
        return Err(Error::UndefinedMetric("no evaluation pairs requested"));
    }
    let eval_seed = derive_seed(seed, Stream::EvalPairs, 0);
    let mut out = Vec::with_capacity(n);
    for p in 0..g.n_prompts {
        let count = n / g.n_prompts + usize::from(p < n % g.n_prompts);
        out.extend(prompt_pairs(eval_seed, Stream::EvalPairs, p as u32, count, g.dimension)?);
    }
    Ok(out)
}

fn abs_bias_per_pair<M, T>(model: &M, truth: &T, pairs: &[ResponsePair]) -> Result<Vec<f64>>
where
    M: RewardModel + ?Sized,
    T: RewardModel + ?Sized,
{
    pairs.iter().map(|p| Ok((p.delta(model)? - p.delta(truth)?).abs())).collect()
}

/// Mean `|Δmodel - Δtruth|` over `pairs`.
pub fn eval_mean_abs_bias<M, T>(model: &M, truth: &T, pairs: &[ResponsePair]) -> Result<f64>
where
    M: RewardModel + ?Sized,
    T: RewardModel + ?Sized,
{
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("mean absolute bias over zero pairs"));
    }
    Ok(abs_bias_per_pair(model, truth, pairs)?.iter().sum::<f64>() / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub n_scored: usize,
    pub n_ties_excluded: usize,
}

/// Fraction of decided records whose winner the model scores higher; equal
/// scores earn half credit. Tied records are skipped and counted.
pub fn eval_accuracy<M: RewardModel + ?Sized>(model: &M, dataset: &PreferenceDataset) -> Result<AccuracyReport> {
    let mut credit = 0.0;
    let mut n_scored = 0usize;
    for r in dataset.decided() {
        let d = r.delta(model)?;
        let oriented = match r.label {
            crate::dataset::PreferenceLabel::FirstWins => d,
            _ => -d,
        };
        credit += if oriented > 0.0 {
            1.0
        } else if oriented == 0.0 {
            0.5
        } else {
            0.0
        };
        n_scored += 1;
    }
    if n_scored == 0 {
        return Err(Error::UndefinedMetric("accuracy over zero decided records"));
    }
    Ok(AccuracyReport { accuracy: credit / n_scored as f64, n_scored, n_ties_excluded: dataset.n_ties() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub delta_r_star: f64,
    pub theta: f64,
    pub bias: f64,
    pub bias_ratio: f64,
}

/// Default plotting range of the true strength.
pub const CURVE_RANGE: (f64, f64) = (-0.6, 2.94);

/// Bias and bias ratio on `n_points` evenly spaced strengths per theta.
pub fn emit_bias_curves(thetas: &[f64], lo: f64, hi: f64, n_points: usize) -> Result<Vec<CurveRow>> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter("bias curve range must satisfy lo < hi".into()));
    }
    if n_points < 2 {
        return Err(Error::InvalidParameter("bias curve needs at least two points".into()));
    }
    let mut rows = Vec::with_capacity(thetas.len() * n_points);
    for &theta in thetas {
        let params = TieModelParams::new(theta)?;
        for i in 0..n_points {
            let x = if i + 1 == n_points { hi } else { lo + (hi - lo) * i as f64 / (n_points - 1) as f64 };
            rows.push(CurveRow {
                delta_r_star: x,
                theta,
                bias: bias_unchecked(x, theta),
                bias_ratio: bias_ratio(x, params)?,
            });
        }
    }
    Ok(rows)
}

/// Exact label distributions for every unordered pair of `responses` under
/// the BTT model with rewards from `truth`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedPairs {
    /// Ties split evenly: weights `(q, 1 - q, 0)`.
    pub tie_broken: Vec<WeightedPair>,
    /// Full three-way BTT probabilities.
    pub with_ties: Vec<WeightedPair>,
    /// True strength `r*(a) - r*(b)` of each pair, same order.
    pub true_deltas: Vec<f64>,
}

pub fn expected_pairs<T: RewardModel + ?Sized>(
    truth: &T,
    prompt_id: u32,
    responses: &[ResponseVector],
    params: TieModelParams,
) -> Result<ExpectedPairs> {
    let theta = params.theta();
    let mut out = ExpectedPairs { tie_broken: Vec::new(), with_ties: Vec::new(), true_deltas: Vec::new() };
    for (i, a) in responses.iter().enumerate() {
        for b in &responses[i + 1..] {
            let d = crate::reward::delta(truth, prompt_id, a, b)?;
            let first = btt_win_from_delta(d, theta);
            let second = btt_win_from_delta(-d, theta);
            let tie = btt_tie_from_delta(d, theta);
            let q = first + 0.5 * tie;
            let pair = |weights| WeightedPair { prompt_id, response_a: a.clone(), response_b: b.clone(), weights };
            out.tie_broken.push(pair(LabelWeights { first: q, second: second + 0.5 * tie, tie: 0.0 }));
            out.with_ties.push(pair(LabelWeights { first, second, tie }));
            out.true_deltas.push(d);
        }
    }
    Ok(out)
}

/// Full-batch learning-rate schedule used to drive small exact instances to
/// their optimum: RMSprop hovers within roughly one step size of the minimum,
/// so each stage shrinks the step.
pub const EXACT_FIT_SCHEDULE: [(f64, usize); 4] = [(1e-2, 2000), (1e-3, 2000), (1e-4, 2000), (1e-5, 1000)];

/// Minimizes the mean loss over `pairs` in full batches following
/// [`EXACT_FIT_SCHEDULE`]. `base` supplies the loss, theta and correction;
/// its batch size, learning rate, epoch count and tolerance are overridden.
pub fn fit_exact<M: RewardModel + ?Sized>(model: &mut M, pairs: &[WeightedPair], base: &TrainConfig) -> Result<()> {
    for (learning_rate, max_epochs) in EXACT_FIT_SCHEDULE {
        let config =
            TrainConfig { learning_rate, max_epochs, batch_size: pairs.len().max(1), convergence_tol: 0.0, ..*base };
        crate::train::train_pairs(model, pairs, &config, |_| {})?;
    }
    Ok(())
}
