//! Preference records with three-way labels, synthetic generation under the
//! BTT model, and uniform tie-breaking.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::prob::{btt_tie_from_delta, btt_win_from_delta};
use crate::reward::{RewardModel, ALPHABET};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result, TieModelParams};

/// Feature vector of a response, each entry in `{0, 1, 2, 3}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResponseVector(Vec<u8>);

impl ResponseVector {
    pub fn new(features: Vec<u8>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidParameter("response needs at least one feature".into()));
        }
        if let Some(bad) = features.iter().find(|&&f| f as usize >= ALPHABET) {
            return Err(Error::InvalidParameter(format!("feature value {bad} outside 0..=3")));
        }
        Ok(Self(features))
    }

    pub fn features(&self) -> &[u8] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    fn random<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> Self {
        Self((0..dimension).map(|_| rng.gen_range(0..ALPHABET as u8)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PreferenceLabel {
    FirstWins,
    SecondWins,
    Tie,
}

impl PreferenceLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FirstWins => "first",
            Self::SecondWins => "second",
            Self::Tie => "tie",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "first" => Some(Self::FirstWins),
            "second" => Some(Self::SecondWins),
            "tie" => Some(Self::Tie),
            _ => None,
        }
    }
}

/// Two distinct responses to the same prompt, unlabeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponsePair {
    pub prompt_id: u32,
    pub response_a: ResponseVector,
    pub response_b: ResponseVector,
}

impl ResponsePair {
    pub fn delta<M: RewardModel + ?Sized>(&self, model: &M) -> Result<f64> {
        crate::reward::delta(model, self.prompt_id, &self.response_a, &self.response_b)
    }

    pub fn with_label(self, label: PreferenceLabel) -> ComparisonRecord {
        ComparisonRecord { prompt_id: self.prompt_id, response_a: self.response_a, response_b: self.response_b, label }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonRecord {
    pub prompt_id: u32,
    pub response_a: ResponseVector,
    pub response_b: ResponseVector,
    pub label: PreferenceLabel,
}

impl ComparisonRecord {
    pub fn new(
        prompt_id: u32,
        response_a: ResponseVector,
        response_b: ResponseVector,
        label: PreferenceLabel,
    ) -> Result<Self> {
        if response_a == response_b {
            return Err(Error::InvalidDataset(format!(
                "record for prompt {prompt_id} compares a response with itself"
            )));
        }
        if response_a.dimension() != response_b.dimension() {
            return Err(Error::InvalidDataset("responses of one record differ in dimension".into()));
        }
        Ok(Self { prompt_id, response_a, response_b, label })
    }

    /// `r(x, a) - r(x, b)`.
    pub fn delta<M: RewardModel + ?Sized>(&self, model: &M) -> Result<f64> {
        crate::reward::delta(model, self.prompt_id, &self.response_a, &self.response_b)
    }

    pub fn is_tie(&self) -> bool {
        self.label == PreferenceLabel::Tie
    }

    pub fn pair(&self) -> ResponsePair {
        ResponsePair {
            prompt_id: self.prompt_id,
            response_a: self.response_a.clone(),
            response_b: self.response_b.clone(),
        }
    }
}

/// Labeled comparisons sharing one response dimension.
///
/// Records labeled `Tie` form the tied subset; all others the decided subset.
/// Counts are always recomputed from the records.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDataset {
    dimension: usize,
    records: Vec<ComparisonRecord>,
    /// Seed the dataset was generated from, if any.
    pub seed: Option<u64>,
    /// Tie propensity used for labeling, if known.
    pub theta: Option<f64>,
}

impl PreferenceDataset {
    pub fn new(dimension: usize, records: Vec<ComparisonRecord>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidDataset("dimension must be >= 1".into()));
        }
        if let Some((i, _)) = records
            .iter()
            .enumerate()
            .find(|(_, r)| r.response_a.dimension() != dimension || r.response_b.dimension() != dimension)
        {
            return Err(Error::InvalidDataset(format!("record {i} does not match dataset dimension {dimension}")));
        }
        Ok(Self { dimension, records, seed: None, theta: None })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[ComparisonRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ComparisonRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_ties(&self) -> usize {
        self.records.iter().filter(|r| r.is_tie()).count()
    }

    pub fn n_decided(&self) -> usize {
        self.len() - self.n_ties()
    }

    pub fn decided(&self) -> impl Iterator<Item = &ComparisonRecord> {
        self.records.iter().filter(|r| !r.is_tie())
    }

    pub fn tied(&self) -> impl Iterator<Item = &ComparisonRecord> {
        self.records.iter().filter(|r| r.is_tie())
    }

    /// Largest prompt id plus one (0 for an empty dataset).
    pub fn prompt_span(&self) -> usize {
        self.records.iter().map(|r| r.prompt_id as usize + 1).max().unwrap_or(0)
    }
}

/// Draws a BTT label with one uniform against the cumulative thresholds
/// (first wins, second wins, tie).
pub fn sample_label<R: Rng + ?Sized>(
    r_a: f64,
    r_b: f64,
    params: TieModelParams,
    rng: &mut R,
) -> Result<PreferenceLabel> {
    let d = r_a - r_b;
    if !d.is_finite() {
        return Err(Error::NonFinite("sample_label"));
    }
    let theta = params.theta();
    let p_first = btt_win_from_delta(d, theta);
    let p_second = btt_win_from_delta(-d, theta);
    let u: f64 = rng.gen();
    Ok(if u < p_first {
        PreferenceLabel::FirstWins
    } else if u < p_first + p_second || btt_tie_from_delta(d, theta) == 0.0 {
        PreferenceLabel::SecondWins
    } else {
        PreferenceLabel::Tie
    })
}

/// Relabels every tie as a fair coin flip; decided records pass through.
pub fn break_ties<R: RngCore + ?Sized>(dataset: &PreferenceDataset, rng: &mut R) -> PreferenceDataset {
    let records = dataset
        .records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if r.is_tie() {
                r.label =
                    if rng.next_u32() & 1 == 0 { PreferenceLabel::FirstWins } else { PreferenceLabel::SecondWins };
            }
            r
        })
        .collect();
    PreferenceDataset { records, ..dataset.clone_meta() }
}

/// [`break_ties`] on the tie-break substream of `seed`.
pub fn break_ties_seeded(dataset: &PreferenceDataset, seed: u64) -> PreferenceDataset {
    break_ties(dataset, &mut stream_rng(seed, Stream::TieBreak, 0))
}

impl PreferenceDataset {
    fn clone_meta(&self) -> Self {
        Self { dimension: self.dimension, records: Vec::new(), seed: self.seed, theta: self.theta }
    }
}

const MAX_PAIR_REJECTIONS: usize = 10_000;

/// Draws `n` pairs of distinct responses uniformly for one prompt.
pub fn draw_pairs<R: Rng + ?Sized>(
    prompt_id: u32,
    n: usize,
    dimension: usize,
    rng: &mut R,
) -> Result<Vec<ResponsePair>> {
    if dimension == 0 {
        return Err(Error::Generation("dimension 0 admits no distinct responses".into()));
    }
    (0..n)
        .map(|_| {
            let a = ResponseVector::random(dimension, rng);
            for _ in 0..MAX_PAIR_REJECTIONS {
                let b = ResponseVector::random(dimension, rng);
                if b != a {
                    return Ok(ResponsePair { prompt_id, response_a: a, response_b: b });
                }
            }
            Err(Error::Generation("could not draw a distinct response pair".into()))
        })
        .collect()
}

/// Pairs for one prompt, drawn from the prompt's own substream so prompts can
/// be generated independently and concatenated in order.
pub fn prompt_pairs(
    seed: u64,
    stream: Stream,
    prompt_id: u32,
    n: usize,
    dimension: usize,
) -> Result<Vec<ResponsePair>> {
    draw_pairs(prompt_id, n, dimension, &mut stream_rng(seed, stream, prompt_id as u64))
}

/// Generates a BTT-labeled dataset scored by `reward`.
///
/// Prompt `p` draws its pairs from the pair substream and its labels from the
/// label substream, both indexed by `p`; the output is identical whether
/// prompts are generated together or one at a time via [`generate_prompt`].
pub fn generate_synthetic<M: RewardModel + ?Sized>(
    n_prompts: usize,
    pairs_per_prompt: usize,
    dimension: usize,
    reward: &M,
    params: TieModelParams,
    seed: u64,
) -> Result<PreferenceDataset> {
    if n_prompts == 0 || pairs_per_prompt == 0 {
        return Err(Error::Generation("prompt and pair counts must be >= 1".into()));
    }
    let n_prompts = u32::try_from(n_prompts).map_err(|_| Error::Generation("too many prompts".into()))?;
    let mut records = Vec::with_capacity(n_prompts as usize * pairs_per_prompt);
    for p in 0..n_prompts {
        records.extend(generate_prompt(p, pairs_per_prompt, dimension, reward, params, seed)?);
    }
    let mut ds = PreferenceDataset::new(dimension, records)?;
    ds.seed = Some(seed);
    ds.theta = Some(params.theta());
    Ok(ds)
}

/// The records of one prompt, as produced inside [`generate_synthetic`].
pub fn generate_prompt<M: RewardModel + ?Sized>(
    prompt_id: u32,
    pairs_per_prompt: usize,
    dimension: usize,
    reward: &M,
    params: TieModelParams,
    seed: u64,
) -> Result<Vec<ComparisonRecord>> {
    let pairs = prompt_pairs(seed, Stream::PairDraw, prompt_id, pairs_per_prompt, dimension)?;
    let mut labels = stream_rng(seed, Stream::LabelDraw, prompt_id as u64);
    pairs
        .into_iter()
        .map(|pair| {
            let d = pair.delta(reward)?;
            let label = sample_label(d, 0.0, params, &mut labels)?;
            Ok(pair.with_label(label))
        })
        .collect()
}

/// Labels every record by the more likely side under `truth` (ties only when
/// the strengths are exactly equal).
pub fn relabel_argmax<M: RewardModel + ?Sized>(dataset: &PreferenceDataset, truth: &M) -> Result<PreferenceDataset> {
    let records = dataset
        .records
        .iter()
        .map(|r| {
            let d = r.delta(truth)?;
            let mut r = r.clone();
            r.label = if d > 0.0 {
                PreferenceLabel::FirstWins
            } else if d < 0.0 {
                PreferenceLabel::SecondWins
            } else {
                PreferenceLabel::Tie
            };
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreferenceDataset { records, ..dataset.clone_meta() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{btt_tie_prob, btt_win_prob};
    use crate::reward::{random_ground_truth, LinearReward};
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(theta: f64) -> TieModelParams {
        TieModelParams::new(theta).unwrap()
    }

    fn counts(r_a: f64, r_b: f64, theta: f64, n: usize, seed: u64) -> [usize; 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = [0usize; 3];
        for _ in 0..n {
            match sample_label(r_a, r_b, p(theta), &mut rng).unwrap() {
                PreferenceLabel::FirstWins => c[0] += 1,
                PreferenceLabel::SecondWins => c[1] += 1,
                PreferenceLabel::Tie => c[2] += 1,
            }
        }
        c
    }

    #[test]
    fn bt_never_ties() {
        let c = counts(0.0, 0.0, 1.0, 1_000_000, 1);
        assert_eq!(c[2], 0);
    }

    #[test]
    fn equal_rewards_theta_two_are_uniform() {
        let n = 1_000_000;
        let c = counts(0.3, 0.3, 2.0, n, 2);
        for k in c {
            assert!((k as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn strong_preference_mostly_wins() {
        let c = counts(5.0, 0.0, 2.0, 100_000, 3);
        assert!(c[0] as f64 / 1e5 > 0.97);
    }

    #[test]
    fn frequencies_inside_four_sigma() {
        let n = 100_000;
        for &(a, b, t) in &[(0.0, 0.0, 2.0), (1.0, -0.5, 5.0), (-2.0, 1.0, 10.0)] {
            let c = counts(a, b, t, n, 9);
            let probs = [
                btt_win_prob(a, b, p(t)).unwrap(),
                btt_win_prob(b, a, p(t)).unwrap(),
                btt_tie_prob(a, b, p(t)).unwrap(),
            ];
            for (k, pr) in c.iter().zip(probs) {
                let sigma = (pr * (1.0 - pr) / n as f64).sqrt();
                assert!((*k as f64 / n as f64 - pr).abs() <= 4.0 * sigma);
            }
        }
    }

    fn synthetic(theta: f64, seed: u64) -> PreferenceDataset {
        let truth = random_ground_truth(3, 20, seed).unwrap();
        generate_synthetic(20, 50, 3, &truth, p(theta), seed).unwrap()
    }

    #[test]
    fn generation_contract() {
        let ds = synthetic(1.0, 4);
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.n_ties(), 0);
        assert_eq!(ds.n_decided() + ds.n_ties(), ds.len());
        assert!(ds.records().iter().all(|r| r.response_a != r.response_b));
        assert_eq!(ds, synthetic(1.0, 4));
        assert_eq!(ds.seed, Some(4));
    }

    #[test]
    fn constant_reward_tie_fraction() {
        let zero = LinearReward::zeros(100, 2);
        let ds = generate_synthetic(100, 100, 2, &zero, p(10.0), 5).unwrap();
        let frac = ds.n_ties() as f64 / ds.len() as f64;
        assert!((frac - 9.0 / 11.0).abs() < 0.02, "{frac}");
    }

    #[test]
    fn generation_shards_by_prompt() {
        let truth = random_ground_truth(2, 5, 8).unwrap();
        let whole = generate_synthetic(5, 7, 2, &truth, p(3.0), 8).unwrap();
        let mut pieces = Vec::new();
        for prompt in (0..5).rev() {
            pieces.push(generate_prompt(prompt, 7, 2, &truth, p(3.0), 8).unwrap());
        }
        pieces.reverse();
        assert_eq!(whole.records(), pieces.concat().as_slice());
    }

    #[test]
    fn dimension_zero_fails() {
        let zero = LinearReward::zeros(1, 0);
        assert!(matches!(generate_synthetic(1, 1, 0, &zero, p(2.0), 0), Err(Error::Generation(_))));
    }

    #[test]
    fn break_ties_contract() {
        let ds = synthetic(5.0, 6);
        assert!(ds.n_ties() > 0);
        let broken = break_ties_seeded(&ds, 1);
        assert_eq!(broken.n_ties(), 0);
        assert_eq!(broken, break_ties_seeded(&ds, 1));
        for (a, b) in ds.records().iter().zip(broken.records()) {
            assert_eq!((a.prompt_id, &a.response_a, &a.response_b), (b.prompt_id, &b.response_a, &b.response_b));
            if !a.is_tie() {
                assert_eq!(a.label, b.label);
            }
        }
        let decided = synthetic(1.0, 6);
        assert_eq!(break_ties_seeded(&decided, 3), decided);
    }

    #[test]
    fn break_ties_is_fair() {
        let r = ResponseVector::new(vec![0]).unwrap();
        let s = ResponseVector::new(vec![1]).unwrap();
        let rec = ComparisonRecord::new(0, r, s, PreferenceLabel::Tie).unwrap();
        let ds = PreferenceDataset::new(1, vec![rec; 100_000]).unwrap();
        let broken = break_ties_seeded(&ds, 77);
        let first = broken.records().iter().filter(|r| r.label == PreferenceLabel::FirstWins).count();
        assert!((first as f64 / 1e5 - 0.5).abs() < 0.01);
    }

    #[test]
    fn record_validation() {
        let r = ResponseVector::new(vec![0, 1]).unwrap();
        assert!(ComparisonRecord::new(0, r.clone(), r.clone(), PreferenceLabel::Tie).is_err());
        assert!(ResponseVector::new(vec![4]).is_err());
        assert!(ResponseVector::new(vec![]).is_err());
        let other = ResponseVector::new(vec![1, 1]).unwrap();
        let rec = ComparisonRecord::new(0, r, other, PreferenceLabel::FirstWins).unwrap();
        assert!(PreferenceDataset::new(3, vec![rec]).is_err());
    }
}
