use proptest::prelude::*;
use tiepref_core::dataset::{break_ties_seeded, generate_prompt, generate_synthetic, relabel_argmax};
use tiepref_core::experiments::{eval_accuracy, expected_pairs, fit_exact};
use tiepref_core::prob::{
    bias_bound, bias_term, btt_tie_prob, btt_win_prob, collapsed_win_prob, forward_bias_map, invert_bias_map, sigmoid,
};
use tiepref_core::reward::{random_ground_truth, LinearReward, RewardModel, TabularReward};
use tiepref_core::train::{nll_bt, train, LossKind, TrainConfig};
use tiepref_core::{Error, TieModelParams};

fn p(theta: f64) -> TieModelParams {
    TieModelParams::new(theta).unwrap()
}

#[test]
fn sharded_generation_matches_the_whole() {
    let truth = random_ground_truth(3, 6, 2).unwrap();
    let whole = generate_synthetic(6, 40, 3, &truth, p(4.0), 77).unwrap();
    let shards: Vec<_> = (0..6).flat_map(|q| generate_prompt(q, 40, 3, &truth, p(4.0), 77).unwrap()).collect();
    assert_eq!(whole.records(), shards.as_slice());
}

#[test]
fn bt_training_on_tie_broken_data_lowers_the_loss() {
    let truth = random_ground_truth(2, 3, 5).unwrap();
    let tied = generate_synthetic(3, 300, 2, &truth, p(3.0), 1).unwrap();
    let broken = break_ties_seeded(&tied, 1);
    let mut model = TabularReward::zeros(3, 2).unwrap();
    let before = nll_bt(&model, &broken).unwrap();
    let cfg = TrainConfig { learning_rate: 1e-2, max_epochs: 50, ..TrainConfig::default() };
    let report = train(&mut model, &broken, &cfg).unwrap();
    let after = nll_bt(&model, &broken).unwrap();
    assert!(after < before - 0.01, "{before} -> {after}");
    let acc = eval_accuracy(&model, &relabel_argmax(&tied, &truth).unwrap()).unwrap().accuracy;
    assert!(acc > 0.7, "{acc}");
    assert!(report.epochs.len() <= 50);
}

#[test]
fn plain_bt_rejects_tied_data() {
    let truth = random_ground_truth(2, 1, 5).unwrap();
    let tied = generate_synthetic(1, 200, 2, &truth, p(6.0), 2).unwrap();
    let mut model = LinearReward::zeros(1, 2);
    assert!(matches!(train(&mut model, &tied, &TrainConfig::default()), Err(Error::InvalidDataset(_))));
}

#[test]
fn btt_fit_on_a_single_pair_hits_the_truth() {
    // One pair: the BTT optimum is the true strength itself.
    let truth = TabularReward::from_values(1, 1, vec![0.4, -0.9, 0.0, 0.0]).unwrap();
    let responses = [vec![0u8], vec![1u8]].map(|v| tiepref_core::dataset::ResponseVector::new(v).unwrap());
    let e = expected_pairs(&truth, 0, &responses, p(3.0)).unwrap();
    let mut model = TabularReward::zeros(1, 1).unwrap();
    let cfg = TrainConfig { loss: LossKind::Btt, theta: Some(p(3.0)), ..TrainConfig::default() };
    fit_exact(&mut model, &e.with_ties, &cfg).unwrap();
    assert!((e.with_ties[0].delta(&model).unwrap() - 1.3).abs() < 1e-3);
    assert_eq!(model.num_params(), 4);
}

proptest! {
    #[test]
    fn probabilities_are_a_distribution(r1 in -40.0f64..40.0, r2 in -40.0f64..40.0, theta in 1.0f64..50.0) {
        let t = p(theta);
        let (w, l, tie) = (btt_win_prob(r1, r2, t).unwrap(), btt_win_prob(r2, r1, t).unwrap(), btt_tie_prob(r1, r2, t).unwrap());
        prop_assert!((w + l + tie - 1.0).abs() < 1e-12);
        prop_assert!(w >= 0.0 && l >= 0.0 && tie >= 0.0);
        let q = collapsed_win_prob(r1, r2, t).unwrap();
        prop_assert!((q - sigmoid(forward_bias_map(r1 - r2, t).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn bias_shrinks_strength_toward_zero(x in -30.0f64..30.0, theta in 1.0f64..50.0) {
        let t = p(theta);
        let b = bias_term(x, t).unwrap();
        prop_assert!(b * x <= 0.0);
        prop_assert!(b.abs() <= bias_bound(t));
        let y = forward_bias_map(x, t).unwrap();
        prop_assert!(y.abs() <= x.abs());
        prop_assert!((invert_bias_map(y, t).unwrap() - x).abs() < 1e-8);
    }
}
