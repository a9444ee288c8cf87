use ndarray::Array2;
use proptest::prelude::*;
use qfi_core::baseline::{
    gbdt_feature_importance, gbdt_fit, gbdt_predict, gbdt_predict_proba, GbdtModel, GbdtParams,
};
use qfi_core::dataset::synth_dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
}

fn accuracy(pred: &[u8], y: &[u8]) -> f64 {
    pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

/// Best training accuracy of any single axis-aligned threshold, either orientation.
fn best_stump_accuracy(x: &Array2<f64>, y: &[u8]) -> f64 {
    let mut best: f64 = 0.0;
    for j in 0..x.ncols() {
        for &t in x.column(j).iter() {
            let pred: Vec<u8> = x.column(j).iter().map(|&v| u8::from(v >= t)).collect();
            let a = accuracy(&pred, y);
            best = best.max(a).max(1.0 - a);
        }
    }
    best
}

#[test]
fn threshold_labels_are_fitted_within_ten_rounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = uniform(100, 3, &mut rng);
    let y: Vec<u8> = x.column(0).iter().map(|&v| u8::from(v > 0.1)).collect();
    assert_eq!(best_stump_accuracy(&x, &y), 1.0);
    let params = GbdtParams { n_rounds: 10, ..GbdtParams::default() };
    let model = gbdt_fit(x.view(), &y, &params).unwrap();
    assert_eq!(accuracy(&gbdt_predict(&model, x.view()).unwrap(), &y), 1.0);
    let imp = gbdt_feature_importance(&model).unwrap();
    assert!(imp.scores[0] > 0.9);
}

#[test]
fn single_stump_replicates_labels() {
    // Each child needs hessian mass >= 1, i.e. at least four rows at p = 0.5.
    let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
    let y = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
    let params = GbdtParams { n_rounds: 1, max_depth: 1, learning_rate: 1.0, ..GbdtParams::default() };
    let model = gbdt_fit(x.view(), &y, &params).unwrap();
    assert_eq!(model.trees[0].splits().count(), 1);
    assert_eq!(gbdt_predict(&model, x.view()).unwrap(), y.to_vec());
    let imp = gbdt_feature_importance(&model).unwrap();
    assert_eq!(imp.scores, vec![1.0]);
}

#[test]
fn empty_ensemble_predicts_the_prior() {
    let x = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let params = GbdtParams { n_rounds: 0, ..GbdtParams::default() };
    let model = gbdt_fit(x.view(), &[0, 1, 0, 1], &params).unwrap();
    assert_eq!(model.base_score, 0.0);
    assert!(gbdt_predict_proba(&model, x.view()).unwrap().iter().all(|&p| p == 0.5));
    assert_eq!(gbdt_feature_importance(&model).unwrap().scores, vec![1.0]);
}

#[test]
fn noise_features_do_not_generalise() {
    let mut accs = Vec::new();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = uniform(200, 5, &mut rng);
        let y: Vec<u8> = (0..200).map(|_| rng.random_range(0..2)).collect();
        let test_x = uniform(1000, 5, &mut rng);
        let test_y: Vec<u8> = (0..1000).map(|_| rng.random_range(0..2)).collect();
        let model = gbdt_fit(x.view(), &y, &GbdtParams::default()).unwrap();
        let train_acc = accuracy(&gbdt_predict(&model, x.view()).unwrap(), &y);
        let acc = accuracy(&gbdt_predict(&model, test_x.view()).unwrap(), &test_y);
        assert!(train_acc <= 1.0);
        assert!((acc - 0.5).abs() <= 0.1, "seed {seed}: {acc}");
        accs.push(acc);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.5).abs() < 0.03);
}

#[test]
fn additive_signal_credits_both_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = uniform(400, 3, &mut rng);
    let y: Vec<u8> = x.rows().into_iter().map(|r| u8::from(r[0] + r[1] > 0.0)).collect();
    let model = gbdt_fit(x.view(), &y, &GbdtParams::default()).unwrap();
    let imp = gbdt_feature_importance(&model).unwrap();
    assert!(imp.scores[0] > 0.0 && imp.scores[1] > 0.0);
    assert!(imp.scores[2] < imp.scores[0].min(imp.scores[1]));
    assert!((imp.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn synthetic_data_is_learnable() {
    let d = synth_dataset(400, 6, 3, 5).unwrap();
    let model = gbdt_fit(d.x.view(), &d.y, &GbdtParams::default()).unwrap();
    assert!(accuracy(&gbdt_predict(&model, d.x.view()).unwrap(), &d.y) > 0.85);
}

#[test]
fn model_json_round_trip() {
    let d = synth_dataset(60, 4, 2, 9).unwrap();
    let model = gbdt_fit(d.x.view(), &d.y, &GbdtParams::default()).unwrap();
    let back = GbdtModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back, model);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn training_loss_never_increases_and_fits_are_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = uniform(80, 3, &mut rng);
        let mut y: Vec<u8> = x.rows().into_iter().map(|r| u8::from(r[0] * r[1] + 0.3 * r[2] > 0.0)).collect();
        y[0] = 0;
        y[1] = 1;
        let params = GbdtParams { n_rounds: 20, ..GbdtParams::default() };
        let a = gbdt_fit(x.view(), &y, &params).unwrap();
        for w in a.train_loss.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        let b = gbdt_fit(x.view(), &y, &params).unwrap();
        prop_assert_eq!(&a, &b);
        let p = gbdt_predict_proba(&a, x.view()).unwrap();
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        let imp = gbdt_feature_importance(&a).unwrap();
        prop_assert!(imp.scores.iter().all(|&s| s >= 0.0));
    }
}
