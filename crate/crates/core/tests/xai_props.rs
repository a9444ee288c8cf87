use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use qfi_core::xai::{ale_curve, ale_importance, map_rows, pdp_value, permutation_importance};
use qfi_core::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| rng.random_range(0.0..1.0))
}

fn accuracy_of(pred: &[u8], y: &[u8]) -> f64 {
    pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

#[test]
fn single_repeat_drop_from_eighty_to_sixty() {
    let x = uniform(10, 2, 0);
    let original = x.column(0).to_vec();
    // Scores 0.80 on the untouched column and 0.60 once it has been shuffled.
    let score = |xs: ArrayView2<f64>, _: &[u8]| -> Result<f64> {
        Ok(if xs.column(0).to_vec() == original { 0.80 } else { 0.60 })
    };
    let imp = permutation_importance(score, x.view(), &[0; 10], 1, 5).unwrap();
    assert!((imp[0] - 0.20).abs() < 1e-12);
    assert_eq!(imp[1], 0.0);
}

#[test]
fn constant_column_scores_exactly_zero() {
    let mut x = uniform(50, 3, 1);
    x.column_mut(2).fill(0.7);
    let y: Vec<u8> = x.column(0).iter().map(|&v| u8::from(v > 0.5)).collect();
    let score = |xs: ArrayView2<f64>, ys: &[u8]| -> Result<f64> {
        let pred: Vec<u8> = xs.rows().into_iter().map(|r| u8::from(r[0] + 0.1 * r[2] > 0.57)).collect();
        Ok(accuracy_of(&pred, ys))
    };
    let imp = permutation_importance(score, x.view(), &y, 5, 3).unwrap();
    assert_eq!(imp[2], 0.0);
    assert!(imp[0] > 0.2);
}

#[test]
fn noise_feature_is_unimportant() {
    let n = 500;
    let x = uniform(n, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    // Labels follow feature 0 with 10% flips.
    let y: Vec<u8> = x
        .column(0)
        .iter()
        .map(|&v| u8::from(v > 0.5) ^ u8::from(rng.random_bool(0.1)))
        .collect();
    let model = |xs: ArrayView2<f64>| -> Vec<u8> { xs.column(0).iter().map(|&v| u8::from(v > 0.5)).collect() };
    let score = |xs: ArrayView2<f64>, ys: &[u8]| -> Result<f64> { Ok(accuracy_of(&model(xs), ys)) };
    let imp = permutation_importance(score, x.view(), &y, 5, 7).unwrap();
    assert!(imp[1].abs() < 0.05);

    // Brute force: average score drop over 50 independent shuffles of each column.
    let base = accuracy_of(&model(x.view()), &y);
    for (j, &reported) in imp.iter().enumerate() {
        let mut total = 0.0;
        for _ in 0..50 {
            let mut shuffled = x.clone();
            let mut col = x.column(j).to_vec();
            col.shuffle(&mut rng);
            shuffled.column_mut(j).assign(&ndarray::Array1::from(col));
            total += base - accuracy_of(&model(shuffled.view()), &y);
        }
        let brute = total / 50.0;
        assert!((brute - reported).abs() < 0.05, "feature {j}: {brute} vs {reported}");
    }
    assert!(imp[0] > 0.3);
}

#[test]
fn permutation_importance_is_seeded() {
    let x = uniform(40, 3, 4);
    let y: Vec<u8> = x.column(1).iter().map(|&v| u8::from(v > 0.4)).collect();
    let score = |xs: ArrayView2<f64>, ys: &[u8]| -> Result<f64> {
        let pred: Vec<u8> = xs.column(1).iter().map(|&v| u8::from(v > 0.5)).collect();
        Ok(accuracy_of(&pred, ys))
    };
    let a = permutation_importance(score, x.view(), &y, 5, 9).unwrap();
    let b = permutation_importance(score, x.view(), &y, 5, 9).unwrap();
    assert_eq!(a, b);
}

fn linear(coef: Vec<f64>) -> impl Fn(ArrayView2<f64>) -> Result<Vec<f64>> {
    move |xs| Ok(map_rows(xs, |r| r.iter().zip(&coef).map(|(a, b)| a * b).sum()))
}

#[test]
fn ale_of_linear_model_recovers_slope() {
    let x = uniform(1000, 2, 6);
    let curve = ale_curve(linear(vec![3.0, 0.0]), x.view(), 0, 10).unwrap();
    let n: usize = curve.interval_counts.iter().sum();
    let m = curve
        .interval_counts
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * curve.interval_edges[k + 1])
        .sum::<f64>()
        / n as f64;
    for (z, e) in curve.interval_edges.iter().zip(&curve.centered_effects) {
        assert!((e - 3.0 * (z - m)).abs() < 1e-8);
    }
    for k in 1..curve.interval_edges.len() {
        let slope = (curve.centered_effects[k] - curve.centered_effects[k - 1])
            / (curve.interval_edges[k] - curve.interval_edges[k - 1]);
        assert!((slope - 3.0).abs() < 0.03);
    }
    assert!(curve.weighted_mean().abs() < 1e-8);
    let span = curve.interval_edges.last().unwrap() - curve.interval_edges[0];
    assert!((ale_importance(&curve) - 3.0 * span).abs() < 1e-8);
}

#[test]
fn ale_ignores_correlated_partner() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut x = Array2::zeros((100, 2));
    for i in 0..100 {
        let a: f64 = rng.random_range(0.0..1.0);
        x[[i, 0]] = a;
        x[[i, 1]] = a + 0.05 * rng.random_range(-1.0..1.0);
    }
    let f = linear(vec![1.0, 1.0]);
    let curve = ale_curve(&f, x.view(), 0, 8).unwrap();

    // Per-interval differences computed by hand.
    let edges = &curve.interval_edges;
    let mut acc = vec![0.0];
    for k in 1..edges.len() {
        let members: Vec<usize> = (0..100)
            .filter(|&i| {
                let v = x[[i, 0]];
                (v > edges[k - 1] || (k == 1 && v == edges[0])) && v <= edges[k]
            })
            .collect();
        let mean = members
            .iter()
            .map(|&i| (edges[k] + x[[i, 1]]) - (edges[k - 1] + x[[i, 1]]))
            .sum::<f64>()
            / members.len() as f64;
        acc.push(acc[k - 1] + mean);
    }
    for k in 1..edges.len() {
        let slope = (curve.centered_effects[k] - curve.centered_effects[k - 1]) / (edges[k] - edges[k - 1]);
        assert!((slope - 1.0).abs() < 1e-9);
        assert!(((acc[k] - acc[k - 1]) - (edges[k] - edges[k - 1])).abs() < 1e-12);
    }
}

#[test]
fn ale_of_constant_model_is_zero() {
    let x = uniform(200, 3, 8);
    let curve = ale_curve(|xs: ArrayView2<f64>| Ok(vec![0.42; xs.nrows()]), x.view(), 1, 10).unwrap();
    assert!(curve.centered_effects.iter().all(|&e| e == 0.0));
    assert_eq!(ale_importance(&curve), 0.0);
}

#[test]
fn ale_and_pdp_slopes_agree_for_additive_models() {
    let x = uniform(1000, 2, 10);
    let f = |xs: ArrayView2<f64>| -> Result<Vec<f64>> { Ok(map_rows(xs, |r| 2.0 * r[0] + r[1] * r[1])) };
    let curve = ale_curve(f, x.view(), 0, 10).unwrap();
    let k = curve.interval_edges.len() - 1;
    let ale_slope = (curve.centered_effects[k] - curve.centered_effects[0])
        / (curve.interval_edges[k] - curve.interval_edges[0]);
    let (lo, hi) = (0.2, 0.8);
    let pdp_slope = (pdp_value(f, x.view(), 0, hi).unwrap() - pdp_value(f, x.view(), 0, lo).unwrap()) / (hi - lo);
    assert!((ale_slope - pdp_slope).abs() / pdp_slope.abs() < 0.05);
}

#[test]
fn pdp_of_product_is_value_times_partner_mean() {
    let x = uniform(300, 2, 13);
    let f = |xs: ArrayView2<f64>| -> Result<Vec<f64>> { Ok(map_rows(xs, |r| r[0] * r[1])) };
    let mean1 = x.column(1).sum() / 300.0;
    for v in [0.0, 0.25, 1.7] {
        assert!((pdp_value(f, x.view(), 0, v).unwrap() - v * mean1).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ale_curves_are_centred(
        seed in any::<u64>(),
        n in 2usize..200,
        intervals in 1usize..20,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let x = uniform(n, 2, seed);
        let f = move |xs: ArrayView2<f64>| -> Result<Vec<f64>> {
            Ok(map_rows(xs, |r| (a * r[0]).sin() + b * r[0] * r[1]))
        };
        let curve = ale_curve(f, x.view(), 0, intervals).unwrap();
        prop_assert!(curve.weighted_mean().abs() < 1e-8);
        prop_assert_eq!(curve.interval_counts.iter().sum::<usize>(), n);
        prop_assert!(curve.interval_edges.windows(2).all(|w| w[0] < w[1]));
    }
}
