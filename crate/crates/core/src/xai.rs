//! Model-agnostic explainers: permutation importance, accumulated local effects
//! and the partial-dependence estimator ALE is usually compared against.
//!
//! Both explainers treat the model as an opaque function of a data matrix, so
//! the same code explains kernel SVMs, variational circuits and boosted trees.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};
use crate::model::Classifier;

pub const DEFAULT_N_REPEATS: usize = 5;
pub const DEFAULT_ALE_INTERVALS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceMethod {
    Pi,
    Ale,
    /// Native split-gain attribution of the tree baseline.
    Gain,
}

impl ImportanceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ImportanceMethod::Pi => "pi",
            ImportanceMethod::Ale => "ale",
            ImportanceMethod::Gain => "gain",
        }
    }
}

impl fmt::Display for ImportanceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImportanceMethod {
    type Err = QfiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pi" | "permutation" => Ok(ImportanceMethod::Pi),
            "ale" => Ok(ImportanceMethod::Ale),
            "gain" => Ok(ImportanceMethod::Gain),
            other => Err(QfiError::validation(format!("unknown explainer '{other}'"))),
        }
    }
}

/// Per-feature scores from one explainer applied to one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub scores: Vec<f64>,
    pub method: ImportanceMethod,
    pub model_id: String,
}

impl ImportanceVector {
    pub fn new(scores: Vec<f64>, method: ImportanceMethod, model_id: impl Into<String>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(QfiError::validation(format!(
                "importance score for feature {i} is not finite"
            )));
        }
        Ok(ImportanceVector {
            scores,
            method,
            model_id: model_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// CSV with columns `feature_index,feature_name,score,method,model_id`.
    pub fn write_csv<W: Write>(&self, feature_names: &[String], w: W) -> Result<()> {
        if feature_names.len() != self.scores.len() {
            return Err(QfiError::validation(format!(
                "{} feature names for {} scores",
                feature_names.len(),
                self.scores.len()
            )));
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["feature_index", "feature_name", "score", "method", "model_id"])?;
        for (i, (name, score)) in feature_names.iter().zip(&self.scores).enumerate() {
            out.write_record([
                i.to_string(),
                name.clone(),
                score.to_string(),
                self.method.to_string(),
                self.model_id.clone(),
            ])?;
        }
        out.flush().map_err(|e| QfiError::Serde(e.to_string()))?;
        Ok(())
    }
}

/// Random stream for shuffling feature `j` on repeat `k`; independent of evaluation order.
fn shuffle_rng(seed: u64, feature: usize, repeat: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((feature as u64) << 32) | repeat as u64);
    rng
}

/// Permutation importance `i_j = s - (1/K) sum_k s_{k,j}`.
///
/// `score_fn` is evaluated once on the untouched data and once per
/// (feature, repeat) pair on a copy whose column `j` has been shuffled. The
/// caller's matrix is never modified. Scores may be negative when shuffling
/// happens to help.
pub fn permutation_importance<F>(
    score_fn: F,
    x: ArrayView2<f64>,
    y: &[u8],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<f64>>
where
    F: Fn(ArrayView2<f64>, &[u8]) -> Result<f64> + Sync,
{
    if n_repeats < 1 {
        return Err(QfiError::validation("n_repeats must be at least 1"));
    }
    if x.nrows() == 0 {
        return Err(QfiError::validation("permutation importance over zero rows"));
    }
    if x.nrows() != y.len() {
        return Err(QfiError::validation(format!(
            "{} rows against {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let baseline = score_fn(x, y)?;
    let d = x.ncols();
    let jobs: Vec<(usize, usize)> = (0..d)
        .flat_map(|j| (0..n_repeats).map(move |k| (j, k)))
        .collect();
    let permuted: Vec<f64> = jobs
        .par_iter()
        .map(|&(j, k)| {
            let mut column: Vec<f64> = x.column(j).to_vec();
            column.shuffle(&mut shuffle_rng(seed, j, k));
            let mut shuffled = x.to_owned();
            for (dst, src) in shuffled.column_mut(j).iter_mut().zip(column) {
                *dst = src;
            }
            score_fn(shuffled.view(), y)
        })
        .collect::<Result<_>>()?;
    Ok(permuted
        .chunks(n_repeats)
        .map(|scores| baseline - scores.iter().sum::<f64>() / n_repeats as f64)
        .collect())
}

/// Permutation importance of a classifier scored by accuracy.
pub fn classifier_permutation_importance(
    model: &dyn Classifier,
    x: ArrayView2<f64>,
    y: &[u8],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    permutation_importance(|xs, ys| model.accuracy(xs, ys), x, y, n_repeats, seed)
}

/// First-order ALE curve of one feature, evaluated at the interval edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AleCurve {
    pub feature_index: usize,
    /// Strictly ascending grid `z_0 < z_1 < ... < z_K`.
    pub interval_edges: Vec<f64>,
    /// Accumulated, mean-centred effect at each edge (`K + 1` values).
    pub centered_effects: Vec<f64>,
    /// Samples falling in each interval `(z_{k-1}, z_k]`; the first interval also holds `z_0`.
    pub interval_counts: Vec<usize>,
}

impl AleCurve {
    pub fn n_intervals(&self) -> usize {
        self.interval_counts.len()
    }

    /// Interval index (1-based, clamped to the grid) that `value` falls into.
    pub fn interval_of(&self, value: f64) -> usize {
        interval_index(&self.interval_edges, value)
    }

    /// ALE value assigned to a sample: the centred effect at its interval's upper edge.
    pub fn evaluate(&self, value: f64) -> f64 {
        self.centered_effects[self.interval_of(value)]
    }

    /// Sample-weighted mean of the curve; zero up to rounding.
    pub fn weighted_mean(&self) -> f64 {
        let n: usize = self.interval_counts.iter().sum();
        let total: f64 = self
            .interval_counts
            .iter()
            .enumerate()
            .map(|(k, &c)| c as f64 * self.centered_effects[k + 1])
            .sum();
        total / n as f64
    }
}

fn interval_index(edges: &[f64], value: f64) -> usize {
    let k = edges.partition_point(|&e| e < value);
    k.clamp(1, edges.len() - 1)
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Quantile grid at probabilities `k / n_intervals` with duplicate edges collapsed.
pub fn quantile_edges(values: &[f64], n_intervals: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = Vec::with_capacity(n_intervals + 1);
    for k in 0..=n_intervals {
        let q = quantile_sorted(&sorted, k as f64 / n_intervals as f64);
        if edges.last().is_none_or(|&last| q > last) {
            edges.push(q);
        }
    }
    edges
}

/// Accumulated local effects of feature `feature` on `predict_fn`.
///
/// Every sample in interval `(z_{k-1}, z_k]` contributes
/// `f(x | x_j = z_k) - f(x | x_j = z_{k-1})`. Interval means are accumulated from
/// `z_0`, and the running sums are shifted so the sample-weighted mean is zero.
pub fn ale_curve<F>(
    predict_fn: F,
    x: ArrayView2<f64>,
    feature: usize,
    n_intervals: usize,
) -> Result<AleCurve>
where
    F: Fn(ArrayView2<f64>) -> Result<Vec<f64>>,
{
    if n_intervals < 1 {
        return Err(QfiError::validation("ALE needs at least one interval"));
    }
    if feature >= x.ncols() {
        return Err(QfiError::validation(format!(
            "feature {feature} out of range for {} columns",
            x.ncols()
        )));
    }
    if x.nrows() == 0 {
        return Err(QfiError::validation("ALE over zero rows"));
    }
    let column: Vec<f64> = x.column(feature).to_vec();
    let edges = quantile_edges(&column, n_intervals);
    if edges.len() < 2 {
        return Err(QfiError::DegenerateFeature { feature });
    }
    let n_int = edges.len() - 1;
    let interval: Vec<usize> = column.iter().map(|&v| interval_index(&edges, v)).collect();

    let mut lower = x.to_owned();
    let mut upper = x.to_owned();
    for (i, &k) in interval.iter().enumerate() {
        lower[[i, feature]] = edges[k - 1];
        upper[[i, feature]] = edges[k];
    }
    let f_lower = predict_fn(lower.view())?;
    let f_upper = predict_fn(upper.view())?;
    if f_lower.len() != x.nrows() || f_upper.len() != x.nrows() {
        return Err(QfiError::validation("predict_fn returned the wrong number of outputs"));
    }

    let mut sums = vec![0.0; n_int];
    let mut counts = vec![0usize; n_int];
    for (i, &k) in interval.iter().enumerate() {
        sums[k - 1] += f_upper[i] - f_lower[i];
        counts[k - 1] += 1;
    }
    let mut accumulated = Vec::with_capacity(n_int + 1);
    accumulated.push(0.0);
    for k in 0..n_int {
        let mean = if counts[k] > 0 {
            sums[k] / counts[k] as f64
        } else {
            0.0
        };
        accumulated.push(accumulated[k] + mean);
    }
    let n = x.nrows() as f64;
    let offset: f64 = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * accumulated[k + 1])
        .sum::<f64>()
        / n;
    let centered_effects = accumulated.iter().map(|a| a - offset).collect();
    Ok(AleCurve {
        feature_index: feature,
        interval_edges: edges,
        centered_effects,
        interval_counts: counts,
    })
}

/// Range of the centred ALE curve.
pub fn ale_importance(curve: &AleCurve) -> f64 {
    let max = curve
        .centered_effects
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let min = curve
        .centered_effects
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if max.is_finite() && min.is_finite() {
        max - min
    } else {
        0.0
    }
}

/// ALE importance of every feature of a classifier, using its real-valued scores.
///
/// Constant features carry no effect and score 0.
pub fn classifier_ale_importance(
    model: &dyn Classifier,
    x: ArrayView2<f64>,
    n_intervals: usize,
) -> Result<Vec<f64>> {
    (0..x.ncols())
        .map(|j| match ale_curve(|xs| model.scores(xs), x, j, n_intervals) {
            Ok(curve) => Ok(ale_importance(&curve)),
            Err(QfiError::DegenerateFeature { .. }) => Ok(0.0),
            Err(e) => Err(e),
        })
        .collect()
}

/// Marginal-average partial dependence at `x_value`.
pub fn pdp_value<F>(predict_fn: F, x: ArrayView2<f64>, feature: usize, x_value: f64) -> Result<f64>
where
    F: Fn(ArrayView2<f64>) -> Result<Vec<f64>>,
{
    if x.nrows() == 0 {
        return Err(QfiError::validation("partial dependence over zero rows"));
    }
    if feature >= x.ncols() {
        return Err(QfiError::validation(format!(
            "feature {feature} out of range for {} columns",
            x.ncols()
        )));
    }
    let mut fixed: Array2<f64> = x.to_owned();
    fixed.column_mut(feature).fill(x_value);
    let out = predict_fn(fixed.view())?;
    Ok(out.iter().sum::<f64>() / out.len() as f64)
}

/// Row-wise helper for closures that score one row at a time.
pub fn map_rows<F>(x: ArrayView2<f64>, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    x.axis_iter(Axis(0)).map(|r| f(&r.to_vec())).collect()
}
