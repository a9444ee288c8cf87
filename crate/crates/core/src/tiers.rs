//! Correlation ranking, fixed-size feature tiers, angle scaling and the train/test split.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};

pub const DEFAULT_TIER_SIZE: usize = 10;

fn check_labels(y: &[u8]) -> Result<()> {
    if let Some(i) = y.iter().position(|&v| v > 1) {
        return Err(QfiError::validation(format!(
            "label {} at row {i} is not binary",
            y[i]
        )));
    }
    Ok(())
}

/// Pearson correlation of one column with the labels; 0 when either side has no variance.
pub fn pearson_with_labels(column: &[f64], y: &[u8]) -> f64 {
    let n = column.len() as f64;
    let mean_x = column.iter().sum::<f64>() / n;
    let mean_y = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&xv, &yv) in column.iter().zip(y) {
        let dx = xv - mean_x;
        let dy = f64::from(yv) - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        sxy / (sxx.sqrt() * syy.sqrt())
    }
}

/// `|r|` of every column against the label.
pub fn label_correlations(x: ArrayView2<f64>, y: &[u8]) -> Result<Vec<f64>> {
    if x.nrows() < 2 || x.ncols() == 0 {
        return Err(QfiError::validation(format!(
            "correlation ranking needs at least 2 rows and 1 feature, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if x.nrows() != y.len() {
        return Err(QfiError::validation(format!(
            "{} rows against {} labels",
            x.nrows(),
            y.len()
        )));
    }
    check_labels(y)?;
    Ok(x.axis_iter(Axis(1))
        .map(|col| pearson_with_labels(&col.to_vec(), y).abs())
        .collect())
}

/// Feature indices ordered by `|r|` with the label, strongest first; ties by index.
pub fn rank_by_label_correlation(x: ArrayView2<f64>, y: &[u8]) -> Result<Vec<usize>> {
    let corr = label_correlations(x, y)?;
    let mut order: Vec<usize> = (0..corr.len()).collect();
    order.sort_by(|&a, &b| corr[b].total_cmp(&corr[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Partition of the feature indices into ordered, fixed-size tiers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierAssignment {
    pub tiers: Vec<Vec<usize>>,
    pub tier_size: usize,
    pub n_features: usize,
}

impl TierAssignment {
    pub fn n_tiers(&self) -> usize {
        self.tiers.len()
    }

    /// `tier_of[feature] = tier id`.
    pub fn tier_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_features];
        for (t, tier) in self.tiers.iter().enumerate() {
            for &f in tier {
                out[f] = t;
            }
        }
        out
    }

    /// Tiers flattened back into one ordering.
    pub fn ordering(&self) -> Vec<usize> {
        self.tiers.concat()
    }

    fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.n_features];
        for tier in &self.tiers {
            if tier.is_empty() {
                return Err(QfiError::validation("empty tier"));
            }
            for &f in tier {
                if f >= self.n_features || seen[f] {
                    return Err(QfiError::validation(format!(
                        "feature {f} is out of range or assigned twice"
                    )));
                }
                seen[f] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(QfiError::validation(format!(
                "feature {missing} is not assigned to any tier"
            )));
        }
        Ok(())
    }

    /// CSV with columns `feature_name,tier_id`, listed tier by tier.
    pub fn write_csv<W: Write>(&self, feature_names: &[String], w: W) -> Result<()> {
        if feature_names.len() != self.n_features {
            return Err(QfiError::validation(format!(
                "{} feature names for {} features",
                feature_names.len(),
                self.n_features
            )));
        }
        let tier_of = self.tier_of();
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["feature_name", "tier_id"])?;
        for &f in &self.ordering() {
            out.write_record([feature_names[f].as_str(), &tier_of[f].to_string()])?;
        }
        out.flush().map_err(|e| QfiError::Serde(e.to_string()))?;
        Ok(())
    }

    /// Reads a `feature_name,tier_id` map against the dataset's feature names.
    ///
    /// Tier ids must be contiguous from 0; within a tier, features keep file order.
    pub fn read_csv<R: Read>(feature_names: &[String], r: R) -> Result<Self> {
        let index: HashMap<&str, usize> = feature_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut reader = csv::Reader::from_reader(r);
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| QfiError::validation(format!("tier map lacks a '{name}' column")))
        };
        let (name_col, tier_col) = (col("feature_name")?, col("tier_id")?);
        let mut tiers: Vec<Vec<usize>> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let name = record.get(name_col).unwrap_or("").trim();
            let tier: usize = record.get(tier_col).unwrap_or("").trim().parse().map_err(|_| {
                QfiError::validation(format!("tier map row {}: bad tier id", line + 2))
            })?;
            let &feature = index.get(name).ok_or_else(|| {
                QfiError::validation(format!(
                    "tier map row {}: unknown feature '{name}'",
                    line + 2
                ))
            })?;
            if tiers.len() <= tier {
                tiers.resize_with(tier + 1, Vec::new);
            }
            tiers[tier].push(feature);
        }
        let tier_size = tiers.iter().map(Vec::len).max().unwrap_or(0);
        let assignment = TierAssignment {
            tiers,
            tier_size,
            n_features: feature_names.len(),
        };
        assignment.validate()?;
        Ok(assignment)
    }
}

/// Cuts `ordering` into consecutive chunks of `tier_size`; the last tier may be shorter.
pub fn assign_tiers(ordering: &[usize], n_features: usize, tier_size: usize) -> Result<TierAssignment> {
    if tier_size == 0 {
        return Err(QfiError::validation("tier_size must be at least 1"));
    }
    if ordering.len() != n_features {
        return Err(QfiError::validation(format!(
            "ordering lists {} features, expected {n_features}",
            ordering.len()
        )));
    }
    let assignment = TierAssignment {
        tiers: ordering.chunks(tier_size).map(<[usize]>::to_vec).collect(),
        tier_size,
        n_features,
    };
    assignment.validate()?;
    Ok(assignment)
}

/// Per-feature min/max fitted on training data; maps values onto `[0, pi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

pub fn fit_scaling(x_train: ArrayView2<f64>) -> Result<ScalingParams> {
    if x_train.nrows() == 0 {
        return Err(QfiError::validation("cannot fit scaling on zero rows"));
    }
    let (mins, maxs) = x_train
        .axis_iter(Axis(1))
        .map(|col| {
            col.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        })
        .unzip();
    Ok(ScalingParams { mins, maxs })
}

/// `x' = pi (x - min) / (max - min)`, clipped to `[0, pi]`; constant features map to `pi / 2`.
pub fn apply_scaling(params: &ScalingParams, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    apply_scaling_to(params, x, PI)
}

/// As [`apply_scaling`] with `[0, upper]` as the target range.
pub fn apply_scaling_to(params: &ScalingParams, x: ArrayView2<f64>, upper: f64) -> Result<Array2<f64>> {
    if !(upper > 0.0 && upper.is_finite()) {
        return Err(QfiError::validation(format!("scaling range must be positive, got {upper}")));
    }
    if x.ncols() != params.mins.len() {
        return Err(QfiError::validation(format!(
            "scaling fitted on {} features, data has {}",
            params.mins.len(),
            x.ncols()
        )));
    }
    let mut out = x.to_owned();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let (lo, hi) = (params.mins[j], params.maxs[j]);
        let span = hi - lo;
        col.mapv_inplace(|v| {
            if span > 0.0 {
                (upper * (v - lo) / span).clamp(0.0, upper)
            } else {
                upper / 2.0
            }
        });
    }
    Ok(out)
}

/// Row indices of a train/test split, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded, stratified split with `round(train_fraction * n)` training rows.
///
/// Each class is shuffled independently and contributes its proportional share
/// to both parts (largest remainder), keeping at least one row of each class on
/// each side whenever that class has two or more rows.
pub fn split(y: &[u8], train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(QfiError::validation(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    check_labels(y)?;
    let n = y.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(QfiError::validation(format!(
            "{n} rows are too few to split at fraction {train_fraction}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(), Vec::new()];
    for (i, &label) in y.iter().enumerate() {
        classes[label as usize].push(i);
    }
    for members in &mut classes {
        members.shuffle(&mut rng);
    }

    // proportional quotas, remainder to the larger fractional part
    let sizes = [classes[0].len(), classes[1].len()];
    let exact = sizes.map(|s| s as f64 * n_train as f64 / n as f64);
    let mut quota = exact.map(|e| e.floor() as usize);
    let by_fraction = if exact[1].fract() > exact[0].fract() { [1, 0] } else { [0, 1] };
    for c in by_fraction {
        if quota[0] + quota[1] < n_train && quota[c] < sizes[c] {
            quota[c] += 1;
        }
    }
    // keep each class with two or more rows on both sides
    for c in 0..2 {
        let other = 1 - c;
        if sizes[c] >= 2 && quota[c] == 0 && quota[other] > 0 {
            quota[c] += 1;
            quota[other] -= 1;
        }
        if sizes[c] >= 2 && quota[c] == sizes[c] && quota[other] < sizes[other] {
            quota[c] -= 1;
            quota[other] += 1;
        }
    }

    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (c, members) in classes.iter().enumerate() {
        train.extend_from_slice(&members[..quota[c]]);
        test.extend_from_slice(&members[quota[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Copies the given rows of `x`.
pub fn take_rows(x: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

/// Copies the given columns of `x`.
pub fn take_columns(x: ArrayView2<f64>, cols: &[usize]) -> Array2<f64> {
    x.select(Axis(1), cols)
}

pub fn take_labels(y: &[u8], rows: &[usize]) -> Vec<u8> {
    rows.iter().map(|&i| y[i]).collect()
}
