//! Accuracy-rewarded aggregation of per-tier importances into one global vector.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};
use crate::model::ModelKind;
use crate::qsvc::Metrics;
use crate::tiers::TierAssignment;
use crate::xai::{ImportanceMethod, ImportanceVector};

/// Outcome of one tier experiment. `importance.scores[k]` belongs to the tier's k-th feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierResult {
    pub tier_id: usize,
    pub model_accuracy: f64,
    pub importance: ImportanceVector,
    pub metrics: Metrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: ModelKind,
    pub explainer: ImportanceMethod,
}

/// Normalized importance over every feature of the dataset, in feature-index order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub scores: Vec<f64>,
    pub provenance: Provenance,
}

impl GlobalImportance {
    /// CSV with columns `feature_index,feature_name,normalized_score`.
    pub fn write_csv<W: Write>(&self, feature_names: &[String], w: W) -> Result<()> {
        if feature_names.len() != self.scores.len() {
            return Err(QfiError::validation(format!(
                "{} feature names for {} scores",
                feature_names.len(),
                self.scores.len()
            )));
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["feature_index", "feature_name", "normalized_score"])?;
        for (i, (name, score)) in feature_names.iter().zip(&self.scores).enumerate() {
            out.write_record([i.to_string(), name.clone(), score.to_string()])?;
        }
        out.flush().map_err(|e| QfiError::Serde(e.to_string()))?;
        Ok(())
    }
}

fn check_accuracy(accuracy: f64) -> Result<()> {
    if (0.0..=1.0).contains(&accuracy) {
        Ok(())
    } else {
        Err(QfiError::validation(format!(
            "accuracy {accuracy} lies outside [0, 1]"
        )))
    }
}

/// Feature importance reward `fir = 1/2 (e^a x + tan(a) x) + x` with `a` the tier accuracy in [0, 1].
pub fn reward(x: f64, accuracy: f64) -> Result<f64> {
    check_accuracy(accuracy)?;
    Ok(0.5 * (accuracy.exp() * x + accuracy.tan() * x) + x)
}

/// Floors negatives to zero and rescales onto the simplex.
pub fn normalize(fir: &[f64]) -> Result<Vec<f64>> {
    if fir.iter().any(|v| !v.is_finite()) {
        return Err(QfiError::validation("cannot normalize non-finite importances"));
    }
    let floored: Vec<f64> = fir.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = floored.iter().sum();
    if total <= 0.0 {
        return Err(QfiError::DegenerateNormalization);
    }
    Ok(floored.iter().map(|v| v / total).collect())
}

/// Rewards each feature with its own tier's accuracy, then normalizes over all features.
///
/// Returns the global vector and the unweighted mean of the tier accuracies.
/// Results may arrive in any order; every tier must appear exactly once.
pub fn aggregate_tiers(
    results: &[TierResult],
    assignment: &TierAssignment,
    provenance: Provenance,
) -> Result<(GlobalImportance, f64)> {
    let n_tiers = assignment.n_tiers();
    let mut by_tier: Vec<Option<&TierResult>> = vec![None; n_tiers];
    for r in results {
        let slot = by_tier.get_mut(r.tier_id).ok_or_else(|| {
            QfiError::validation(format!("result for unknown tier {}", r.tier_id))
        })?;
        if slot.replace(r).is_some() {
            return Err(QfiError::validation(format!(
                "duplicate result for tier {}",
                r.tier_id
            )));
        }
    }
    let mut fir = vec![0.0; assignment.n_features];
    let mut accuracy_sum = 0.0;
    for (t, (slot, features)) in by_tier.iter().zip(&assignment.tiers).enumerate() {
        let r = slot.ok_or_else(|| QfiError::validation(format!("missing result for tier {t}")))?;
        if r.importance.len() != features.len() {
            return Err(QfiError::validation(format!(
                "tier {t} has {} features but {} importance scores",
                features.len(),
                r.importance.len()
            )));
        }
        for (&feature, &raw) in features.iter().zip(&r.importance.scores) {
            fir[feature] = reward(raw, r.model_accuracy)?;
        }
        accuracy_sum += r.model_accuracy;
    }
    let scores = normalize(&fir)?;
    Ok((
        GlobalImportance { scores, provenance },
        accuracy_sum / n_tiers as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiers::assign_tiers;

    #[test]
    fn reward_spot_values() {
        assert_eq!(reward(2.0, 0.0).unwrap(), 3.0);
        assert_eq!(reward(0.0, 0.73).unwrap(), 0.0);
        assert!((reward(1.0, 1.0).unwrap() - 3.137844777).abs() < 1e-8);
        assert!(reward(1.0, 1.01).is_err());
        assert!(reward(1.0, -0.1).is_err());
    }

    #[test]
    fn normalize_examples() {
        let out = normalize(&[2.0, 3.0, 5.0]).unwrap();
        for (a, b) in out.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(normalize(&[-1.0, 1.0, 1.0]).unwrap(), vec![0.0, 0.5, 0.5]);
        assert!(matches!(
            normalize(&[0.0, -2.0]),
            Err(QfiError::DegenerateNormalization)
        ));
    }

    fn tier_result(tier_id: usize, accuracy: f64, scores: Vec<f64>) -> TierResult {
        TierResult {
            tier_id,
            model_accuracy: accuracy,
            importance: ImportanceVector::new(scores, ImportanceMethod::Pi, "test").unwrap(),
            metrics: Metrics {
                accuracy,
                f1: accuracy,
                recall: accuracy,
                precision: accuracy,
            },
        }
    }

    const PROV: Provenance = Provenance {
        model: ModelKind::Qsvc,
        explainer: ImportanceMethod::Pi,
    };

    #[test]
    fn single_uniform_tier() {
        let assignment = assign_tiers(&(0..10).collect::<Vec<_>>(), 10, 10).unwrap();
        let (global, acc) =
            aggregate_tiers(&[tier_result(0, 0.7, vec![0.1; 10])], &assignment, PROV).unwrap();
        assert!(global.scores.iter().all(|&s| (s - 0.1).abs() < 1e-15));
        assert_eq!(acc, 0.7);
    }

    #[test]
    fn missing_and_duplicate_tiers() {
        let assignment = assign_tiers(&[0, 1, 2, 3], 4, 2).unwrap();
        let a = tier_result(0, 0.5, vec![1.0, 1.0]);
        let b = tier_result(1, 0.5, vec![1.0, 1.0]);
        assert!(aggregate_tiers(std::slice::from_ref(&a), &assignment, PROV).is_err());
        assert!(aggregate_tiers(&[a.clone(), a.clone()], &assignment, PROV).is_err());
        assert!(aggregate_tiers(&[a, tier_result(2, 0.5, vec![1.0, 1.0])], &assignment, PROV).is_err());
        assert!(aggregate_tiers(&[b, tier_result(0, 0.5, vec![1.0])], &assignment, PROV).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = GlobalImportance {
            scores: vec![0.25, 0.75],
            provenance: PROV,
        };
        let mut buf = Vec::new();
        g.write_csv(&["x".into(), "y".into()], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "feature_index,feature_name,normalized_score\n0,x,0.25\n1,y,0.75\n"
        );
    }
}
