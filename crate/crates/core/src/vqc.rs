//! Variational quantum classifier: ZZ feature map, RotY/CNOT ansatz, SPSA training.
//!
//! The class-1 probability is read from the global Z-parity,
//! `p = (1 - <Z...Z>) / 2`, and the loss is clamped binary cross-entropy.

use std::f64::consts::PI;

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};
use crate::model::{check_width, Classifier};
use crate::qsim::{
    ansatz_parameter_count, build_ry_ansatz, build_zz_feature_map, run_circuit, FeatureMapSpec,
    StateVector,
};
use crate::qsvc::signed_labels;

/// Probability clamp used by the cross-entropy loss.
pub const PROB_CLAMP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Spsa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqcSpec {
    pub feature_map: FeatureMapSpec,
    pub ansatz_reps: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub max_iterations: usize,
    pub seed: u64,
}

impl VqcSpec {
    pub fn validate(&self) -> Result<()> {
        self.feature_map.validate()?;
        if self.max_iterations == 0 {
            return Err(QfiError::validation("VQC max_iterations must be at least 1"));
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.feature_map.feature_dimension
    }

    pub fn n_parameters(&self) -> usize {
        ansatz_parameter_count(self.n_qubits(), self.ansatz_reps)
    }
}

/// Trained parameters plus the loss seen at every SPSA iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct VqcModel {
    pub spec: VqcSpec,
    pub theta: Vec<f64>,
    pub loss_history: Vec<f64>,
    /// Loss at the returned parameters (the best iterate).
    pub final_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct VqcModelFile {
    spec: VqcSpec,
    theta: Vec<f64>,
    final_loss: f64,
}

impl VqcModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&VqcModelFile {
            spec: self.spec,
            theta: self.theta.clone(),
            final_loss: self.final_loss,
        })?)
    }

    /// Restores a model; only the final loss survives serialization.
    pub fn from_json(s: &str) -> Result<Self> {
        let file: VqcModelFile = serde_json::from_str(s)?;
        file.spec.validate()?;
        if file.theta.len() != file.spec.n_parameters() {
            return Err(QfiError::validation(format!(
                "model file has {} parameters, spec needs {}",
                file.theta.len(),
                file.spec.n_parameters()
            )));
        }
        Ok(VqcModel {
            spec: file.spec,
            theta: file.theta,
            loss_history: vec![file.final_loss],
            final_loss: file.final_loss,
        })
    }

    pub fn probabilities(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        vqc_probabilities(x, &self.theta, &self.spec)
    }
}

impl Classifier for VqcModel {
    fn n_features(&self) -> usize {
        self.spec.n_qubits()
    }

    fn scores(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_width(x, self.n_features())?;
        self.probabilities(x)
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<u8>> {
        Ok(threshold_probabilities(&self.scores(x)?))
    }
}

/// `p(class 1) = (1 - <Z-parity>) / 2` for the state `ansatz(theta) U_ZZ(x) |0>`.
pub fn vqc_forward(x: &[f64], theta: &[f64], spec: &VqcSpec) -> Result<f64> {
    let n = spec.n_qubits();
    let mut circuit = build_zz_feature_map(x, &spec.feature_map)?;
    circuit.extend(&build_ry_ansatz(n, spec.ansatz_reps, theta)?)?;
    let state = run_circuit(&StateVector::zero(n)?, &circuit)?;
    Ok(((1.0 - state.z_parity_expectation()) / 2.0).clamp(0.0, 1.0))
}

/// Forward pass over every row; rows are evaluated in parallel, output order is fixed.
pub fn vqc_probabilities(x: ArrayView2<f64>, theta: &[f64], spec: &VqcSpec) -> Result<Vec<f64>> {
    if x.ncols() != spec.n_qubits() {
        return Err(QfiError::validation(format!(
            "data has {} columns, VQC expects {}",
            x.ncols(),
            spec.n_qubits()
        )));
    }
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    rows.par_iter()
        .map(|row| vqc_forward(row, theta, spec))
        .collect()
}

/// Label 1 when `p >= 0.5`.
pub fn threshold_probabilities(p: &[f64]) -> Vec<u8> {
    p.iter().map(|&v| u8::from(v >= 0.5)).collect()
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-10, 1 - 1e-10]`.
pub fn binary_cross_entropy(probs: &[f64], y: &[u8]) -> Result<f64> {
    if probs.is_empty() {
        return Err(QfiError::validation("cross-entropy over zero samples"));
    }
    if probs.len() != y.len() {
        return Err(QfiError::validation(format!(
            "{} probabilities against {} labels",
            probs.len(),
            y.len()
        )));
    }
    let total: f64 = probs
        .iter()
        .zip(y)
        .map(|(&p, &label)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if label == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

pub fn vqc_loss(theta: &[f64], x: ArrayView2<f64>, y: &[u8], spec: &VqcSpec) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(QfiError::validation("VQC loss over an empty dataset"));
    }
    binary_cross_entropy(&vqc_probabilities(x, theta, spec)?, y)
}

/// SPSA gain schedule and seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpsaConfig {
    pub max_iterations: usize,
    pub seed: u64,
    pub a: f64,
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl SpsaConfig {
    pub fn new(max_iterations: usize, seed: u64) -> Self {
        SpsaConfig {
            max_iterations,
            seed,
            a: 0.1,
            c: 0.1,
            alpha: 0.602,
            gamma: 0.101,
        }
    }

    /// Stability constant `A = max_iterations / 10`.
    pub fn stability(&self) -> f64 {
        self.max_iterations as f64 / 10.0
    }

    pub fn step_gain(&self, k: usize) -> f64 {
        self.a / (k as f64 + 1.0 + self.stability()).powf(self.alpha)
    }

    pub fn perturbation_gain(&self, k: usize) -> f64 {
        self.c / (k as f64 + 1.0).powf(self.gamma)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpsaOutcome {
    /// Best parameters seen, not necessarily the last iterate.
    pub theta: Vec<f64>,
    pub best_loss: f64,
    /// Loss at `theta0` followed by the loss after every update.
    pub loss_history: Vec<f64>,
}

/// Minimises `loss` from `theta0` with simultaneous-perturbation stochastic approximation.
///
/// Each iteration draws a Rademacher direction `d`, evaluates `loss(theta +- c_k d)`,
/// forms `g_i = (L+ - L-) / (2 c_k d_i)` and steps `theta -= a_k g`. Directions come from
/// a ChaCha8 stream seeded with `config.seed`, one `bool` per coordinate.
pub fn spsa_minimize<F>(mut loss: F, theta0: &[f64], config: &SpsaConfig) -> Result<SpsaOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut eval = |theta: &[f64], iteration: usize| -> Result<f64> {
        let v = loss(theta)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QfiError::Optimizer {
                iteration,
                reason: format!("loss evaluated to {v}"),
            })
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta = theta0.to_vec();
    let initial = eval(&theta, 0)?;
    let mut history = Vec::with_capacity(config.max_iterations + 1);
    history.push(initial);
    let mut best = (theta.clone(), initial);

    let p = theta.len();
    let mut plus = vec![0.0; p];
    let mut minus = vec![0.0; p];
    for k in 0..config.max_iterations {
        let a_k = config.step_gain(k);
        let c_k = config.perturbation_gain(k);
        let delta: Vec<f64> = (0..p)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        for i in 0..p {
            plus[i] = theta[i] + c_k * delta[i];
            minus[i] = theta[i] - c_k * delta[i];
        }
        let diff = eval(&plus, k + 1)? - eval(&minus, k + 1)?;
        for i in 0..p {
            theta[i] -= a_k * diff / (2.0 * c_k * delta[i]);
        }
        let current = eval(&theta, k + 1)?;
        history.push(current);
        if current < best.1 {
            best = (theta.clone(), current);
        }
    }
    Ok(SpsaOutcome {
        theta: best.0,
        best_loss: best.1,
        loss_history: history,
    })
}

/// Initial parameters, uniform on `(-pi, pi)`, from stream 1 of the spec seed.
pub fn initial_parameters(spec: &VqcSpec) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    (0..spec.n_parameters())
        .map(|_| rng.random_range(-PI..PI))
        .collect()
}

pub fn vqc_fit(x: ArrayView2<f64>, y: &[u8], spec: &VqcSpec) -> Result<VqcModel> {
    spec.validate()?;
    if x.nrows() != y.len() {
        return Err(QfiError::validation(format!(
            "{} rows against {} labels",
            x.nrows(),
            y.len()
        )));
    }
    signed_labels(y)?;
    let theta0 = initial_parameters(spec);
    let config = SpsaConfig::new(spec.max_iterations, spec.seed);
    let outcome = spsa_minimize(|theta| vqc_loss(theta, x, y, spec), &theta0, &config)?;
    Ok(VqcModel {
        spec: *spec,
        theta: outcome.theta,
        loss_history: outcome.loss_history,
        final_loss: outcome.best_loss,
    })
}

pub fn vqc_predict(model: &VqcModel, x: ArrayView2<f64>) -> Result<Vec<u8>> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spec2(reps: usize) -> VqcSpec {
        VqcSpec {
            feature_map: FeatureMapSpec::new(2, 1).unwrap(),
            ansatz_reps: reps,
            optimizer: OptimizerKind::Spsa,
            max_iterations: 10,
            seed: 3,
        }
    }

    #[test]
    fn plus_plus_state_gives_half() {
        let p = vqc_forward(&[PI, PI], &[0.0; 4], &spec2(1)).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn threshold_rule() {
        assert_eq!(threshold_probabilities(&[0.2, 0.5, 0.9]), vec![0, 1, 1]);
    }

    #[test]
    fn cross_entropy_endpoints() {
        let perfect = binary_cross_entropy(&[1.0, 0.0], &[1, 0]).unwrap();
        assert!(perfect < 1e-8);
        let flat = binary_cross_entropy(&[0.5; 4], &[1, 0, 1, 1]).unwrap();
        assert!((flat - std::f64::consts::LN_2).abs() < 1e-15);
        let worst = binary_cross_entropy(&[0.0], &[1]).unwrap();
        assert!(worst.is_finite());
        assert!(binary_cross_entropy(&[], &[]).is_err());
    }

    #[test]
    fn loss_rejects_empty_data() {
        let x = ndarray::Array2::<f64>::zeros((0, 2));
        assert!(vqc_loss(&[0.0; 4], x.view(), &[], &spec2(1)).is_err());
    }

    #[test]
    fn forward_rejects_wrong_sizes() {
        assert!(vqc_forward(&[0.1], &[0.0; 4], &spec2(1)).is_err());
        assert!(vqc_forward(&[0.1, 0.2], &[0.0; 3], &spec2(1)).is_err());
    }

    #[test]
    fn spsa_zero_iterations_is_identity() {
        let out = spsa_minimize(|t| Ok(t[0] * t[0]), &[0.7], &SpsaConfig::new(0, 1)).unwrap();
        assert_eq!(out.theta, vec![0.7]);
        assert_eq!(out.loss_history.len(), 1);
    }

    #[test]
    fn spsa_aborts_on_non_finite_loss() {
        let err = spsa_minimize(|_| Ok(f64::NAN), &[0.0], &SpsaConfig::new(5, 1)).unwrap_err();
        assert!(matches!(err, QfiError::Optimizer { iteration: 0, .. }));
    }

    #[test]
    fn fit_rejects_single_class() {
        let x = array![[0.1, 0.2], [0.3, 0.4]];
        assert!(matches!(
            vqc_fit(x.view(), &[1, 1], &spec2(1)),
            Err(QfiError::DegenerateLabels(_))
        ));
    }

    #[test]
    fn fit_never_ends_worse_than_start() {
        let x = array![[0.1, 0.2], [2.9, 2.7], [0.4, 0.3], [2.5, 3.0]];
        let y = [0, 1, 0, 1];
        let model = vqc_fit(x.view(), &y, &spec2(1)).unwrap();
        assert_eq!(model.theta.len(), 4);
        assert_eq!(model.loss_history.len(), 11);
        assert!(model.final_loss <= model.loss_history[0]);
        let again = vqc_fit(x.view(), &y, &spec2(1)).unwrap();
        assert_eq!(model, again);
    }

    #[test]
    fn model_json_round_trip() {
        let x = array![[0.1, 0.2], [2.9, 2.7]];
        let model = vqc_fit(x.view(), &[0, 1], &spec2(1)).unwrap();
        let json = model.to_json().unwrap();
        assert!(json.contains("final_loss"));
        let back = VqcModel::from_json(&json).unwrap();
        assert_eq!(back.theta, model.theta);
        assert_eq!(back.spec, model.spec);
    }
}
