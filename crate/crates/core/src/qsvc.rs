//! Soft-margin SVM on precomputed kernels, trained with SMO.
//!
//! The dual is solved in minimisation form `f(a) = 1/2 a^T Q a - e^T a` with
//! `Q_ij = y_i y_j K_ij`, `0 <= a_i <= C` and `y^T a = 0`. Working pairs are chosen
//! by the maximal-violating-pair rule and updated analytically.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};
use crate::model::{check_width, Classifier};
use crate::qkernel::{EncodedPoints, KernelMatrix};
use crate::qsim::FeatureMapSpec;

/// Curvature floor for indefinite or degenerate pairs.
const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SvcParams {
    pub c: f64,
    /// Stop once the maximal KKT violation `m(a) - M(a)` drops below this.
    pub tolerance: f64,
    /// Defaults to `1000 * n` when `None`.
    pub max_iterations: Option<usize>,
    /// Keep the dual objective after every step (costs O(n) per step).
    pub record_trace: bool,
}

impl Default for SvcParams {
    fn default() -> Self {
        SvcParams {
            c: 1.0,
            tolerance: 1e-3,
            max_iterations: None,
            record_trace: false,
        }
    }
}

/// A fitted classifier. `dual_coefficients[i] = alpha_i * y_i` over all training points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvcModel {
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub support_indices: Vec<usize>,
    #[serde(rename = "C")]
    pub c: f64,
    pub training_labels: Vec<i8>,
}

impl SvcModel {
    pub fn n_train(&self) -> usize {
        self.dual_coefficients.len()
    }

    /// `alpha_i`, recovered from the signed coefficients.
    pub fn alphas(&self) -> Vec<f64> {
        self.dual_coefficients
            .iter()
            .zip(&self.training_labels)
            .map(|(coef, &y)| coef * f64::from(y))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Diagnostics from one SMO run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveSummary {
    pub iterations: usize,
    pub converged: bool,
    /// Final `m(a) - M(a)`.
    pub kkt_violation: f64,
    /// Dual objective `sum a - 1/2 a^T Q a` at the solution (maximisation form).
    pub dual_objective: f64,
    /// Dual objective before the first step and after every step, when traced.
    pub objective_trace: Vec<f64>,
    /// Worst `|sum a_i y_i|` seen across traced steps.
    pub max_equality_residual: f64,
    /// Worst excursion outside `[0, C]` seen across traced steps.
    pub max_bound_violation: f64,
}

/// Maps {0, 1} labels to {-1, +1}, requiring both classes.
pub fn signed_labels(y: &[u8]) -> Result<Vec<i8>> {
    let mut signed = Vec::with_capacity(y.len());
    for (i, &label) in y.iter().enumerate() {
        signed.push(match label {
            0 => -1,
            1 => 1,
            other => {
                return Err(QfiError::validation(format!(
                    "label {other} at position {i} is not 0 or 1"
                )))
            }
        });
    }
    let positives = signed.iter().filter(|&&s| s > 0).count();
    if positives == 0 || positives == signed.len() {
        return Err(QfiError::DegenerateLabels(format!(
            "all {} labels belong to one class",
            signed.len()
        )));
    }
    Ok(signed)
}

pub fn fit_precomputed(k: &KernelMatrix, y: &[u8], c: f64) -> Result<SvcModel> {
    let params = SvcParams {
        c,
        ..SvcParams::default()
    };
    fit_precomputed_with(k, y, &params).map(|(model, _)| model)
}

pub fn fit_precomputed_with(
    k: &KernelMatrix,
    y: &[u8],
    params: &SvcParams,
) -> Result<(SvcModel, SolveSummary)> {
    let n = k.rows();
    if !k.is_symmetric() || k.cols() != n {
        return Err(QfiError::validation(
            "SVC training needs a symmetric square kernel matrix",
        ));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (k.get(i, j) - k.get(j, i)).abs() > 1e-10 {
                return Err(QfiError::validation(format!(
                    "kernel matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    if y.len() != n {
        return Err(QfiError::validation(format!(
            "{} labels for a {n}x{n} kernel",
            y.len()
        )));
    }
    if !(params.c.is_finite() && params.c > 0.0) {
        return Err(QfiError::validation(format!(
            "regularization C must be positive, got {}",
            params.c
        )));
    }
    let ys = signed_labels(y)?;
    let mut solver = Smo::new(k, &ys, params.c);
    let summary = solver.solve(params);
    let bias = -solver.rho();

    let dual_coefficients: Vec<f64> = solver
        .alpha
        .iter()
        .zip(&ys)
        .map(|(a, &s)| a * f64::from(s))
        .collect();
    let support_indices = solver
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok((
        SvcModel {
            dual_coefficients,
            bias,
            support_indices,
            c: params.c,
            training_labels: ys,
        },
        summary,
    ))
}

struct Smo<'a> {
    k: &'a KernelMatrix,
    y: Vec<f64>,
    c: f64,
    alpha: Vec<f64>,
    /// Gradient of the minimisation objective, `Q a - e`.
    grad: Vec<f64>,
}

impl<'a> Smo<'a> {
    fn new(k: &'a KernelMatrix, ys: &[i8], c: f64) -> Self {
        let n = ys.len();
        Smo {
            k,
            y: ys.iter().map(|&s| f64::from(s)).collect(),
            c,
            alpha: vec![0.0; n],
            grad: vec![-1.0; n],
        }
    }

    #[inline]
    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.k.get(i, j)
    }

    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.c) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    fn in_low(&self, t: usize) -> bool {
        (self.y[t] < 0.0 && self.alpha[t] < self.c) || (self.y[t] > 0.0 && self.alpha[t] > 0.0)
    }

    /// Maximal violating pair `(i, j, m - M)`; lowest index wins ties.
    fn select_pair(&self) -> Option<(usize, usize, f64)> {
        let mut best_up: Option<(usize, f64)> = None;
        let mut best_low: Option<(usize, f64)> = None;
        for t in 0..self.alpha.len() {
            let v = -self.y[t] * self.grad[t];
            if self.in_up(t) && best_up.is_none_or(|(_, m)| v > m) {
                best_up = Some((t, v));
            }
            if self.in_low(t) && best_low.is_none_or(|(_, m)| v < m) {
                best_low = Some((t, v));
            }
        }
        match (best_up, best_low) {
            (Some((i, m)), Some((j, big_m))) => Some((i, j, m - big_m)),
            _ => None,
        }
    }

    fn dual_objective(&self) -> f64 {
        // f = 1/2 sum a_i (G_i - 1); the dual maximises -f
        -0.5 * self
            .alpha
            .iter()
            .zip(&self.grad)
            .map(|(a, g)| a * (g - 1.0))
            .sum::<f64>()
    }

    fn solve(&mut self, params: &SvcParams) -> SolveSummary {
        let n = self.alpha.len();
        let max_iter = params.max_iterations.unwrap_or(1000 * n.max(1));
        let mut summary = SolveSummary::default();
        if params.record_trace {
            summary.objective_trace.push(self.dual_objective());
        }
        let mut iter = 0;
        loop {
            let Some((i, j, gap)) = self.select_pair() else {
                summary.converged = true;
                summary.kkt_violation = 0.0;
                break;
            };
            summary.kkt_violation = gap;
            if gap < params.tolerance {
                summary.converged = true;
                break;
            }
            if iter >= max_iter {
                log::warn!("SMO stopped at {max_iter} iterations with KKT violation {gap:.3e}");
                break;
            }
            self.update_pair(i, j);
            iter += 1;
            if params.record_trace {
                summary.objective_trace.push(self.dual_objective());
                let eq: f64 = self.alpha.iter().zip(&self.y).map(|(a, y)| a * y).sum();
                summary.max_equality_residual = summary.max_equality_residual.max(eq.abs());
                let bound = self
                    .alpha
                    .iter()
                    .map(|&a| (-a).max(a - self.c).max(0.0))
                    .fold(0.0, f64::max);
                summary.max_bound_violation = summary.max_bound_violation.max(bound);
            }
        }
        summary.iterations = iter;
        summary.dual_objective = self.dual_objective();
        summary
    }

    fn update_pair(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (qii, qjj, qij) = (self.q(i, i), self.q(j, j), self.q(i, j));
        let (mut ai, mut aj) = (old_i, old_j);

        if self.y[i] != self.y[j] {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }

        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..self.alpha.len() {
            self.grad[t] += self.q(t, i) * di + self.q(t, j) * dj;
        }
    }

    /// Offset `rho` with decision `f(x) = sum a_j y_j K(x, x_j) - rho`.
    fn rho(&self) -> f64 {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut free_sum = 0.0;
        let mut free = 0usize;
        for t in 0..self.alpha.len() {
            let yg = self.y[t] * self.grad[t];
            if self.alpha[t] >= self.c {
                if self.y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if self.y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        if free > 0 {
            free_sum / free as f64
        } else {
            (ub + lb) / 2.0
        }
    }
}

/// `f(i) = sum_j coef_j K_cross[i, j] + bias`.
pub fn decision_function(model: &SvcModel, k_cross: &KernelMatrix) -> Result<Vec<f64>> {
    if k_cross.cols() != model.n_train() {
        return Err(QfiError::validation(format!(
            "cross kernel has {} columns, model was trained on {} points",
            k_cross.cols(),
            model.n_train()
        )));
    }
    Ok((0..k_cross.rows())
        .map(|i| {
            let row = k_cross.row(i);
            model
                .support_indices
                .iter()
                .map(|&j| model.dual_coefficients[j] * row[j])
                .sum::<f64>()
                + model.bias
        })
        .collect())
}

/// Class 1 when the score is `>= 0`; a zero score goes to class 1.
pub fn threshold_decisions(decisions: &[f64]) -> Vec<u8> {
    decisions.iter().map(|&d| u8::from(d >= 0.0)).collect()
}

pub fn predict(model: &SvcModel, k_cross: &KernelMatrix) -> Result<Vec<u8>> {
    Ok(threshold_decisions(&decision_function(model, k_cross)?))
}

/// A QSVC bundled with the encoded support vectors it needs to score new rows.
#[derive(Clone, Debug)]
pub struct QuantumSvc {
    pub model: SvcModel,
    pub summary: SolveSummary,
    support: EncodedPoints,
}

impl QuantumSvc {
    pub fn fit(x: ArrayView2<f64>, y: &[u8], spec: &FeatureMapSpec, c: f64) -> Result<Self> {
        Self::fit_with_kernel(x, y, spec, c).map(|(svc, _)| svc)
    }

    /// Also hands back the training kernel, for callers that persist it.
    pub fn fit_with_kernel(
        x: ArrayView2<f64>,
        y: &[u8],
        spec: &FeatureMapSpec,
        c: f64,
    ) -> Result<(Self, KernelMatrix)> {
        let train = EncodedPoints::encode(x, spec)?;
        let gram = train.gram()?;
        let params = SvcParams {
            c,
            ..SvcParams::default()
        };
        let (model, summary) = fit_precomputed_with(&gram, y, &params)?;
        if !summary.converged {
            log::warn!(
                "SMO stopped after {} iterations with KKT violation {:.3e}",
                summary.iterations,
                summary.kkt_violation
            );
        }
        let support = train.subset(&model.support_indices);
        Ok((
            QuantumSvc {
                model,
                summary,
                support,
            },
            gram,
        ))
    }

    pub fn spec(&self) -> &FeatureMapSpec {
        self.support.spec()
    }

    /// `sum_j coef_j k(x, sv_j) + bias` over the support vectors only.
    pub fn decision_values(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_width(x, self.spec().feature_dimension)?;
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        let bias = self.model.bias;
        if self.support.is_empty() {
            return Ok(vec![bias; x.nrows()]);
        }
        let k = EncodedPoints::encode(x, self.spec())?.cross(&self.support)?;
        let coef: Vec<f64> = self
            .model
            .support_indices
            .iter()
            .map(|&j| self.model.dual_coefficients[j])
            .collect();
        Ok((0..k.rows())
            .map(|i| k.row(i).iter().zip(&coef).map(|(kv, c)| kv * c).sum::<f64>() + bias)
            .collect())
    }
}

impl Classifier for QuantumSvc {
    fn n_features(&self) -> usize {
        self.spec().feature_dimension
    }

    fn scores(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.decision_values(x)
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<u8>> {
        Ok(threshold_decisions(&self.decision_values(x)?))
    }
}

/// Binary classification metrics with class 1 as positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
}

impl Metrics {
    /// Header matching [`Metrics::table_row`].
    pub const TABLE_HEADER: &'static str = "Accuracy F1 Score Recall Precision";

    /// Four columns at four decimals: accuracy, F1, recall, precision.
    pub fn table_row(&self) -> String {
        format!(
            "{:.4} {:.4} {:.4} {:.4}",
            self.accuracy, self.f1, self.recall, self.precision
        )
    }
}

pub fn compute_metrics(pred: &[u8], truth: &[u8]) -> Result<Metrics> {
    if pred.is_empty() {
        return Err(QfiError::validation("metrics need at least one prediction"));
    }
    if pred.len() != truth.len() {
        return Err(QfiError::validation(format!(
            "{} predictions against {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics {
        accuracy: ratio(tp + tn, pred.len()),
        f1,
        recall,
        precision,
    })
}
