//! Gradient-boosted decision trees on logistic loss, the classical baseline.
//!
//! Trees are grown depth-first with exact greedy splits scored by the usual
//! second-order gain. Nothing is sampled, so a fit is a pure function of its inputs.

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};
use crate::model::{check_width, Classifier};
use crate::xai::{ImportanceMethod, ImportanceVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_rounds: 50,
            max_depth: 3,
            learning_rate: 0.3,
            min_child_weight: 1.0,
            lambda: 1.0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(QfiError::validation(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..).contains(&self.min_child_weight) || !(0.0..).contains(&self.lambda) {
            return Err(QfiError::validation(
                "min_child_weight and lambda must be non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Nodes stored in an arena; index 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[feature] < threshold { left } else { right },
            }
        }
    }

    /// `(feature, gain)` for every split node.
    pub fn splits(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Split { feature, gain, .. } => Some((feature, gain)),
            Node::Leaf { .. } => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub n_rounds: usize,
    /// Prior log-odds of the positive class.
    pub base_score: f64,
    pub n_features: usize,
    /// Mean training logistic loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

impl GbdtModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: GbdtModel = serde_json::from_str(s)?;
        for tree in &model.trees {
            for node in &tree.nodes {
                match *node {
                    Node::Split {
                        feature,
                        left,
                        right,
                        ..
                    } if feature >= model.n_features
                        || left >= tree.nodes.len()
                        || right >= tree.nodes.len() =>
                    {
                        return Err(QfiError::validation("tree node out of range"));
                    }
                    Node::Leaf { value } if !value.is_finite() => {
                        return Err(QfiError::validation("non-finite leaf value"));
                    }
                    _ => {}
                }
            }
        }
        Ok(model)
    }

    fn margin(&self, row: ArrayView1<f64>) -> f64 {
        self.base_score
            + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logistic_loss(margins: &[f64], y: &[u8]) -> f64 {
    // log(1 + e^m) - y m, written to stay finite for large |m|
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &t)| m.max(0.0) + (-m.abs()).exp().ln_1p() - if t == 1 { m } else { 0.0 })
        .sum();
    total / margins.len() as f64
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    grad: Vec<f64>,
    hess: Vec<f64>,
    params: &'a GbdtParams,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        -g / (h + self.params.lambda)
    }

    fn best_for_feature(&self, rows: &[usize], feature: usize) -> Option<Candidate> {
        let lambda = self.params.lambda;
        let mut sorted: Vec<(f64, usize)> = rows.iter().map(|&i| (self.x[[i, feature]], i)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let g_total: f64 = sorted.iter().map(|&(_, i)| self.grad[i]).sum();
        let h_total: f64 = sorted.iter().map(|&(_, i)| self.hess[i]).sum();
        let parent = g_total * g_total / (h_total + lambda);
        let (mut gl, mut hl) = (0.0, 0.0);
        let mut best: Option<Candidate> = None;
        for w in 0..sorted.len() - 1 {
            let (v, i) = sorted[w];
            gl += self.grad[i];
            hl += self.hess[i];
            let next = sorted[w + 1].0;
            if next <= v {
                continue;
            }
            let (gr, hr) = (g_total - gl, h_total - hl);
            if hl < self.params.min_child_weight || hr < self.params.min_child_weight {
                continue;
            }
            let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent);
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = v + (next - v) / 2.0;
                if threshold <= v {
                    threshold = next;
                }
                best = Some(Candidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(&rows),
        });
        if depth >= self.params.max_depth || rows.len() < 2 {
            return id;
        }
        let this = &*self;
        let best = (0..self.x.ncols())
            .into_par_iter()
            .filter_map(|f| this.best_for_feature(&rows, f))
            .reduce_with(|a, b| {
                if b.gain > a.gain || (b.gain == a.gain && b.feature < a.feature) {
                    b
                } else {
                    a
                }
            });
        let Some(best) = best.filter(|c| c.gain > 0.0 && c.gain.is_finite()) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x[[i, best.feature]] < best.threshold);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            gain: best.gain,
            left,
            right,
        };
        id
    }
}

pub fn gbdt_fit(x: ArrayView2<f64>, y: &[u8], params: &GbdtParams) -> Result<GbdtModel> {
    params.validate()?;
    let (n, d) = x.dim();
    if n != y.len() || n == 0 || d == 0 {
        return Err(QfiError::validation(format!(
            "training data is {n}x{d} with {} labels",
            y.len()
        )));
    }
    if y.iter().any(|&t| t > 1) {
        return Err(QfiError::validation("labels must be 0 or 1"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(QfiError::validation("training data contains non-finite values"));
    }
    let positives = y.iter().filter(|&&t| t == 1).count();
    if positives == 0 || positives == n {
        return Err(QfiError::DegenerateLabels(format!(
            "all {n} training labels are {}",
            y[0]
        )));
    }
    let prior = positives as f64 / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();

    let mut margins = vec![base_score; n];
    let mut train_loss = vec![logistic_loss(&margins, y)];
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        let probs: Vec<f64> = margins.iter().map(|&m| sigmoid(m)).collect();
        let grad = probs.iter().zip(y).map(|(&p, &t)| p - t as f64).collect();
        let hess = probs.iter().map(|&p| p * (1.0 - p)).collect();
        let mut grower = Grower {
            x,
            grad,
            hess,
            params,
            nodes: Vec::new(),
        };
        grower.grow((0..n).collect(), 0);
        let tree = Tree {
            nodes: grower.nodes,
        };
        for (i, m) in margins.iter_mut().enumerate() {
            *m += params.learning_rate * tree.predict_row(x.row(i));
        }
        train_loss.push(logistic_loss(&margins, y));
        trees.push(tree);
    }
    Ok(GbdtModel {
        trees,
        learning_rate: params.learning_rate,
        n_rounds: params.n_rounds,
        base_score,
        n_features: d,
        train_loss,
    })
}

pub fn gbdt_predict_proba(model: &GbdtModel, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    check_width(x, model.n_features)?;
    Ok(x.outer_iter().map(|row| sigmoid(model.margin(row))).collect())
}

/// Labels at probability 0.5, ties going to class 1.
pub fn gbdt_predict(model: &GbdtModel, x: ArrayView2<f64>) -> Result<Vec<u8>> {
    Ok(gbdt_predict_proba(model, x)?
        .into_iter()
        .map(|p| u8::from(p >= 0.5))
        .collect())
}

/// Total split gain per feature normalized to one; uniform when the model never split.
pub fn gbdt_feature_importance(model: &GbdtModel) -> Result<ImportanceVector> {
    let d = model.n_features;
    let mut gain = vec![0.0; d];
    for tree in &model.trees {
        for (f, g) in tree.splits() {
            gain[f] += g;
        }
    }
    let total: f64 = gain.iter().sum();
    let scores = if total > 0.0 {
        gain.iter().map(|g| g / total).collect()
    } else {
        log::warn!("model has no splits; falling back to uniform gain importance");
        vec![1.0 / d as f64; d]
    };
    ImportanceVector::new(scores, ImportanceMethod::Gain, "gbdt")
}

impl Classifier for GbdtModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn scores(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        gbdt_predict_proba(self, x)
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<u8>> {
        gbdt_predict(self, x)
    }
}
