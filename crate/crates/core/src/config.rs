//! Experiment configuration and its flat `key = value` file format.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};
use crate::model::ModelKind;
use crate::qsim::MAX_QUBITS;
use crate::xai::ImportanceMethod;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub explainer: ImportanceMethod,
    pub tier_size: usize,
    /// Feature-map repetitions.
    pub reps: usize,
    pub ansatz_reps: usize,
    pub n_repeats_pi: usize,
    pub ale_intervals: usize,
    pub train_fraction: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub spsa_iterations: usize,
    pub seed: u64,
    /// Run tier experiments concurrently.
    pub parallel: bool,
    /// Subsample the dataset to at most this many rows before splitting.
    pub max_rows: Option<usize>,
    /// Features are min-max scaled onto `[0, angle_range]` before encoding.
    pub angle_range: f64,
    /// Explainer for the classical baseline that quantum runs are compared against.
    pub classical_importance: ImportanceMethod,
    /// Tier the classical baseline like the quantum model, or fit it once on all features.
    pub classical_tiered: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::Qsvc,
            explainer: ImportanceMethod::Pi,
            tier_size: 10,
            reps: 3,
            ansatz_reps: 2,
            n_repeats_pi: 5,
            ale_intervals: 10,
            train_fraction: 0.8,
            c: 1.0,
            spsa_iterations: 100,
            seed: 42,
            parallel: true,
            max_rows: None,
            angle_range: std::f64::consts::PI,
            classical_importance: ImportanceMethod::Pi,
            classical_tiered: true,
        }
    }
}

/// Keys accepted in config files and as overrides, in file order.
pub const CONFIG_KEYS: [&str; 16] = [
    "model",
    "explainer",
    "tier_size",
    "reps",
    "ansatz_reps",
    "n_repeats_pi",
    "ale_intervals",
    "train_fraction",
    "C",
    "spsa_iterations",
    "seed",
    "parallel",
    "max_rows",
    "angle_range",
    "classical_importance",
    "classical_tiered",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| QfiError::validation(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(QfiError::validation(format!("invalid value '{value}' for '{key}'"))),
    }
}

impl ExperimentConfig {
    /// Sets one key from its textual value. Keys match case-insensitively; `c` and `C` are the same key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim().to_ascii_lowercase().as_str() {
            "model" => self.model = value.parse()?,
            "explainer" => self.explainer = value.parse()?,
            "tier_size" => self.tier_size = parse_value(key, value)?,
            "reps" => self.reps = parse_value(key, value)?,
            "ansatz_reps" => self.ansatz_reps = parse_value(key, value)?,
            "n_repeats_pi" => self.n_repeats_pi = parse_value(key, value)?,
            "ale_intervals" => self.ale_intervals = parse_value(key, value)?,
            "train_fraction" => self.train_fraction = parse_value(key, value)?,
            "c" => self.c = parse_value(key, value)?,
            "spsa_iterations" => self.spsa_iterations = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "parallel" => self.parallel = parse_bool(key, value)?,
            "max_rows" => {
                self.max_rows = match value.to_ascii_lowercase().as_str() {
                    "" | "none" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "angle_range" => self.angle_range = parse_value(key, value)?,
            "classical_importance" => self.classical_importance = value.parse()?,
            "classical_tiered" => self.classical_tiered = parse_bool(key, value)?,
            other => {
                return Err(QfiError::validation(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Textual value of `key`, in the form `set` accepts.
    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key.to_ascii_lowercase().as_str() {
            "model" => self.model.to_string(),
            "explainer" => self.explainer.to_string(),
            "tier_size" => self.tier_size.to_string(),
            "reps" => self.reps.to_string(),
            "ansatz_reps" => self.ansatz_reps.to_string(),
            "n_repeats_pi" => self.n_repeats_pi.to_string(),
            "ale_intervals" => self.ale_intervals.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "c" => self.c.to_string(),
            "spsa_iterations" => self.spsa_iterations.to_string(),
            "seed" => self.seed.to_string(),
            "parallel" => self.parallel.to_string(),
            "max_rows" => self.max_rows.map_or("none".into(), |m| m.to_string()),
            "angle_range" => self.angle_range.to_string(),
            "classical_importance" => self.classical_importance.to_string(),
            "classical_tiered" => self.classical_tiered.to_string(),
            other => return Err(QfiError::validation(format!("unknown config key '{other}'"))),
        })
    }

    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                QfiError::validation(format!("line {}: expected 'key = value'", n + 1))
            })?;
            config
                .set(key, value)
                .map_err(|e| QfiError::validation(format!("line {}: {e}", n + 1)))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| QfiError::io(path, e))?;
        Self::parse(&text).map_err(|e| QfiError::validation(format!("{}: {e}", path.display())))
    }

    /// Every key, one per line, in a form `parse` reads back to an equal config.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(QfiError::validation(m));
        if self.tier_size == 0 {
            return fail("tier_size must be at least 1".into());
        }
        if self.model.is_quantum() && self.tier_size > MAX_QUBITS {
            return fail(format!(
                "tier_size {} exceeds the {MAX_QUBITS}-qubit simulator limit",
                self.tier_size
            ));
        }
        if self.reps == 0 {
            return fail("reps must be at least 1".into());
        }
        if self.n_repeats_pi == 0 {
            return fail("n_repeats_pi must be at least 1".into());
        }
        if self.ale_intervals == 0 {
            return fail("ale_intervals must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return fail(format!("C must be positive, got {}", self.c));
        }
        if !(self.angle_range > 0.0 && self.angle_range.is_finite()) {
            return fail(format!("angle_range must be positive, got {}", self.angle_range));
        }
        if self.spsa_iterations == 0 {
            return fail("spsa_iterations must be at least 1".into());
        }
        if self.max_rows.is_some_and(|m| m < 4) {
            return fail("max_rows must be at least 4".into());
        }
        if self.explainer == ImportanceMethod::Gain && self.model != ModelKind::Gbdt {
            return fail("gain importance is only defined for gbdt".into());
        }
        Ok(())
    }
}
