//! Labelled tabular data: CSV ingestion and the synthetic generator.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{QfiError, Result};

pub const LABEL_COLUMN: &str = "label";

/// Geometric decay of the class-mean offsets across informative features.
pub const SYNTH_MEAN_DECAY: f64 = 0.8;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Array2<f64>,
    pub y: Vec<u8>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, x: Array2<f64>, y: Vec<u8>) -> Result<Self> {
        if feature_names.len() != x.ncols() || y.len() != x.nrows() {
            return Err(QfiError::validation(format!(
                "{} names and {} labels for a {}x{} matrix",
                feature_names.len(),
                y.len(),
                x.nrows(),
                x.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name == LABEL_COLUMN || !seen.insert(name.as_str()) {
                return Err(QfiError::validation(format!("duplicate feature name '{name}'")));
            }
        }
        if y.iter().any(|&t| t > 1) {
            return Err(QfiError::validation("labels must be 0 or 1"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(QfiError::validation("dataset contains non-finite values"));
        }
        Ok(Dataset { feature_names, x, y })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            x: self.x.select(ndarray::Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Feature columns followed by `label`. Values use the shortest round-trip decimal form.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(
            self.feature_names
                .iter()
                .map(String::as_str)
                .chain(std::iter::once(LABEL_COLUMN)),
        )?;
        for (row, label) in self.x.outer_iter().zip(&self.y) {
            out.write_record(
                row.iter()
                    .map(|v| v.to_string())
                    .chain(std::iter::once(label.to_string())),
            )?;
        }
        out.flush().map_err(|e| QfiError::Serde(e.to_string()))?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| QfiError::io(path, e))
    }
}

/// Parses a headed CSV with a `label` column holding 0/1; every other column is a feature.
pub fn read_dataset<R: Read>(r: R, origin: &Path) -> Result<Dataset> {
    let err = |message: String| QfiError::Ingestion {
        path: origin.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    let label_col = headers
        .iter()
        .position(|h| h == LABEL_COLUMN)
        .ok_or_else(|| err(format!("no '{LABEL_COLUMN}' column in header")))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != label_col).collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| headers[c].to_string()).collect();
    let mut seen = HashSet::new();
    for name in &feature_names {
        if name.is_empty() || !seen.insert(name.as_str()) {
            return Err(err(format!("feature name '{name}' is empty or repeated")));
        }
    }

    let mut values = Vec::new();
    let mut y = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let row = line + 2;
        let record = record.map_err(|e| err(format!("row {row}: {e}")))?;
        let raw_label = &record[label_col];
        let label = match raw_label.parse::<f64>() {
            Ok(0.0) => 0,
            Ok(1.0) => 1,
            _ => return Err(err(format!("row {row}: label '{raw_label}' is not 0 or 1"))),
        };
        y.push(label);
        for &c in &feature_cols {
            let raw = &record[c];
            let v: f64 = raw.parse().map_err(|_| {
                err(format!("row {row}, column '{}': cannot parse '{raw}'", &headers[c]))
            })?;
            if !v.is_finite() {
                return Err(err(format!(
                    "row {row}, column '{}': non-finite value '{raw}'",
                    &headers[c]
                )));
            }
            values.push(v);
        }
    }
    if y.is_empty() {
        return Err(err("no data rows".into()));
    }
    let x = Array2::from_shape_vec((y.len(), feature_cols.len()), values)
        .map_err(|e| err(e.to_string()))?;
    Ok(Dataset { feature_names, x, y })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| QfiError::io(path, e))?;
    read_dataset(std::io::BufReader::new(file), path)
}

pub fn feature_name(j: usize) -> String {
    format!("feature_{j:03}")
}

/// Balanced binary data. The first `n_informative` features are `N(+-mu_j, 1)` by class
/// with `mu_j = 0.8^j`; the rest are `N(0, 1)` noise.
pub fn synth_dataset(
    n_rows: usize,
    n_features: usize,
    n_informative: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_informative > n_features {
        return Err(QfiError::validation(format!(
            "{n_informative} informative features requested out of {n_features}"
        )));
    }
    if n_rows == 0 || n_features == 0 {
        return Err(QfiError::validation("synthetic data needs rows and features"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y: Vec<u8> = (0..n_rows).map(|i| u8::from(i >= n_rows / 2)).collect();
    y.shuffle(&mut rng);
    let means: Vec<f64> = (0..n_informative)
        .map(|j| SYNTH_MEAN_DECAY.powi(j as i32))
        .collect();
    let mut values = Vec::with_capacity(n_rows * n_features);
    for &label in &y {
        let sign = if label == 1 { 1.0 } else { -1.0 };
        for j in 0..n_features {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let mean = means.get(j).map_or(0.0, |m| sign * m);
            values.push(mean + noise);
        }
    }
    let x = Array2::from_shape_vec((n_rows, n_features), values)
        .expect("shape matches value count");
    Dataset::new((0..n_features).map(feature_name).collect(), x, y)
}
