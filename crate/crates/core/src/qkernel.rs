//! Fidelity quantum kernel `K(x, y) = |<psi(y)|psi(x)>|^2` over ZZ feature-map states.
//!
//! Each data point is simulated once; matrix entries are inner products of the
//! cached states. Entry evaluation is pure, so the rayon-parallel assembly is
//! bit-identical to a serial one.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{QfiError, Result};
use crate::qsim::{build_zz_feature_map, inner_product, run_circuit, FeatureMapSpec, StateVector};

const QKM_MAGIC: &[u8; 4] = b"QKM1";

/// Dense real kernel matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    symmetric: bool,
}

impl KernelMatrix {
    /// Builds a matrix from row-major values. A symmetric matrix must be square.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, symmetric: bool) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(QfiError::validation(format!(
                "kernel matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if symmetric && rows != cols {
            return Err(QfiError::validation(format!(
                "symmetric kernel matrix must be square, got {rows}x{cols}"
            )));
        }
        Ok(KernelMatrix {
            rows,
            cols,
            values,
            symmetric,
        })
    }

    /// Square matrix flagged symmetric; fails if `K != K^T` within `1e-10`.
    pub fn symmetric_from(n: usize, values: Vec<f64>) -> Result<Self> {
        let k = KernelMatrix::new(n, n, values, true)?;
        for i in 0..n {
            for j in (i + 1)..n {
                if (k.get(i, j) - k.get(j, i)).abs() > 1e-10 {
                    return Err(QfiError::validation(format!(
                        "kernel matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(k)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// Writes the `QKM1` binary layout: magic, rows and cols as u64 LE, then row-major f64 LE.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(QKM_MAGIC)?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    /// Reads a `QKM1` stream. The symmetric flag is restored when the matrix is
    /// square, exactly symmetric and has a unit diagonal.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |msg: String| QfiError::Serde(format!("QKM1: {msg}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| bad(format!("missing header: {e}")))?;
        if &magic != QKM_MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let mut word = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word)
                .map_err(|e| bad(format!("truncated header: {e}")))?;
            Ok(u64::from_le_bytes(word))
        };
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| bad(format!("dimensions {rows}x{cols} overflow")))?;
        let mut values = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for idx in 0..count {
            r.read_exact(&mut buf)
                .map_err(|e| bad(format!("truncated payload at value {idx}: {e}")))?;
            values.push(f64::from_le_bytes(buf));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map_err(|e| bad(e.to_string()))? != 0 {
            return Err(bad("trailing bytes after payload".into()));
        }
        let symmetric = rows == cols
            && (0..rows).all(|i| {
                values[i * cols + i] == 1.0
                    && ((i + 1)..cols).all(|j| values[i * cols + j] == values[j * cols + i])
            });
        KernelMatrix::new(rows, cols, values, symmetric)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| QfiError::io(path, e))?;
        self.write_to(BufWriter::new(file))
            .map_err(|e| QfiError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| QfiError::io(path, e))?;
        KernelMatrix::read_from(BufReader::new(file))
    }
}

/// Feature-mapped state `psi(x) = U_ZZ(x) |0...0>`.
pub fn feature_state(x: &[f64], spec: &FeatureMapSpec) -> Result<StateVector> {
    let circuit = build_zz_feature_map(x, spec)?;
    run_circuit(&StateVector::zero(spec.feature_dimension)?, &circuit)
}

/// `|<a|b>|^2`, clamped into `[0, 1]` against rounding.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(inner_product(a, b)?.norm_sqr().clamp(0.0, 1.0))
}

fn same_point(x: &[f64], y: &[f64]) -> bool {
    x.len() == y.len() && x.iter().zip(y).all(|(a, b)| a.to_bits() == b.to_bits())
}

/// Kernel value from already-simulated states; identical inputs short-circuit to exactly 1.
fn entry_from_states(x: &[f64], y: &[f64], sx: &StateVector, sy: &StateVector) -> Result<f64> {
    if same_point(x, y) {
        return Ok(1.0);
    }
    fidelity(sy, sx)
}

pub fn kernel_entry(x: &[f64], y: &[f64], spec: &FeatureMapSpec) -> Result<f64> {
    if x.len() != spec.feature_dimension || y.len() != spec.feature_dimension {
        return Err(QfiError::validation(format!(
            "kernel inputs have dimensions {} and {}, feature map expects {}",
            x.len(),
            y.len(),
            spec.feature_dimension
        )));
    }
    let sx = feature_state(x, spec)?;
    let sy = feature_state(y, spec)?;
    entry_from_states(x, y, &sx, &sy)
}

/// A batch of points together with their feature-mapped states.
#[derive(Clone, Debug)]
pub struct EncodedPoints {
    spec: FeatureMapSpec,
    rows: Vec<Vec<f64>>,
    states: Vec<StateVector>,
}

impl EncodedPoints {
    /// Simulates every distinct row of `x` once (rows are memoized by their bit patterns).
    pub fn encode(x: ArrayView2<f64>, spec: &FeatureMapSpec) -> Result<Self> {
        spec.validate()?;
        if x.ncols() != spec.feature_dimension {
            return Err(QfiError::validation(format!(
                "data has {} columns, feature map expects {}",
                x.ncols(),
                spec.feature_dimension
            )));
        }
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();

        let mut first_seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut distinct: Vec<usize> = Vec::new();
        let slot: Vec<usize> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let key: Vec<u64> = r.iter().map(|v| v.to_bits()).collect();
                *first_seen.entry(key).or_insert_with(|| {
                    distinct.push(i);
                    distinct.len() - 1
                })
            })
            .collect();

        let unique_states: Vec<StateVector> = distinct
            .par_iter()
            .map(|&i| feature_state(&rows[i], spec))
            .collect::<Result<_>>()?;
        let states = slot.iter().map(|&s| unique_states[s].clone()).collect();
        Ok(EncodedPoints {
            spec: *spec,
            rows,
            states,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn spec(&self) -> &FeatureMapSpec {
        &self.spec
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// The points at `indices`, in that order, without re-simulating them.
    pub fn subset(&self, indices: &[usize]) -> EncodedPoints {
        EncodedPoints {
            spec: self.spec,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            states: indices.iter().map(|&i| self.states[i].clone()).collect(),
        }
    }

    /// Symmetric Gram matrix of this batch. Only the upper triangle is evaluated.
    pub fn gram(&self) -> Result<KernelMatrix> {
        let n = self.len();
        if n == 0 {
            return Err(QfiError::validation("cannot build a kernel matrix from zero rows"));
        }
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| {
                        entry_from_states(&self.rows[i], &self.rows[j], &self.states[i], &self.states[j])
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let mut values = vec![0.0; n * n];
        for (i, row) in upper.iter().enumerate() {
            values[i * n + i] = 1.0;
            for (offset, &v) in row.iter().enumerate() {
                let j = i + 1 + offset;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        KernelMatrix::new(n, n, values, true)
    }

    /// `K[i, j] = k(self_i, train_j)`.
    pub fn cross(&self, train: &EncodedPoints) -> Result<KernelMatrix> {
        if self.spec != train.spec {
            return Err(QfiError::validation(
                "cross kernel between batches encoded with different feature maps",
            ));
        }
        let (m, n) = (self.len(), train.len());
        let rows: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        entry_from_states(&self.rows[i], &train.rows[j], &self.states[i], &train.states[j])
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        KernelMatrix::new(m, n, rows.concat(), false)
    }
}

pub fn train_kernel_matrix(x: ArrayView2<f64>, spec: &FeatureMapSpec) -> Result<KernelMatrix> {
    if x.nrows() == 0 {
        return Err(QfiError::validation("cannot build a kernel matrix from zero rows"));
    }
    EncodedPoints::encode(x, spec)?.gram()
}

pub fn cross_kernel_matrix(
    x_test: ArrayView2<f64>,
    x_train: ArrayView2<f64>,
    spec: &FeatureMapSpec,
) -> Result<KernelMatrix> {
    let test = EncodedPoints::encode(x_test, spec)?;
    let train = EncodedPoints::encode(x_train, spec)?;
    test.cross(&train)
}

/// Copies a kernel matrix into an ndarray for callers that want matrix algebra.
pub fn to_array(k: &KernelMatrix) -> Array2<f64> {
    Array2::from_shape_vec((k.rows(), k.cols()), k.values().to_vec())
        .expect("shape matches value count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::PI;

    fn spec(d: usize, reps: usize) -> FeatureMapSpec {
        FeatureMapSpec::new(d, reps).unwrap()
    }

    #[test]
    fn self_fidelity_is_one() {
        let s = spec(3, 2);
        assert_eq!(kernel_entry(&[0.1, 2.0, 3.0], &[0.1, 2.0, 3.0], &s).unwrap(), 1.0);
        assert_eq!(kernel_entry(&[PI, PI], &[PI, PI], &spec(2, 1)).unwrap(), 1.0);
        // the simulated value agrees even without the shortcut
        let st = feature_state(&[0.1, 2.0, 3.0], &s).unwrap();
        assert!((fidelity(&st, &st).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entry_dimension_mismatch() {
        assert!(kernel_entry(&[0.1], &[0.1, 0.2], &spec(2, 1)).is_err());
    }

    #[test]
    fn single_and_duplicate_rows() {
        let k = train_kernel_matrix(array![[0.4, 1.2]].view(), &spec(2, 2)).unwrap();
        assert_eq!(k.values(), &[1.0]);
        let k = train_kernel_matrix(array![[0.4, 1.2], [0.4, 1.2]].view(), &spec(2, 2)).unwrap();
        assert_eq!(k.values(), &[1.0, 1.0, 1.0, 1.0]);
        assert!(train_kernel_matrix(Array2::<f64>::zeros((0, 2)).view(), &spec(2, 1)).is_err());
    }

    #[test]
    fn cross_of_training_set_matches_gram() {
        let x = array![[0.1, 0.7], [2.0, 1.5], [3.0, 0.2]];
        let s = spec(2, 2);
        let k = train_kernel_matrix(x.view(), &s).unwrap();
        let c = cross_kernel_matrix(x.view(), x.view(), &s).unwrap();
        assert!(!c.is_symmetric());
        for (a, b) in k.values().iter().zip(c.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(cross_kernel_matrix(array![[0.1]].view(), x.view(), &s).is_err());
    }

    #[test]
    fn qkm1_round_trip_and_header() {
        let x = array![[0.1, 0.7], [2.0, 1.5]];
        let k = train_kernel_matrix(x.view(), &spec(2, 1)).unwrap();
        let mut buf = Vec::new();
        k.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"QKM1");
        assert_eq!(u64::from_le_bytes(buf[4..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 20 + 4 * 8);
        assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), 1.0);
        let back = KernelMatrix::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, k);

        assert!(KernelMatrix::read_from(&b"QKM2"[..]).is_err());
        assert!(KernelMatrix::read_from(&buf[..30]).is_err());
    }

    #[test]
    fn symmetric_from_rejects_asymmetry() {
        assert!(KernelMatrix::symmetric_from(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(KernelMatrix::symmetric_from(2, vec![1.0, 0.5, 0.5, 1.0]).is_ok());
        assert!(KernelMatrix::new(2, 3, vec![0.0; 6], true).is_err());
    }
}
