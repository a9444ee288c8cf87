//! Dense statevector simulation for the gate set {H, Phase, CNOT, RotY}.
//!
//! Qubit 0 is the least significant bit of the amplitude index, so the basis
//! state `|q_{n-1} ... q_1 q_0>` lives at index `sum_k q_k * 2^k`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QfiError, Result};

/// Largest register the dense simulator will allocate.
pub const MAX_QUBITS: usize = 24;

/// A pure n-qubit state held as `2^n` complex amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

/// One gate application. Qubit indices are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    Hadamard { target: usize },
    Phase { target: usize, lambda: f64 },
    Cnot { control: usize, target: usize },
    RotY { target: usize, theta: f64 },
}

impl Gate {
    fn validate(&self, n_qubits: usize) -> Result<()> {
        let check = |q: usize| {
            if q < n_qubits {
                Ok(())
            } else {
                Err(QfiError::validation(format!(
                    "qubit index {q} out of range for {n_qubits}-qubit register"
                )))
            }
        };
        match *self {
            Gate::Hadamard { target } | Gate::Phase { target, .. } | Gate::RotY { target, .. } => {
                check(target)
            }
            Gate::Cnot { control, target } => {
                check(control)?;
                check(target)?;
                if control == target {
                    return Err(QfiError::validation(format!(
                        "CNOT control and target are both qubit {control}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// An ordered gate list on a fixed register width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit {
            n_qubits,
            ops: Vec::new(),
        }
    }

    pub fn from_ops(n_qubits: usize, ops: Vec<Gate>) -> Result<Self> {
        for op in &ops {
            op.validate(n_qubits)?;
        }
        Ok(Circuit { n_qubits, ops })
    }

    pub fn push(&mut self, op: Gate) -> Result<()> {
        op.validate(self.n_qubits)?;
        self.ops.push(op);
        Ok(())
    }

    /// Appends every op of `other`, which must act on the same register width.
    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(QfiError::validation(format!(
                "cannot append a {}-qubit circuit to a {}-qubit circuit",
                other.n_qubits, self.n_qubits
            )));
        }
        self.ops.extend_from_slice(&other.ops);
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[Gate] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entanglement {
    #[default]
    Linear,
}

/// Shape of the second-order Pauli-Z feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMapSpec {
    pub feature_dimension: usize,
    pub reps: usize,
    #[serde(default)]
    pub entanglement: Entanglement,
}

impl FeatureMapSpec {
    pub fn new(feature_dimension: usize, reps: usize) -> Result<Self> {
        let spec = FeatureMapSpec {
            feature_dimension,
            reps,
            entanglement: Entanglement::Linear,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dimension == 0 {
            return Err(QfiError::validation("feature_dimension must be at least 1"));
        }
        if self.reps == 0 {
            return Err(QfiError::validation("feature map reps must be at least 1"));
        }
        Ok(())
    }
}

impl StateVector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(QfiError::Capacity {
                n_qubits,
                max: MAX_QUBITS,
            });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. The length must be a power of two and the norm 1 within 1e-10.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QfiError::validation(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(QfiError::Capacity {
                n_qubits,
                max: MAX_QUBITS,
            });
        }
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sqr.sqrt() - 1.0).abs() > 1e-10 {
            return Err(QfiError::validation(format!(
                "amplitudes have norm {} (expected 1)",
                norm_sqr.sqrt()
            )));
        }
        Ok(StateVector {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Applies `op` in place.
    pub fn apply(&mut self, op: &Gate) -> Result<()> {
        op.validate(self.n_qubits)?;
        match *op {
            Gate::Hadamard { target } => self.apply_pairwise(target, |a, b| {
                let (x, y) = (*a, *b);
                *a = (x + y) * FRAC_1_SQRT_2;
                *b = (x - y) * FRAC_1_SQRT_2;
            }),
            Gate::Phase { target, lambda } => {
                let phase = Complex64::from_polar(1.0, lambda);
                self.apply_pairwise(target, |_, b| *b *= phase);
            }
            Gate::RotY { target, theta } => {
                let (s, c) = (theta / 2.0).sin_cos();
                self.apply_pairwise(target, |a, b| {
                    let (x, y) = (*a, *b);
                    *a = x * c - y * s;
                    *b = x * s + y * c;
                });
            }
            Gate::Cnot { control, target } => {
                let cmask = 1usize << control;
                let tmask = 1usize << target;
                for i in 0..self.amplitudes.len() {
                    if i & cmask != 0 && i & tmask == 0 {
                        self.amplitudes.swap(i, i | tmask);
                    }
                }
            }
        }
        Ok(())
    }

    /// Calls `f(amp[i], amp[i | 1<<target])` for every index `i` with the target bit clear.
    fn apply_pairwise<F>(&mut self, target: usize, mut f: F)
    where
        F: FnMut(&mut Complex64, &mut Complex64),
    {
        let stride = 1usize << target;
        for block in self.amplitudes.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                f(a, b);
            }
        }
    }

    /// `<Z ⊗ Z ⊗ ... ⊗ Z>`: sum of `(-1)^popcount(b) |amp_b|^2`.
    pub fn z_parity_expectation(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(b, a)| {
                if b.count_ones() % 2 == 0 {
                    a.norm_sqr()
                } else {
                    -a.norm_sqr()
                }
            })
            .sum()
    }
}

pub fn zero_state(n_qubits: usize) -> Result<StateVector> {
    StateVector::zero(n_qubits)
}

/// Returns a new state with `op` applied; the input is left untouched.
pub fn apply_gate(state: &StateVector, op: &Gate) -> Result<StateVector> {
    let mut out = state.clone();
    out.apply(op)?;
    Ok(out)
}

pub fn run_circuit(state: &StateVector, circuit: &Circuit) -> Result<StateVector> {
    if circuit.n_qubits != state.n_qubits {
        return Err(QfiError::validation(format!(
            "circuit acts on {} qubits but state has {}",
            circuit.n_qubits, state.n_qubits
        )));
    }
    let mut out = state.clone();
    for op in &circuit.ops {
        out.apply(op)?;
    }
    Ok(out)
}

/// `<a|b> = sum conj(a_i) b_i`.
pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<Complex64> {
    if a.n_qubits != b.n_qubits {
        return Err(QfiError::validation(format!(
            "inner product of {}-qubit and {}-qubit states",
            a.n_qubits, b.n_qubits
        )));
    }
    Ok(a
        .amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// Second-order Pauli-Z feature map with linear entanglement.
///
/// Each repetition is a Hadamard layer, single-qubit phases `P(2 x_i)`, then for
/// every neighbouring pair `(i, i+1)` the block `CNOT, P(2 (pi - x_i)(pi - x_{i+1})), CNOT`
/// with the phase on the lower qubit.
pub fn build_zz_feature_map(x: &[f64], spec: &FeatureMapSpec) -> Result<Circuit> {
    spec.validate()?;
    let n = spec.feature_dimension;
    if x.len() != n {
        return Err(QfiError::validation(format!(
            "feature vector has {} entries, feature map expects {n}",
            x.len()
        )));
    }
    let mut ops = Vec::with_capacity(spec.reps * (2 * n + 3 * n.saturating_sub(1)));
    for _ in 0..spec.reps {
        ops.extend((0..n).map(|target| Gate::Hadamard { target }));
        ops.extend((0..n).map(|target| Gate::Phase {
            target,
            lambda: 2.0 * x[target],
        }));
        for i in 0..n.saturating_sub(1) {
            let j = i + 1;
            ops.push(Gate::Cnot {
                control: i,
                target: j,
            });
            ops.push(Gate::Phase {
                target: j,
                lambda: 2.0 * (PI - x[i]) * (PI - x[j]),
            });
            ops.push(Gate::Cnot {
                control: i,
                target: j,
            });
        }
    }
    Circuit::from_ops(n, ops)
}

/// Number of angles consumed by [`build_ry_ansatz`].
pub fn ansatz_parameter_count(n_qubits: usize, reps: usize) -> usize {
    n_qubits * (reps + 1)
}

/// RotY layers interleaved with linear CNOT entanglers, closing with a final RotY layer.
///
/// Angles are consumed layer-major, qubit-minor.
pub fn build_ry_ansatz(n_qubits: usize, reps: usize, theta: &[f64]) -> Result<Circuit> {
    if n_qubits == 0 {
        return Err(QfiError::validation("ansatz needs at least one qubit"));
    }
    let expected = ansatz_parameter_count(n_qubits, reps);
    if theta.len() != expected {
        return Err(QfiError::validation(format!(
            "ansatz with {n_qubits} qubits and {reps} reps takes {expected} parameters, got {}",
            theta.len()
        )));
    }
    let mut ops = Vec::with_capacity(expected + reps * n_qubits.saturating_sub(1));
    let mut angles = theta.iter();
    for layer in 0..=reps {
        ops.extend((0..n_qubits).map(|target| Gate::RotY {
            target,
            theta: *angles.next().expect("parameter count checked above"),
        }));
        if layer < reps {
            ops.extend((0..n_qubits.saturating_sub(1)).map(|i| Gate::Cnot {
                control: i,
                target: i + 1,
            }));
        }
    }
    Circuit::from_ops(n_qubits, ops)
}
