//! Independent reference implementations used only by tests.
//!
//! None of these share code with the library: gates become dense unitaries built
//! from Kronecker products, inner products use compensated summation, and the SVM
//! dual is solved by enumerating active sets.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, DVector};
use qfi_core::qsim::{Circuit, Gate};
use rand::Rng;

pub type C64 = Complex<f64>;

fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

fn single_qubit_matrix(gate: &Gate) -> Option<(usize, DMatrix<C64>)> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match *gate {
        Gate::Hadamard { target } => Some((
            target,
            DMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]),
        )),
        Gate::Phase { target, lambda } => Some((
            target,
            DMatrix::from_row_slice(
                2,
                2,
                &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), Complex::from_polar(1.0, lambda)],
            ),
        )),
        Gate::RotY { target, theta } => {
            let (sn, cs) = (theta / 2.0).sin_cos();
            Some((
                target,
                DMatrix::from_row_slice(2, 2, &[c(cs, 0.0), c(-sn, 0.0), c(sn, 0.0), c(cs, 0.0)]),
            ))
        }
        Gate::Cnot { .. } => None,
    }
}

/// `ops[n-1] (x) ... (x) ops[0]`: qubit 0 is the least significant index bit.
fn kron_chain(ops: &[DMatrix<C64>]) -> DMatrix<C64> {
    let mut full = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for m in ops.iter().rev() {
        full = full.kronecker(m);
    }
    full
}

pub fn dense_gate(gate: &Gate, n: usize) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(2, 2);
    if let Some((target, u)) = single_qubit_matrix(gate) {
        let ops: Vec<DMatrix<C64>> = (0..n).map(|q| if q == target { u.clone() } else { id.clone() }).collect();
        return kron_chain(&ops);
    }
    let Gate::Cnot { control, target } = *gate else {
        unreachable!()
    };
    let p0 = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    let p1 = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    let x = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    let idle: Vec<DMatrix<C64>> = (0..n).map(|q| if q == control { p0.clone() } else { id.clone() }).collect();
    let flip: Vec<DMatrix<C64>> = (0..n)
        .map(|q| {
            if q == control {
                p1.clone()
            } else if q == target {
                x.clone()
            } else {
                id.clone()
            }
        })
        .collect();
    kron_chain(&idle) + kron_chain(&flip)
}

/// Product of dense gate unitaries, last gate leftmost.
pub fn dense_unitary(circuit: &Circuit) -> DMatrix<C64> {
    let n = circuit.n_qubits();
    let mut u = DMatrix::<C64>::identity(1 << n, 1 << n);
    for g in circuit.ops() {
        u = dense_gate(g, n) * u;
    }
    u
}

/// Final state of `circuit` applied to |0...0>.
pub fn dense_run(circuit: &Circuit) -> Vec<C64> {
    let dim = 1usize << circuit.n_qubits();
    let mut zero = DVector::from_element(dim, c(0.0, 0.0));
    zero[0] = c(1.0, 0.0);
    (dense_unitary(circuit) * zero).iter().copied().collect()
}

pub fn random_gate<R: Rng>(rng: &mut R, n: usize) -> Gate {
    let target = rng.random_range(0..n);
    let angle = rng.random_range(-2.0 * std::f64::consts::PI..2.0 * std::f64::consts::PI);
    match rng.random_range(0..if n > 1 { 4 } else { 3 }) {
        0 => Gate::Hadamard { target },
        1 => Gate::Phase { target, lambda: angle },
        2 => Gate::RotY { target, theta: angle },
        _ => {
            let mut control = rng.random_range(0..n - 1);
            if control >= target {
                control += 1;
            }
            Gate::Cnot { control, target }
        }
    }
}

pub fn random_circuit<R: Rng>(rng: &mut R, max_qubits: usize, max_gates: usize) -> Circuit {
    let n = rng.random_range(1..=max_qubits);
    let len = rng.random_range(0..=max_gates);
    let ops = (0..len).map(|_| random_gate(rng, n)).collect();
    Circuit::from_ops(n, ops).expect("valid random circuit")
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `|<a|b>|^2` with compensated real and imaginary sums.
pub fn fidelity(a: &[C64], b: &[C64]) -> f64 {
    let terms: Vec<C64> = a.iter().zip(b).map(|(x, y)| x.conj() * y).collect();
    let re = compensated_sum(terms.iter().map(|t| t.re));
    let im = compensated_sum(terms.iter().map(|t| t.im));
    re * re + im * im
}

/// Maximisation-form dual objective `sum a - 1/2 a^T Q a` with `Q_ij = y_i y_j K_ij`.
pub fn dual_objective(k: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            quad.push(alpha[i] * alpha[j] * y[i] * y[j] * k[i][j]);
        }
    }
    compensated_sum(alpha.iter().copied()) - 0.5 * compensated_sum(quad)
}

/// Optimal soft-margin SVM dual by enumerating which multipliers sit at 0, at C, or in between.
///
/// For every status assignment the free block solves the KKT system exactly (least squares via
/// SVD, residual checked); feasible, stationary candidates are compared by objective.
/// Exponential in n: intended for n <= 8.
pub fn svm_dual_bruteforce(k: &[Vec<f64>], y: &[f64], cap: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    assert!(n <= 10, "brute force is exponential");
    let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut status = vec![0u8; n];
        let mut rem = code;
        for s in status.iter_mut() {
            *s = (rem % 3) as u8;
            rem /= 3;
        }
        let mut alpha: Vec<f64> = status.iter().map(|&s| if s == 1 { cap } else { 0.0 }).collect();
        let free: Vec<usize> = (0..n).filter(|&i| status[i] == 2).collect();
        let m = free.len();
        if m > 0 {
            // [Q_FF  y_F] [a_F]   [1 - Q_FB a_B]
            // [y_F^T  0 ] [ nu] = [ -y_B^T a_B ]
            let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut b = DVector::<f64>::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = q(i, j);
                }
                a[(r, m)] = y[i];
                a[(m, r)] = y[i];
                b[r] = 1.0 - (0..n).filter(|&j| status[j] == 1).map(|j| q(i, j) * cap).sum::<f64>();
            }
            b[m] = -(0..n).filter(|&j| status[j] == 1).map(|j| y[j] * cap).sum::<f64>();
            let svd = a.clone().svd(true, true);
            let Ok(sol) = svd.solve(&b, 1e-12) else { continue };
            if (&a * &sol - &b).amax() > 1e-9 {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r];
            }
        } else if compensated_sum((0..n).map(|i| alpha[i] * y[i])).abs() > 1e-12 {
            continue;
        }
        if alpha.iter().any(|&v| v < -1e-12 || v > cap + 1e-12) {
            continue;
        }
        if compensated_sum((0..n).map(|i| alpha[i] * y[i])).abs() > 1e-9 {
            continue;
        }
        let obj = dual_objective(k, y, &alpha);
        if best.as_ref().is_none_or(|(_, b)| obj > *b) {
            best = Some((alpha, obj));
        }
    }
    best.expect("alpha = 0 is always feasible")
}

/// Gaussian kernel on random points: PSD with unit diagonal, like a fidelity kernel.
pub fn random_svm_problem<R: Rng>(rng: &mut R, n: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
    let d = rng.random_range(1..=3);
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let gamma = rng.random_range(0.2..2.0);
    let k = pts
        .iter()
        .map(|a| {
            pts.iter()
                .map(|b| {
                    let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
                    (-gamma * d2).exp()
                })
                .collect()
        })
        .collect();
    let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    y[0] = 0;
    y[1] = 1;
    (k, y)
}

/// Largest violation of the bound-constrained KKT conditions, computed from the dual gradient.
pub fn kkt_violation(k: &[Vec<f64>], y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let n = y.len();
    let grad: Vec<f64> = (0..n)
        .map(|i| 1.0 - y[i] * (0..n).map(|j| alpha[j] * y[j] * k[i][j]).sum::<f64>())
        .collect();
    // y_i * grad_i splits into "can increase" and "can decrease" sets; the gap is the violation.
    let (mut up, mut low) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let v = y[i] * grad[i];
        let can_up = (y[i] > 0.0 && alpha[i] < c) || (y[i] < 0.0 && alpha[i] > 0.0);
        let can_down = (y[i] > 0.0 && alpha[i] > 0.0) || (y[i] < 0.0 && alpha[i] < c);
        if can_up {
            up = up.max(v);
        }
        if can_down {
            low = low.min(v);
        }
    }
    (up - low).max(0.0)
}
