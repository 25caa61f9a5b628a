//! Exact density-matrix simulation of a small qubit register.
//!
//! Qubit `q` corresponds to bit `q` of a basis-state index, so for two qubits
//! the basis order is `|q1 q0>`: 00, 01, 10, 11. States are never sampled:
//! gates, depolarizing noise and readout error are applied analytically.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_8};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for the trace, Hermiticity and positivity checks.
pub const STATE_TOLERANCE: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GateKind {
    /// Z-axis rotation by pi/4, `diag(e^{-i pi/8}, e^{i pi/8})`.
    RotPi4,
    PauliX,
    PauliY,
    PauliZ,
    Hadamard,
    Cnot,
}

impl GateKind {
    pub const ALL: [GateKind; 6] = [
        GateKind::RotPi4,
        GateKind::PauliX,
        GateKind::PauliY,
        GateKind::PauliZ,
        GateKind::Hadamard,
        GateKind::Cnot,
    ];

    /// Single-qubit gates in action-space order.
    pub const SINGLE_QUBIT: [GateKind; 5] = [
        GateKind::RotPi4,
        GateKind::PauliX,
        GateKind::PauliY,
        GateKind::PauliZ,
        GateKind::Hadamard,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            GateKind::RotPi4 => "U",
            GateKind::PauliX => "X",
            GateKind::PauliY => "Y",
            GateKind::PauliZ => "Z",
            GateKind::Hadamard => "H",
            GateKind::Cnot => "CNOT",
        }
    }

    /// 2x2 unitary in row-major order. `None` for CNOT.
    pub fn single_qubit_matrix(self) -> Option<[[Complex64; 2]; 2]> {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let i = Complex64::new(0.0, 1.0);
        Some(match self {
            GateKind::RotPi4 => [
                [Complex64::from_polar(1.0, -FRAC_PI_8), ZERO],
                [ZERO, Complex64::from_polar(1.0, FRAC_PI_8)],
            ],
            GateKind::PauliX => [[ZERO, ONE], [ONE, ZERO]],
            GateKind::PauliY => [[ZERO, -i], [i, ZERO]],
            GateKind::PauliZ => [[ONE, ZERO], [ZERO, -ONE]],
            GateKind::Hadamard => [[h, h], [h, -h]],
            GateKind::Cnot => return None,
        })
    }
}

/// One placeable gate: a kind plus the qubit(s) it acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GateAction {
    pub kind: GateKind,
    pub target: usize,
    /// Only set for CNOT.
    pub control: Option<usize>,
}

impl GateAction {
    pub fn single(kind: GateKind, target: usize) -> Self {
        debug_assert!(kind != GateKind::Cnot);
        GateAction {
            kind,
            target,
            control: None,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        GateAction {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.target >= n_qubits {
            return Err(Error::QubitOutOfRange {
                index: self.target,
                n_qubits,
            });
        }
        match (self.kind, self.control) {
            (GateKind::Cnot, Some(c)) => {
                if c >= n_qubits {
                    Err(Error::QubitOutOfRange { index: c, n_qubits })
                } else if c == self.target {
                    Err(Error::ControlEqualsTarget(c))
                } else {
                    Ok(())
                }
            }
            (GateKind::Cnot, None) => Err(Error::InvalidConfig(
                "CNOT action without a control qubit".into(),
            )),
            (_, Some(_)) => Err(Error::InvalidConfig(format!(
                "{} takes no control qubit",
                self.kind.symbol()
            ))),
            (_, None) => Ok(()),
        }
    }
}

impl fmt::Display for GateAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.control {
            Some(c) => write!(f, "{}({},{})", self.kind.symbol(), c, self.target),
            None => write!(f, "{}({})", self.kind.symbol(), self.target),
        }
    }
}

/// All placeable gates on an `n`-qubit register.
///
/// Order: for each qubit ascending `[U, X, Y, Z, H]`, then every
/// `CNOT(control, target)` with control ascending, then target ascending.
pub fn enumerate_actions(n_qubits: usize) -> Vec<GateAction> {
    let mut actions = Vec::with_capacity(5 * n_qubits + n_qubits * n_qubits.saturating_sub(1));
    for q in 0..n_qubits {
        actions.extend(
            GateKind::SINGLE_QUBIT
                .iter()
                .map(|&kind| GateAction::single(kind, q)),
        );
    }
    for c in 0..n_qubits {
        for t in (0..n_qubits).filter(|&t| t != c) {
            actions.push(GateAction::cnot(c, t));
        }
    }
    actions
}

/// Per-gate depolarizing error rates plus a symmetric readout flip rate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub gate_error: BTreeMap<GateKind, f64>,
    #[serde(default)]
    pub meas_error: f64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn new(
        gate_error: impl IntoIterator<Item = (GateKind, f64)>,
        meas_error: f64,
    ) -> Result<Self> {
        let spec = NoiseSpec {
            gate_error: gate_error.into_iter().collect(),
            meas_error,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("measurement error", self.meas_error)?;
        for (kind, &p) in &self.gate_error {
            check_probability(&format!("{} gate error", kind.symbol()), p)?;
        }
        Ok(())
    }

    /// Depolarizing probability for `kind`; 0 when unspecified.
    pub fn gate_error(&self, kind: GateKind) -> f64 {
        self.gate_error.get(&kind).copied().unwrap_or(0.0)
    }
}

pub(crate) fn check_probability(what: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProbability {
            what: what.to_string(),
            value,
        })
    }
}

/// A normalized pure state the search tries to reach.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl TargetState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "target state length {dim} is not a power of two >= 2"
            )));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(TargetState {
            n_qubits: dim.trailing_zeros() as usize,
            amplitudes,
        })
    }

    /// `(|00> + |11>) / sqrt(2)`.
    pub fn bell() -> Self {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        TargetState {
            n_qubits: 2,
            amplitudes: vec![h, ZERO, ZERO, h],
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }
}

/// Row-major `2^n x 2^n` density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    dim: usize,
    data: Vec<Complex64>,
}

/// `|0...0><0...0|` on `n_qubits` qubits.
pub fn initial_state(n_qubits: usize) -> Result<DensityMatrix> {
    if n_qubits == 0 {
        return Err(Error::NoQubits);
    }
    let dim = 1usize << n_qubits;
    let mut data = vec![ZERO; dim * dim];
    data[0] = ONE;
    Ok(DensityMatrix {
        n_qubits,
        dim,
        data,
    })
}

impl DensityMatrix {
    /// Wraps a row-major matrix without checking physicality; use
    /// [`DensityMatrix::check`] to validate.
    pub fn from_row_major(n_qubits: usize, data: Vec<Complex64>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::NoQubits);
        }
        let dim = 1usize << n_qubits;
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: data.len(),
            });
        }
        Ok(DensityMatrix {
            n_qubits,
            dim,
            data,
        })
    }

    pub fn pure(state: &TargetState) -> Self {
        let amps = state.amplitudes();
        let dim = amps.len();
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                data[i * dim + j] = amps[i] * amps[j].conj();
            }
        }
        DensityMatrix {
            n_qubits: state.n_qubits(),
            dim,
            data,
        }
    }

    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        let mut rho = initial_state(n_qubits)?;
        let w = Complex64::new(1.0 / rho.dim as f64, 0.0);
        rho.data.fill(ZERO);
        for i in 0..rho.dim {
            rho.data[i * rho.dim + i] = w;
        }
        Ok(rho)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn as_row_major(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Convex combination `weight * self + (1 - weight) * other`.
    pub fn mix(&self, other: &DensityMatrix, weight: f64) -> Result<DensityMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * weight + b * (1.0 - weight))
            .collect();
        Ok(DensityMatrix { data, ..*self })
    }

    /// Verifies unit trace, Hermiticity and positive semidefiniteness.
    pub fn check(&self, tol: f64) -> std::result::Result<(), String> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(format!("trace is {tr}"));
        }
        for i in 0..self.dim {
            for j in i..self.dim {
                let d = self.get(i, j) - self.get(j, i).conj();
                if d.norm() > tol {
                    return Err(format!(
                        "not Hermitian at ({i},{j}): deviation {}",
                        d.norm()
                    ));
                }
            }
        }
        let m = DMatrix::from_row_slice(self.dim, self.dim, &self.data);
        let eig = m.symmetric_eigenvalues();
        if let Some(min) = eig.iter().copied().reduce(f64::min) {
            if min < -tol {
                return Err(format!("negative eigenvalue {min}"));
            }
        }
        Ok(())
    }

    /// Applies `action` followed by its depolarizing channel.
    ///
    /// Single-qubit gates depolarize their target; CNOT depolarizes the
    /// (control, target) pair jointly.
    pub fn apply_gate(&self, action: &GateAction, noise: &NoiseSpec) -> Result<DensityMatrix> {
        action.validate(self.n_qubits)?;
        let mut out = self.clone();
        let mask = match (action.kind.single_qubit_matrix(), action.control) {
            (Some(u), _) => {
                out.apply_single(&u, action.target);
                1usize << action.target
            }
            (None, Some(control)) => {
                out.apply_cnot(control, action.target);
                (1usize << control) | (1usize << action.target)
            }
            (None, None) => unreachable!("validated above"),
        };
        let p = noise.gate_error(action.kind);
        check_probability("gate error", p)?;
        if p > 0.0 {
            out.depolarize(mask, p);
        }
        Ok(out)
    }

    fn apply_single(&mut self, u: &[[Complex64; 2]; 2], qubit: usize) {
        let d = self.dim;
        let bit = 1usize << qubit;
        // rho <- U rho
        for col in 0..d {
            for i in (0..d).filter(|i| i & bit == 0) {
                let j = i | bit;
                let a = self.data[i * d + col];
                let b = self.data[j * d + col];
                self.data[i * d + col] = u[0][0] * a + u[0][1] * b;
                self.data[j * d + col] = u[1][0] * a + u[1][1] * b;
            }
        }
        // rho <- rho U^dagger
        for row in 0..d {
            for i in (0..d).filter(|i| i & bit == 0) {
                let j = i | bit;
                let a = self.data[row * d + i];
                let b = self.data[row * d + j];
                self.data[row * d + i] = a * u[0][0].conj() + b * u[0][1].conj();
                self.data[row * d + j] = a * u[1][0].conj() + b * u[1][1].conj();
            }
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let d = self.dim;
        let (cb, tb) = (1usize << control, 1usize << target);
        let perm = |i: usize| if i & cb != 0 { i ^ tb } else { i };
        let src = std::mem::take(&mut self.data);
        self.data = (0..d * d)
            .map(|k| src[perm(k / d) * d + perm(k % d)])
            .collect();
    }

    /// `rho <- (1 - p) rho + p (I_S / 2^|S| (x) Tr_S rho)` for the qubits in `mask`.
    fn depolarize(&mut self, mask: usize, p: f64) {
        let d = self.dim;
        let weight = 1.0 / (1usize << mask.count_ones()) as f64;
        let src = self.data.clone();
        for i in 0..d {
            for j in 0..d {
                let mut mixed = ZERO;
                if (i ^ j) & mask == 0 {
                    let (ri, rj) = (i & !mask, j & !mask);
                    // iterate every sub-mask s of mask, including 0
                    let mut s = mask;
                    loop {
                        mixed += src[(ri | s) * d + (rj | s)];
                        if s == 0 {
                            break;
                        }
                        s = (s - 1) & mask;
                    }
                    mixed *= weight;
                }
                self.data[i * d + j] = src[i * d + j] * (1.0 - p) + mixed * p;
            }
        }
    }
}

/// Single-qubit Pauli expectations `[<X0>, <Y0>, <Z0>, <X1>, ...]`, each
/// scaled by `1 - 2 p_meas` to model a symmetric readout flip.
pub fn pauli_expectations(state: &DensityMatrix, noise: &NoiseSpec) -> Vec<f64> {
    let d = state.dim();
    let scale = 1.0 - 2.0 * noise.meas_error;
    let mut out = Vec::with_capacity(3 * state.n_qubits());
    for q in 0..state.n_qubits() {
        let bit = 1usize << q;
        let mut coherence = ZERO;
        let mut z = 0.0;
        for i in 0..d {
            if i & bit == 0 {
                coherence += state.get(i, i | bit);
                z += state.get(i, i).re;
            } else {
                z -= state.get(i, i).re;
            }
        }
        let x = 2.0 * coherence.re;
        let y = -2.0 * coherence.im;
        out.extend([x, y, z].map(|e| (e * scale).clamp(-1.0, 1.0)));
    }
    out
}

/// Pure-target fidelity `<psi| rho |psi>`.
pub fn fidelity(state: &DensityMatrix, target: &TargetState) -> Result<f64> {
    let amps = target.amplitudes();
    if amps.len() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            actual: amps.len(),
        });
    }
    let mut acc = ZERO;
    for (i, ai) in amps.iter().enumerate() {
        for (j, aj) in amps.iter().enumerate() {
            acc += ai.conj() * state.get(i, j) * aj;
        }
    }
    Ok(acc.re.clamp(0.0, 1.0))
}
