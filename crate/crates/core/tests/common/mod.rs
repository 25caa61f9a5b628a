//! Test-only oracles. Everything here is computed from first principles
//! (dense Kronecker products, Kraus sums, explicit layer arithmetic) and
//! shares no code path with the library implementation it checks.
#![allow(dead_code)]

use num_complex::Complex64;
use qas_core::neural::QNetwork;
use qas_core::quantum::{DensityMatrix, GateAction, GateKind};
use rand::Rng;

pub type C = Complex64;

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n: usize,
    pub a: Vec<C>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Dense {
            n,
            a: vec![c(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = c(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[&[C]]) -> Self {
        let n = rows.len();
        Dense {
            n,
            a: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn at(&self, i: usize, j: usize) -> C {
        self.a[i * self.n + j]
    }

    pub fn mul(&self, o: &Dense) -> Dense {
        let n = self.n;
        let mut m = Dense::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let x = self.at(i, k);
                for j in 0..n {
                    m.a[i * n + j] += x * o.at(k, j);
                }
            }
        }
        m
    }

    pub fn dagger(&self) -> Dense {
        let n = self.n;
        let mut m = Dense::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[j * n + i] = self.at(i, j).conj();
            }
        }
        m
    }

    pub fn add_scaled(&self, o: &Dense, s: f64) -> Dense {
        Dense {
            n: self.n,
            a: self.a.iter().zip(&o.a).map(|(x, y)| x + y * s).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Dense {
        Dense {
            n: self.n,
            a: self.a.iter().map(|x| x * s).collect(),
        }
    }

    /// Kronecker product `self (x) o`.
    pub fn kron(&self, o: &Dense) -> Dense {
        let n = self.n * o.n;
        let mut m = Dense::zeros(n);
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..o.n {
                    for l in 0..o.n {
                        m.a[(i * o.n + k) * n + (j * o.n + l)] = self.at(i, j) * o.at(k, l);
                    }
                }
            }
        }
        m
    }

    pub fn trace(&self) -> C {
        (0..self.n).map(|i| self.at(i, i)).sum()
    }

    pub fn max_diff(&self, o: &[C]) -> f64 {
        self.a
            .iter()
            .zip(o)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }
}

pub fn pauli(which: char) -> Dense {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match which {
        'I' => Dense::identity(2),
        'X' => Dense::from_rows(&[&[z, o], &[o, z]]),
        'Y' => Dense::from_rows(&[&[z, -i], &[i, z]]),
        'Z' => Dense::from_rows(&[&[o, z], &[z, -o]]),
        _ => unreachable!(),
    }
}

pub fn gate_matrix(kind: GateKind) -> Dense {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let t = std::f64::consts::PI / 8.0;
    match kind {
        GateKind::RotPi4 => Dense::from_rows(&[
            &[C::from_polar(1.0, -t), c(0.0, 0.0)],
            &[c(0.0, 0.0), C::from_polar(1.0, t)],
        ]),
        GateKind::PauliX => pauli('X'),
        GateKind::PauliY => pauli('Y'),
        GateKind::PauliZ => pauli('Z'),
        GateKind::Hadamard => {
            Dense::from_rows(&[&[c(h, 0.0), c(h, 0.0)], &[c(h, 0.0), c(-h, 0.0)]])
        }
        GateKind::Cnot => unreachable!(),
    }
}

/// Embeds single-qubit operators into an `n`-qubit register. Qubit `q` is
/// bit `q` of the basis index, so the highest qubit is the leftmost factor.
pub fn embed(n: usize, ops: &[(usize, &Dense)]) -> Dense {
    let mut m = Dense::identity(1);
    for q in (0..n).rev() {
        let f = ops
            .iter()
            .find(|(i, _)| *i == q)
            .map(|(_, d)| (*d).clone())
            .unwrap_or_else(|| Dense::identity(2));
        m = m.kron(&f);
    }
    m
}

/// CNOT as `|0><0|_c (x) I + |1><1|_c (x) X_t`.
pub fn cnot_matrix(n: usize, control: usize, target: usize) -> Dense {
    let p0 = Dense::from_rows(&[&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(0.0, 0.0)]]);
    let p1 = Dense::from_rows(&[&[c(0.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)]]);
    let x = pauli('X');
    embed(n, &[(control, &p0)]).add_scaled(&embed(n, &[(control, &p1), (target, &x)]), 1.0)
}

/// Depolarizing channel as a Kraus sum over Pauli strings on `qubits`:
/// weight `1 - p (4^k - 1) / 4^k` on the identity, `p / 4^k` on every other
/// string.
pub fn kraus_depolarize(rho: &Dense, n: usize, qubits: &[usize], p: f64) -> Dense {
    let k = qubits.len() as u32;
    let strings = 4usize.pow(k);
    let mut out = Dense::zeros(rho.n);
    for s in 0..strings {
        let letters: Vec<char> = (0..k as usize)
            .map(|i| ['I', 'X', 'Y', 'Z'][(s >> (2 * i)) & 3])
            .collect();
        let mats: Vec<Dense> = letters.iter().map(|&l| pauli(l)).collect();
        let ops: Vec<(usize, &Dense)> = qubits.iter().copied().zip(mats.iter()).collect();
        let e = embed(n, &ops);
        let w = if s == 0 {
            1.0 - p * (strings as f64 - 1.0) / strings as f64
        } else {
            p / strings as f64
        };
        out = out.add_scaled(&e.mul(rho).mul(&e.dagger()), w);
    }
    out
}

/// Oracle for one noisy gate application.
pub fn oracle_apply(rho: &Dense, n: usize, action: &GateAction, p: f64) -> Dense {
    let (u, qubits) = match action.control {
        Some(ctl) => (cnot_matrix(n, ctl, action.target), vec![ctl, action.target]),
        None => (
            embed(n, &[(action.target, &gate_matrix(action.kind))]),
            vec![action.target],
        ),
    };
    let evolved = u.mul(rho).mul(&u.dagger());
    kraus_depolarize(&evolved, n, &qubits, p)
}

/// Random density matrix `A A^dagger / tr(A A^dagger)` with optional rank cap.
pub fn random_density<R: Rng>(n: usize, rank: usize, rng: &mut R) -> Dense {
    let d = 1 << n;
    let mut a = Dense::zeros(d);
    for i in 0..d {
        for j in 0..rank.min(d) {
            a.a[i * d + j] = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    let m = a.mul(&a.dagger());
    let tr = m.trace().re;
    m.scale(1.0 / tr)
}

pub fn to_state(n: usize, m: &Dense) -> DensityMatrix {
    DensityMatrix::from_row_major(n, m.a.clone()).unwrap()
}

pub fn from_state(rho: &DensityMatrix) -> Dense {
    Dense {
        n: rho.dim(),
        a: rho.as_row_major().to_vec(),
    }
}

/// Layer-by-layer forward pass from the raw parameter vector. Returns the
/// outputs and every hidden pre-activation.
pub fn oracle_forward(sizes: &[usize], params: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut act = x.to_vec();
    let mut pre_all = Vec::new();
    let mut off = 0;
    for l in 0..sizes.len() - 1 {
        let (nin, nout) = (sizes[l], sizes[l + 1]);
        let w = &params[off..off + nin * nout];
        let b = &params[off + nin * nout..off + nin * nout + nout];
        off += nin * nout + nout;
        let mut z = vec![0.0; nout];
        for o in 0..nout {
            let mut s = b[o];
            for i in 0..nin {
                s += w[o * nin + i] * act[i];
            }
            z[o] = s;
        }
        if l + 2 < sizes.len() {
            pre_all.extend_from_slice(&z);
            act = z.iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect();
        } else {
            act = z;
        }
    }
    (act, pre_all)
}

/// A hand-wired `[6, h, h, 12]` network that solves the two-qubit Bell
/// task greedily: H(0) while `<Z0>` is positive, then CNOT(0,1) once
/// `<X0>` is positive.
pub fn bell_solver(hidden: usize) -> QNetwork {
    assert!(hidden >= 2);
    let sizes = [6, hidden, hidden, 12];
    let mut net = QNetwork::zeros(&sizes).unwrap();
    let p = net.parameters_mut();
    let l2 = 6 * hidden + hidden;
    let l3 = l2 + hidden * hidden + hidden;
    // (layer offset, fan-in, row, column)
    let links = [
        (0, 6, 0, 2), // unit 0 <- <Z0>
        (0, 6, 1, 0), // unit 1 <- <X0>
        (l2, hidden, 0, 0),
        (l2, hidden, 1, 1),
        (l3, hidden, 4, 0),  // H(0)
        (l3, hidden, 10, 1), // CNOT(0,1)
    ];
    for (offset, fan_in, row, col) in links {
        p[offset + row * fan_in + col] = 1.0;
    }
    net
}
