//! Reference computation: the requested gates applied directly to the data plane, as if every
//! qubit sat in one node.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, ZERO};
use crate::statevec::StateVector;

/// `unitary` on `targets` (first target most significant), applied iff `controls` read
/// `pattern`. Qubits are data-plane positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleGate {
    pub controls: Vec<usize>,
    pub pattern: Vec<bool>,
    pub targets: Vec<usize>,
    pub unitary: Matrix,
}

impl OracleGate {
    pub fn new(controls: Vec<usize>, pattern: Vec<bool>, targets: Vec<usize>, unitary: Matrix) -> Self {
        OracleGate {
            controls,
            pattern,
            targets,
            unitary,
        }
    }

    /// Uncontrolled gate.
    pub fn local(targets: Vec<usize>, unitary: Matrix) -> Self {
        Self::new(Vec::new(), Vec::new(), targets, unitary)
    }

    pub fn dagger(&self) -> Self {
        OracleGate {
            unitary: self.unitary.dagger(),
            ..self.clone()
        }
    }

    fn validate(&self, num_data: usize) -> Result<()> {
        for &q in self.controls.iter().chain(&self.targets) {
            if q >= num_data {
                return Err(Error::InvalidQubitIndex(q));
            }
        }
        let all: BTreeSet<_> = self.controls.iter().chain(&self.targets).collect();
        if all.len() != self.controls.len() + self.targets.len() {
            return Err(Error::Precondition("gate lists a qubit twice".into()));
        }
        if self.controls.len() != self.pattern.len() {
            return Err(Error::PatternLength {
                expected: self.controls.len(),
                got: self.pattern.len(),
            });
        }
        if self.targets.is_empty() || self.unitary.dim() != 1 << self.targets.len() {
            return Err(Error::Precondition("gate size does not match its targets".into()));
        }
        self.unitary.ensure_unitary("oracle gate")
    }
}

pub type GateList = Vec<OracleGate>;

/// Applies `gates` in order to a data-only state.
pub fn oracle_apply(state: &StateVector, gates: &[OracleGate]) -> Result<StateVector> {
    let l = state.layout().clone();
    if l.walkers() != 0 {
        return Err(Error::LayoutMismatch);
    }
    let mut out = state.clone();
    for g in gates {
        g.validate(l.num_data())?;
        let target_mask = g.targets.iter().fold(0usize, |m, &q| m | (1 << l.data_bit(q)));
        let n = g.targets.len();
        out.apply_block(
            &g.unitary,
            |i| {
                i & target_mask == 0
                    && g.controls
                        .iter()
                        .zip(&g.pattern)
                        .all(|(&q, &b)| ((i >> l.data_bit(q)) & 1 == 1) == b)
            },
            |base, k| {
                g.targets.iter().enumerate().fold(base, |idx, (t, &q)| {
                    if (k >> (n - 1 - t)) & 1 == 1 {
                        idx | (1 << l.data_bit(q))
                    } else {
                        idx
                    }
                })
            },
        );
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub walker_purity: f64,
    pub fidelity: f64,
    pub passed: bool,
}

/// Pass threshold for both purity and fidelity.
pub const PASS_THRESHOLD: f64 = 1.0 - 1e-9;

/// Compares a protocol output (walkers ⊗ data) with the oracle's data-only output.
///
/// The fidelity is `⟨φ|ρ|φ⟩` with `ρ` the protocol's reduced data state, so it stays meaningful
/// when the walkers are still entangled with the data.
pub fn compare(protocol_out: &StateVector, oracle_out: &StateVector) -> Result<Comparison> {
    let l = protocol_out.layout();
    if l.data_plane() != *oracle_out.layout() {
        return Err(Error::LayoutMismatch);
    }
    let block = 1usize << l.num_data();
    let phi = oracle_out.amplitudes();
    let fidelity = protocol_out
        .amplitudes()
        .chunks(block)
        .map(|psi| {
            psi.iter()
                .zip(phi)
                .filter(|(a, _)| **a != ZERO)
                .map(|(a, p)| p.conj() * a)
                .sum::<Complex64>()
                .norm_sqr()
        })
        .sum::<f64>();
    let walker_purity = if l.walkers() == 0 || l.num_data() == 0 {
        1.0
    } else {
        protocol_out.purity_across_cut(&l.all_walker_qubits())?
    };
    Ok(Comparison {
        walker_purity,
        fidelity,
        passed: walker_purity >= PASS_THRESHOLD && fidelity >= PASS_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hadamard, pauli_x};
    use crate::netgraph::NetworkGraph;
    use crate::statevec::{fidelity, init_state, DataQubit, RegisterLayout};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn data(n: usize) -> RegisterLayout {
        RegisterLayout::data_only(
            (0..n)
                .map(|i| DataQubit {
                    vertex: 0,
                    name: format!("q{i}"),
                })
                .collect(),
        )
        .unwrap()
    }

    fn basis(n: usize, bits: usize) -> StateVector {
        StateVector::basis(&data(n), bits)
    }

    fn cnot() -> OracleGate {
        OracleGate::new(vec![0], vec![true], vec![1], pauli_x())
    }

    #[test]
    fn cnot_truth_table() {
        assert_eq!(oracle_apply(&basis(2, 0b10), &[cnot()]).unwrap(), basis(2, 0b11));
        assert_eq!(oracle_apply(&basis(2, 0b00), &[cnot()]).unwrap(), basis(2, 0b00));
    }

    #[test]
    fn bell_circuit() {
        let gates = [OracleGate::local(vec![0], hadamard()), cnot()];
        let out = oracle_apply(&basis(2, 0), &gates).unwrap();
        let h = FRAC_1_SQRT_2;
        let bell = StateVector::from_amplitudes(
            &data(2),
            [h, 0.0, 0.0, h].iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
        .unwrap();
        assert!((fidelity(&out, &bell).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unresolved_qubit() {
        let bad = OracleGate::new(vec![0], vec![true], vec![5], pauli_x());
        assert_eq!(oracle_apply(&basis(2, 0), &[bad]), Err(Error::InvalidQubitIndex(5)));
    }

    #[test]
    fn compare_perfect_and_orthogonal() {
        let s = basis(2, 0b01);
        let ok = compare(&s, &s).unwrap();
        assert!(ok.passed && (ok.fidelity - 1.0).abs() < 1e-15 && ok.walker_purity == 1.0);
        let bad = compare(&s, &basis(2, 0b10)).unwrap();
        assert!(!bad.passed && bad.fidelity == 0.0);
    }

    #[test]
    fn compare_reports_entangled_walker() {
        // (|A⟩|0⟩ + |B⟩|1⟩)/√2: the state right after a remote CNOT, before separation.
        let mut g = NetworkGraph::undirected(&["A", "B"], &[("A", "B")]).unwrap();
        g.add_data_qubit(0, "a").unwrap();
        let l = RegisterLayout::for_network(&g, 1).unwrap();
        let x0 = init_state(&l, &[(0, 0)], &[]).unwrap();
        let x1 = init_state(&l, &[(1, 0)], &[(0, [ZERO, crate::linalg::ONE])]).unwrap();
        let h = FRAC_1_SQRT_2;
        let amps = x0
            .amplitudes()
            .iter()
            .zip(x1.amplitudes())
            .map(|(a, b)| (a + b) * h)
            .collect();
        let s = StateVector::from_amplitudes(&l, amps).unwrap();
        let want = StateVector::from_amplitudes(&l.data_plane(), vec![Complex64::new(h, 0.0), Complex64::new(h, 0.0)])
            .unwrap();
        let c = compare(&s, &want).unwrap();
        assert!((c.walker_purity - 0.5).abs() < 1e-12);
        assert!(!c.passed);
    }
}
