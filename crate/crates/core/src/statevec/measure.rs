use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::StateVector;
use crate::error::{Error, Result};
use crate::linalg::ZERO;

/// Branches with probability at or below this are treated as impossible.
const BRANCH_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    X,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureMode {
    /// Draw one branch with Born probabilities from a ChaCha8 stream seeded with this value.
    Sample(u64),
    /// Return every branch with nonzero probability.
    Branch,
}

/// Outcome of a projective measurement. Outcome 0 is `|0⟩` (Z) or `|+⟩` (X).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub qubits: Vec<usize>,
    pub bases: Vec<Basis>,
    pub outcomes: Vec<u8>,
    pub probability: f64,
}

/// Measures `qubits` (MSB = 0 numbering) in the given bases.
pub fn measure(
    state: &StateVector,
    qubits: &[usize],
    bases: &[Basis],
    mode: MeasureMode,
) -> Result<Vec<(MeasurementRecord, StateVector)>> {
    match mode {
        MeasureMode::Branch => state.measure_branches(qubits, bases),
        MeasureMode::Sample(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(vec![state.measure_sample(qubits, bases, &mut rng)?])
        }
    }
}

impl StateVector {
    fn check_measurement(&self, qubits: &[usize], bases: &[Basis]) -> Result<()> {
        if qubits.len() != bases.len() {
            return Err(Error::Precondition(format!(
                "{} qubits but {} bases",
                qubits.len(),
                bases.len()
            )));
        }
        let total = self.layout.total_bits();
        if let Some(&q) = qubits.iter().find(|&&q| q >= total) {
            return Err(Error::InvalidQubitIndex(q));
        }
        let distinct: BTreeSet<_> = qubits.iter().collect();
        if distinct.len() != qubits.len() {
            return Err(Error::InvalidSubsystem("qubit measured twice".into()));
        }
        Ok(())
    }

    /// Rotates X-basis qubits into Z and returns the rotated copy with per-pattern probabilities.
    fn outcome_distribution(&self, qubits: &[usize], bases: &[Basis]) -> (StateVector, Vec<f64>) {
        let mut rotated = self.clone();
        for (&q, &b) in qubits.iter().zip(bases) {
            if b == Basis::X {
                rotated.hadamard_bit(self.layout.qubit_bit(q));
            }
        }
        let mut probs = vec![0.0; 1 << qubits.len()];
        for (i, a) in rotated.amps.iter().enumerate() {
            if *a != ZERO {
                probs[self.pattern_of(i, qubits)] += a.norm_sqr();
            }
        }
        (rotated, probs)
    }

    fn pattern_of(&self, index: usize, qubits: &[usize]) -> usize {
        qubits
            .iter()
            .fold(0, |acc, &q| (acc << 1) | ((index >> self.layout.qubit_bit(q)) & 1))
    }

    fn collapse(
        &self,
        rotated: &StateVector,
        qubits: &[usize],
        bases: &[Basis],
        pattern: usize,
        p: f64,
    ) -> (MeasurementRecord, StateVector) {
        let scale = 1.0 / p.sqrt();
        let mut post = rotated.clone();
        for (i, a) in post.amps.iter_mut().enumerate() {
            if self.pattern_of(i, qubits) == pattern {
                *a *= scale;
            } else {
                *a = ZERO;
            }
        }
        for (&q, &b) in qubits.iter().zip(bases) {
            if b == Basis::X {
                post.hadamard_bit(self.layout.qubit_bit(q));
            }
        }
        let n = qubits.len();
        let outcomes = (0..n).map(|k| ((pattern >> (n - 1 - k)) & 1) as u8).collect();
        let record = MeasurementRecord {
            qubits: qubits.to_vec(),
            bases: bases.to_vec(),
            outcomes,
            probability: p,
        };
        (record, post)
    }

    /// All nonzero-probability branches in ascending outcome order.
    pub fn measure_branches(&self, qubits: &[usize], bases: &[Basis]) -> Result<Vec<(MeasurementRecord, StateVector)>> {
        self.check_measurement(qubits, bases)?;
        let (rotated, probs) = self.outcome_distribution(qubits, bases);
        Ok(probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > BRANCH_EPS)
            .map(|(pattern, &p)| self.collapse(&rotated, qubits, bases, pattern, p))
            .collect())
    }

    /// One branch drawn from `rng` with Born probabilities.
    pub fn measure_sample<R: Rng>(
        &self,
        qubits: &[usize],
        bases: &[Basis],
        rng: &mut R,
    ) -> Result<(MeasurementRecord, StateVector)> {
        self.check_measurement(qubits, bases)?;
        let (rotated, probs) = self.outcome_distribution(qubits, bases);
        let live: Vec<(usize, f64)> = probs
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, p)| p > BRANCH_EPS)
            .collect();
        let total: f64 = live.iter().map(|x| x.1).sum();
        let draw = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = *live.last().expect("state has nonzero norm");
        for &(pattern, p) in &live {
            acc += p;
            if draw < acc {
                chosen = (pattern, p);
                break;
            }
        }
        Ok(self.collapse(&rotated, qubits, bases, chosen.0, chosen.1))
    }
}
