use serde::Serialize;
use std::collections::BTreeSet;

use super::Compiled;
use crate::error::{Error, Result};
use crate::statevec::{measure, Basis, MeasureMode, MeasurementRecord, RegisterLayout, StateVector, SUPPORT_TOL};
use crate::walkops::{OperatorSpec, Schedule, SeparationMeasurement, ShiftKind};

/// Classical bits sent from one node to another during measurement separation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassicalMessage {
    pub from: usize,
    pub to: usize,
    pub bits: Vec<u8>,
}

/// One final state of a run; a run without measurement has exactly one.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub record: Option<MeasurementRecord>,
    /// Data qubits that received a `Z` correction.
    pub corrections: Vec<usize>,
    pub messages: Vec<ClassicalMessage>,
    pub probability: f64,
    pub state: StateVector,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunTrace {
    /// `supports[t][j]`: vertices walker `j` may occupy at the start of timestep `t`; the last
    /// entry is the support after the final shift.
    pub supports: Vec<Vec<Vec<usize>>>,
    /// Human-readable description of every locality breach, empty for a valid run.
    pub locality_violations: Vec<String>,
    /// Norm before any terminal measurement.
    pub final_norm: f64,
}

impl RunTrace {
    pub fn steps(&self) -> usize {
        self.supports.len().saturating_sub(1)
    }

    pub fn locality_ok(&self) -> bool {
        self.locality_violations.is_empty()
    }

    /// Walkers whose support newly contains `v` at the start of timestep `t`, over all `t`.
    pub fn arrivals_at(&self, v: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for t in 1..self.supports.len() {
            for (j, now) in self.supports[t].iter().enumerate() {
                if now.contains(&v) && !self.supports[t - 1][j].contains(&v) {
                    out.push((j, t));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub branches: Vec<Branch>,
    pub trace: RunTrace,
}

impl RunOutcome {
    /// State of the first branch.
    pub fn state(&self) -> &StateVector {
        &self.branches[0].state
    }
}

fn supports(state: &StateVector) -> Vec<BTreeSet<usize>> {
    state.walker_supports(SUPPORT_TOL)
}

/// Closed neighbourhood of `v`, read off the layout's flip-flop table.
fn closed_neighbourhood(l: &RegisterLayout, v: usize) -> BTreeSet<usize> {
    let nc = l.coin_bits();
    (0..l.coin_dim(v))
        .map(|c| l.flip_table()[(v << nc) | c] as usize >> nc)
        .collect()
}

/// Runs a compiled protocol on the given data-plane state.
pub fn run_compiled(c: &Compiled, data: &StateVector, mode: MeasureMode) -> Result<RunOutcome> {
    let state = StateVector::product(&c.layout, &c.walker_inits, data)?;
    run_schedule(state, &c.schedule, mode)
}

/// Applies every timestep (operators, then shift) and the terminal measurement if present.
///
/// Supports are recorded at each timestep boundary. Any operator other than a shift that changes
/// a support, or a shift that moves a walker outside the closed neighbourhood of its previous
/// support, is recorded as a locality violation.
pub fn run_schedule(mut state: StateVector, sched: &Schedule, mode: MeasureMode) -> Result<RunOutcome> {
    sched.validate()?;
    let l = state.layout().clone();
    let mut trace = RunTrace::default();
    let mut current = supports(&state);
    let to_vec = |s: &[BTreeSet<usize>]| s.iter().map(|x| x.iter().copied().collect()).collect();
    trace.supports.push(to_vec(&current));
    for (t, step) in sched.timesteps.iter().enumerate() {
        for (i, op) in step.ops.iter().enumerate() {
            op.apply(&mut state)?;
            if l.walkers() > 0 {
                let after = supports(&state);
                if after != current {
                    trace
                        .locality_violations
                        .push(format!("timestep {t}: operator {i} changed a walker support"));
                }
                current = after;
            }
        }
        OperatorSpec::Shift {
            shift: step.shift.kind,
            walkers: step.shift.walkers.clone(),
        }
        .apply(&mut state)?;
        if l.walkers() > 0 && step.shift.kind == ShiftKind::Flipflop {
            let after = supports(&state);
            for (j, (before, now)) in current.iter().zip(&after).enumerate() {
                let reach: BTreeSet<usize> = before.iter().flat_map(|&v| closed_neighbourhood(&l, v)).collect();
                if !now.is_subset(&reach) {
                    trace
                        .locality_violations
                        .push(format!("timestep {t}: walker {j} jumped beyond its neighbours"));
                }
            }
            current = after;
        }
        trace.supports.push(to_vec(&current));
    }
    trace.final_norm = state.norm();
    let branches = match &sched.terminal {
        None => vec![Branch {
            record: None,
            corrections: Vec::new(),
            messages: Vec::new(),
            probability: 1.0,
            state,
        }],
        Some(OperatorSpec::MeasureAndCorrect { entries }) => measure_and_correct(&state, entries, mode)?,
        Some(_) => return Err(Error::Precondition("terminal element must be a measurement".into())),
    };
    Ok(RunOutcome { branches, trace })
}

/// Qubits and bases measured by `entries`, and for each entry the positions (in the measured
/// list) of its `X`-basis qubits.
pub(crate) fn separation_plan(
    l: &RegisterLayout,
    entries: &[SeparationMeasurement],
) -> (Vec<usize>, Vec<Basis>, Vec<Vec<usize>>) {
    let nv = l.vertex_bits();
    let mut qubits = Vec::new();
    let mut bases = Vec::new();
    let mut x_pos = Vec::new();
    for e in entries {
        let mut xs = Vec::new();
        for (k, q) in l.vertex_qubits(e.walker).into_iter().enumerate() {
            let bit = |v: usize| (v >> (nv - 1 - k)) & 1;
            if bit(e.node_a) != bit(e.node_b) {
                xs.push(qubits.len());
                bases.push(Basis::X);
            } else {
                bases.push(Basis::Z);
            }
            qubits.push(q);
        }
        for q in l.coin_qubits(e.walker) {
            qubits.push(q);
            bases.push(Basis::Z);
        }
        x_pos.push(xs);
    }
    (qubits, bases, x_pos)
}

fn measure_and_correct(
    state: &StateVector,
    entries: &[SeparationMeasurement],
    mode: MeasureMode,
) -> Result<Vec<Branch>> {
    let l = state.layout();
    let sup = supports(state);
    for e in entries {
        l.check_walker(e.walker)?;
        let allowed = BTreeSet::from([e.node_a, e.node_b]);
        if !sup[e.walker].is_subset(&allowed) {
            return Err(Error::Precondition(format!(
                "walker {} is not confined to its two endpoints",
                e.walker
            )));
        }
        let off_loop: f64 = state
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(i, _)| l.coin_of(*i, e.walker) != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if off_loop > SUPPORT_TOL {
            return Err(Error::Precondition(format!(
                "walker {} is not resting on a self-loop",
                e.walker
            )));
        }
    }
    let (qubits, bases, x_pos) = separation_plan(l, entries);
    let outcomes = measure(state, &qubits, &bases, mode)?;
    Ok(outcomes
        .into_iter()
        .map(|(record, mut post)| {
            let mut corrections = Vec::new();
            let mut messages = Vec::new();
            for (e, xs) in entries.iter().zip(&x_pos) {
                let bits: Vec<u8> = xs.iter().map(|&p| record.outcomes[p]).collect();
                if bits.iter().fold(0, |acc, b| acc ^ b) == 1 {
                    post.z_bit(l.data_bit(e.correction));
                    corrections.push(e.correction);
                }
                messages.push(ClassicalMessage {
                    from: e.node_a,
                    to: e.node_b,
                    bits,
                });
            }
            Branch {
                probability: record.probability,
                record: Some(record),
                corrections,
                messages,
                state: post,
            }
        })
        .collect())
}
