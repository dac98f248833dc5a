//! Walk operators over a network and register layout, and time-ordered schedules of them.
//!
//! Every operator except [`OperatorSpec::MeasureAndCorrect`] is unitary. Shifts, coin
//! permutations, swap-type controlled coins and interactions are basis permutations and move
//! amplitudes without arithmetic.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, UNITARY_TOL};
use crate::netgraph::{NetworkGraph, SELF_PORT};
use crate::statevec::{RegisterLayout, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    Flipflop,
    Identity,
}

/// Shift applied at the end of a timestep; walkers not listed are left in place.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    pub walkers: Vec<usize>,
}

impl ShiftSpec {
    pub fn identity() -> Self {
        ShiftSpec {
            kind: ShiftKind::Identity,
            walkers: Vec::new(),
        }
    }

    pub fn flipflop(walkers: Vec<usize>) -> Self {
        ShiftSpec {
            kind: ShiftKind::Flipflop,
            walkers,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.kind == ShiftKind::Identity || self.walkers.is_empty()
    }
}

/// Action on the coin of one walker at one vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CoinAction {
    /// Exchanges coin values `c1` and `c2`.
    Swap { c1: usize, c2: usize },
    /// Unitary on the listed coin values; row/column `k` is coin `coins[k]`.
    Block { coins: Vec<usize>, matrix: Matrix },
}

impl CoinAction {
    pub fn swap(c1: usize, c2: usize) -> Self {
        CoinAction::Swap { c1, c2 }
    }

    fn validate(&self, g: &NetworkGraph, v: usize) -> Result<()> {
        match self {
            CoinAction::Swap { c1, c2 } => {
                g.check_coin(v, *c1)?;
                g.check_coin(v, *c2)
            }
            CoinAction::Block { coins, matrix } => validate_block(g, v, coins, matrix),
        }
    }

    fn fits(&self, layout: &RegisterLayout, v: usize) -> bool {
        match self {
            CoinAction::Swap { c1, c2 } => layout.is_valid_edge(v, *c1) && layout.is_valid_edge(v, *c2),
            CoinAction::Block { coins, matrix } => {
                coins.len() == matrix.dim() && coins.iter().all(|&c| layout.is_valid_edge(v, c))
            }
        }
    }

    pub fn inverse(&self) -> CoinAction {
        match self {
            CoinAction::Swap { .. } => self.clone(),
            CoinAction::Block { coins, matrix } => CoinAction::Block {
                coins: coins.clone(),
                matrix: if matrix.is_hermitian(UNITARY_TOL) {
                    matrix.clone()
                } else {
                    matrix.dagger()
                },
            },
        }
    }

    fn is_permutation(&self) -> bool {
        matches!(self, CoinAction::Swap { .. })
    }
}

fn validate_block(g: &NetworkGraph, v: usize, coins: &[usize], matrix: &Matrix) -> Result<()> {
    for &c in coins {
        g.check_coin(v, c)?;
    }
    if coins.iter().collect::<BTreeSet<_>>().len() != coins.len() {
        return Err(Error::Precondition(format!(
            "repeated coin value in block at vertex {v}"
        )));
    }
    if coins.len() != matrix.dim() {
        return Err(Error::Precondition(format!(
            "{} coin values for a {}x{} block",
            coins.len(),
            matrix.dim(),
            matrix.dim()
        )));
    }
    matrix.ensure_unitary("coin block")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoinBlockEntry {
    pub vertex: usize,
    pub coins: Vec<usize>,
    pub matrix: Matrix,
}

/// Measurement separating one walker from the data plane; see
/// [`crate::protocols::separate_measure`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparationMeasurement {
    pub walker: usize,
    pub node_a: usize,
    pub node_b: usize,
    /// Data qubit that receives `Z` when the X outcomes have odd parity.
    pub correction: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    Shift {
        shift: ShiftKind,
        walkers: Vec<usize>,
    },
    CoinPerm {
        walker: usize,
        vertex: usize,
        c1: usize,
        c2: usize,
    },
    /// `Σ_v |v⟩⟨v| ⊗ C_v`, identity on unlisted vertices and coin values.
    CoinBlock {
        walker: usize,
        blocks: Vec<CoinBlockEntry>,
    },
    /// Coin action at `vertex` iff the control qubits read `pattern`.
    DataControlledCoin {
        walker: usize,
        vertex: usize,
        controls: Vec<usize>,
        pattern: Vec<bool>,
        action: CoinAction,
    },
    /// `unitary` on `targets` (first target most significant) wherever the walker sits at
    /// `vertex`, optionally only for the listed coin values. `coin_action`, only allowed without
    /// a coin condition, acts on the walker's coin at the same time.
    CoinControlledData {
        walker: usize,
        vertex: usize,
        coins: Option<Vec<usize>>,
        targets: Vec<usize>,
        unitary: Matrix,
        coin_action: Option<CoinAction>,
    },
    /// Coin action on `target_walker` iff `control_walker` is at `(vertex, control_coin)` and
    /// `target_walker` is at `vertex`.
    WalkInteraction {
        vertex: usize,
        control_walker: usize,
        control_coin: usize,
        target_walker: usize,
        action: CoinAction,
    },
    /// 1-to-k control fan-out; `walkers[0]` carries `incoming_coin`, the rest are helpers at
    /// the self-loop, and walker `walkers[k]` ends on port `ports[k]`.
    Fanout {
        vertex: usize,
        incoming_coin: usize,
        walkers: Vec<usize>,
        ports: Vec<usize>,
    },
    MeasureAndCorrect {
        entries: Vec<SeparationMeasurement>,
    },
}

pub fn make_flipflop_shift(layout: &RegisterLayout, walkers: &[usize]) -> Result<OperatorSpec> {
    for &j in walkers {
        layout.check_walker(j)?;
    }
    Ok(OperatorSpec::Shift {
        shift: ShiftKind::Flipflop,
        walkers: walkers.to_vec(),
    })
}

pub fn make_identity_shift() -> OperatorSpec {
    OperatorSpec::Shift {
        shift: ShiftKind::Identity,
        walkers: Vec::new(),
    }
}

/// `C_v^{c1 c2}` on walker `walker`.
pub fn make_coin_perm(g: &NetworkGraph, v: usize, c1: usize, c2: usize, walker: usize) -> Result<OperatorSpec> {
    g.check_coin(v, c1)?;
    g.check_coin(v, c2)?;
    Ok(OperatorSpec::CoinPerm {
        walker,
        vertex: v,
        c1,
        c2,
    })
}

pub fn make_coin_block(g: &NetworkGraph, blocks: Vec<CoinBlockEntry>, walker: usize) -> Result<OperatorSpec> {
    let mut seen = BTreeSet::new();
    for b in &blocks {
        g.check_vertex(b.vertex)?;
        if !seen.insert(b.vertex) {
            return Err(Error::Precondition(format!("vertex {} assigned twice", b.vertex)));
        }
        validate_block(g, b.vertex, &b.coins, &b.matrix)?;
    }
    Ok(OperatorSpec::CoinBlock { walker, blocks })
}

/// Full `d(v)+1`-dimensional coin block at `v`.
pub fn full_coin_block(g: &NetworkGraph, v: usize, matrix: Matrix) -> CoinBlockEntry {
    CoinBlockEntry {
        vertex: v,
        coins: (0..g.coin_dim(v)).collect(),
        matrix,
    }
}

fn check_local_qubits(layout: &RegisterLayout, v: usize, qubits: &[usize]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &q in qubits {
        let dq = layout.data_qubits().get(q).ok_or(Error::InvalidQubitIndex(q))?;
        if dq.vertex != v {
            return Err(Error::LocalityViolation { qubit: q, vertex: v });
        }
        if !seen.insert(q) {
            return Err(Error::Precondition(format!("data qubit {q} listed twice")));
        }
    }
    Ok(())
}

pub fn make_data_controlled_coin(
    g: &NetworkGraph,
    layout: &RegisterLayout,
    v: usize,
    controls: &[usize],
    pattern: &[bool],
    action: CoinAction,
    walker: usize,
) -> Result<OperatorSpec> {
    layout.check_walker(walker)?;
    g.check_vertex(v)?;
    check_local_qubits(layout, v, controls)?;
    if controls.len() != pattern.len() {
        return Err(Error::PatternLength {
            expected: controls.len(),
            got: pattern.len(),
        });
    }
    action.validate(g, v)?;
    Ok(OperatorSpec::DataControlledCoin {
        walker,
        vertex: v,
        controls: controls.to_vec(),
        pattern: pattern.to_vec(),
        action,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn make_coin_controlled_data(
    g: &NetworkGraph,
    layout: &RegisterLayout,
    v: usize,
    coins: Option<Vec<usize>>,
    targets: &[usize],
    unitary: Matrix,
    coin_action: Option<CoinAction>,
    walker: usize,
) -> Result<OperatorSpec> {
    layout.check_walker(walker)?;
    g.check_vertex(v)?;
    check_local_qubits(layout, v, targets)?;
    if targets.is_empty() || unitary.dim() != 1 << targets.len() {
        return Err(Error::Precondition(format!(
            "{}x{} data unitary for {} target qubits",
            unitary.dim(),
            unitary.dim(),
            targets.len()
        )));
    }
    unitary.ensure_unitary("data unitary")?;
    if let Some(cs) = &coins {
        for &c in cs {
            g.check_coin(v, c)?;
        }
        if coin_action.is_some() {
            return Err(Error::Precondition(
                "a coin action cannot be combined with a coin condition".into(),
            ));
        }
    }
    if let Some(a) = &coin_action {
        a.validate(g, v)?;
    }
    Ok(OperatorSpec::CoinControlledData {
        walker,
        vertex: v,
        coins,
        targets: targets.to_vec(),
        unitary,
        coin_action,
    })
}

pub fn make_walk_interaction(
    g: &NetworkGraph,
    layout: &RegisterLayout,
    v: usize,
    control_coin: usize,
    action: CoinAction,
    control_walker: usize,
    target_walker: usize,
) -> Result<OperatorSpec> {
    if control_walker == target_walker {
        return Err(Error::SameWalker(control_walker));
    }
    layout.check_walker(control_walker)?;
    layout.check_walker(target_walker)?;
    g.check_coin(v, control_coin)?;
    action.validate(g, v)?;
    Ok(OperatorSpec::WalkInteraction {
        vertex: v,
        control_walker,
        control_coin,
        target_walker,
        action,
    })
}

/// Compact fan-out operator; see [`make_fanout`] for its expansion.
pub fn make_fanout_op(
    g: &NetworkGraph,
    layout: &RegisterLayout,
    v: usize,
    incoming_coin: usize,
    successors: &[usize],
    walkers: &[usize],
) -> Result<OperatorSpec> {
    g.check_coin(v, incoming_coin)?;
    if successors.is_empty() || successors.len() != walkers.len() {
        return Err(Error::Precondition(format!(
            "{} successors for {} walkers",
            successors.len(),
            walkers.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for &u in successors {
        if !seen.insert(u) {
            return Err(Error::DuplicateSuccessor(u));
        }
    }
    let mut seen = BTreeSet::new();
    for &w in walkers {
        layout.check_walker(w)?;
        if !seen.insert(w) {
            return Err(Error::Precondition(format!("walker {w} listed twice in fan-out")));
        }
    }
    let ports = successors
        .iter()
        .map(|&u| g.port_to(v, u))
        .collect::<Result<Vec<_>>>()?;
    if ports[1..].contains(&incoming_coin) {
        return Err(Error::Precondition(
            "a helper successor coincides with the incoming edge".into(),
        ));
    }
    Ok(OperatorSpec::Fanout {
        vertex: v,
        incoming_coin,
        walkers: walkers.to_vec(),
        ports,
    })
}

/// 1-to-k control fan-out at `v` as its operator list: `k-1` interactions that move each helper
/// from the self-loop onto its successor edge when the received walker carries
/// `incoming_coin`, then the coin permutation of the received walker onto the first successor.
pub fn make_fanout(
    g: &NetworkGraph,
    layout: &RegisterLayout,
    v: usize,
    incoming_coin: usize,
    successors: &[usize],
    walkers: &[usize],
) -> Result<Vec<OperatorSpec>> {
    Ok(make_fanout_op(g, layout, v, incoming_coin, successors, walkers)?.expand())
}

impl OperatorSpec {
    /// Component operators of a composite kind; other kinds return themselves.
    pub fn expand(&self) -> Vec<OperatorSpec> {
        match self {
            OperatorSpec::Fanout {
                vertex,
                incoming_coin,
                walkers,
                ports,
            } => {
                let mut ops: Vec<OperatorSpec> = walkers[1..]
                    .iter()
                    .zip(&ports[1..])
                    .map(|(&w, &p)| OperatorSpec::WalkInteraction {
                        vertex: *vertex,
                        control_walker: walkers[0],
                        control_coin: *incoming_coin,
                        target_walker: w,
                        action: CoinAction::swap(SELF_PORT, p),
                    })
                    .collect();
                if *incoming_coin != ports[0] {
                    ops.push(OperatorSpec::CoinPerm {
                        walker: walkers[0],
                        vertex: *vertex,
                        c1: *incoming_coin,
                        c2: ports[0],
                    });
                }
                ops
            }
            _ => vec![self.clone()],
        }
    }

    /// Inverse as an operator list (composite kinds invert component-wise).
    pub fn inverse(&self) -> Result<Vec<OperatorSpec>> {
        Ok(match self {
            OperatorSpec::MeasureAndCorrect { .. } => return Err(Error::MeasurementInSchedule),
            OperatorSpec::Shift { .. } | OperatorSpec::CoinPerm { .. } => vec![self.clone()],
            OperatorSpec::CoinBlock { walker, blocks } => vec![OperatorSpec::CoinBlock {
                walker: *walker,
                blocks: blocks
                    .iter()
                    .map(|b| CoinBlockEntry {
                        vertex: b.vertex,
                        coins: b.coins.clone(),
                        matrix: if b.matrix.is_hermitian(UNITARY_TOL) {
                            b.matrix.clone()
                        } else {
                            b.matrix.dagger()
                        },
                    })
                    .collect(),
            }],
            OperatorSpec::DataControlledCoin {
                walker,
                vertex,
                controls,
                pattern,
                action,
            } => vec![OperatorSpec::DataControlledCoin {
                walker: *walker,
                vertex: *vertex,
                controls: controls.clone(),
                pattern: pattern.clone(),
                action: action.inverse(),
            }],
            OperatorSpec::CoinControlledData {
                walker,
                vertex,
                coins,
                targets,
                unitary,
                coin_action,
            } => vec![OperatorSpec::CoinControlledData {
                walker: *walker,
                vertex: *vertex,
                coins: coins.clone(),
                targets: targets.clone(),
                unitary: if unitary.is_hermitian(UNITARY_TOL) {
                    unitary.clone()
                } else {
                    unitary.dagger()
                },
                coin_action: coin_action.as_ref().map(CoinAction::inverse),
            }],
            OperatorSpec::WalkInteraction {
                vertex,
                control_walker,
                control_coin,
                target_walker,
                action,
            } => vec![OperatorSpec::WalkInteraction {
                vertex: *vertex,
                control_walker: *control_walker,
                control_coin: *control_coin,
                target_walker: *target_walker,
                action: action.inverse(),
            }],
            OperatorSpec::Fanout { .. } => {
                let mut out = Vec::new();
                for op in self.expand().iter().rev() {
                    out.extend(op.inverse()?);
                }
                out
            }
        })
    }

    /// Whether the operator only relocates amplitudes.
    pub fn is_permutation(&self) -> bool {
        match self {
            OperatorSpec::Shift { .. } | OperatorSpec::CoinPerm { .. } | OperatorSpec::Fanout { .. } => true,
            OperatorSpec::DataControlledCoin { action, .. } | OperatorSpec::WalkInteraction { action, .. } => {
                action.is_permutation()
            }
            _ => false,
        }
    }

    /// Whether the operator leaves every data qubit untouched.
    pub fn touches_data(&self) -> bool {
        matches!(
            self,
            OperatorSpec::CoinControlledData { .. } | OperatorSpec::MeasureAndCorrect { .. }
        )
    }

    /// Walkers whose registers the operator reads or writes.
    pub fn walkers(&self) -> Vec<usize> {
        match self {
            OperatorSpec::Shift { walkers, .. } | OperatorSpec::Fanout { walkers, .. } => walkers.clone(),
            OperatorSpec::CoinPerm { walker, .. }
            | OperatorSpec::CoinBlock { walker, .. }
            | OperatorSpec::DataControlledCoin { walker, .. }
            | OperatorSpec::CoinControlledData { walker, .. } => vec![*walker],
            OperatorSpec::WalkInteraction {
                control_walker,
                target_walker,
                ..
            } => vec![*control_walker, *target_walker],
            OperatorSpec::MeasureAndCorrect { entries } => entries.iter().map(|e| e.walker).collect(),
        }
    }

    fn check_layout(&self, layout: &RegisterLayout) -> Result<()> {
        let ok_walkers = self.walkers().iter().all(|&w| w < layout.walkers());
        let vertex_ok = |v: usize| v < layout.num_vertices();
        let data_ok = |qs: &[usize]| qs.iter().all(|&q| q < layout.num_data());
        let ok = ok_walkers
            && match self {
                OperatorSpec::Shift { .. } => true,
                OperatorSpec::CoinPerm { vertex, c1, c2, .. } => {
                    layout.is_valid_edge(*vertex, *c1) && layout.is_valid_edge(*vertex, *c2)
                }
                OperatorSpec::CoinBlock { blocks, .. } => blocks.iter().all(|b| {
                    vertex_ok(b.vertex)
                        && b.coins.len() == b.matrix.dim()
                        && b.coins.iter().all(|&c| layout.is_valid_edge(b.vertex, c))
                }),
                OperatorSpec::DataControlledCoin {
                    vertex,
                    controls,
                    pattern,
                    action,
                    ..
                } => {
                    vertex_ok(*vertex)
                        && data_ok(controls)
                        && controls.len() == pattern.len()
                        && action.fits(layout, *vertex)
                }
                OperatorSpec::CoinControlledData {
                    vertex,
                    coins,
                    targets,
                    unitary,
                    coin_action,
                    ..
                } => {
                    vertex_ok(*vertex)
                        && data_ok(targets)
                        && !targets.is_empty()
                        && unitary.dim() == 1 << targets.len()
                        && coins
                            .as_ref()
                            .is_none_or(|cs| cs.iter().all(|&c| layout.is_valid_edge(*vertex, c)))
                        && coin_action.as_ref().is_none_or(|a| a.fits(layout, *vertex))
                }
                OperatorSpec::WalkInteraction {
                    vertex,
                    control_coin,
                    control_walker,
                    target_walker,
                    action,
                } => {
                    control_walker != target_walker
                        && layout.is_valid_edge(*vertex, *control_coin)
                        && action.fits(layout, *vertex)
                }
                OperatorSpec::Fanout {
                    vertex,
                    incoming_coin,
                    walkers,
                    ports,
                } => {
                    !walkers.is_empty()
                        && walkers.len() == ports.len()
                        && layout.is_valid_edge(*vertex, *incoming_coin)
                        && ports.iter().all(|&p| layout.is_valid_edge(*vertex, p))
                }
                OperatorSpec::MeasureAndCorrect { entries } => entries
                    .iter()
                    .all(|e| vertex_ok(e.node_a) && vertex_ok(e.node_b) && e.correction < layout.num_data()),
            };
        if ok {
            Ok(())
        } else {
            Err(Error::LayoutMismatch)
        }
    }

    /// Index map of the single-involution permutation kinds.
    fn involution<'a>(&'a self, l: &'a RegisterLayout) -> Option<Box<dyn Fn(usize) -> usize + 'a>> {
        let swap_coin = move |i: usize, j: usize, c1: usize, c2: usize| {
            let c = l.coin_of(i, j);
            if c == c1 {
                l.with_coin(i, j, c2)
            } else if c == c2 {
                l.with_coin(i, j, c1)
            } else {
                i
            }
        };
        match self {
            OperatorSpec::Shift { shift, walkers } => {
                if *shift == ShiftKind::Identity {
                    return Some(Box::new(|i| i));
                }
                let flip = l.flip_table();
                Some(Box::new(move |i| {
                    walkers.iter().fold(i, |idx, &j| {
                        l.with_walker_field(idx, j, flip[l.walker_field(idx, j)] as usize)
                    })
                }))
            }
            OperatorSpec::CoinPerm { walker, vertex, c1, c2 } => Some(Box::new(move |i| {
                if l.vertex_of(i, *walker) == *vertex {
                    swap_coin(i, *walker, *c1, *c2)
                } else {
                    i
                }
            })),
            OperatorSpec::DataControlledCoin {
                walker,
                vertex,
                controls,
                pattern,
                action: CoinAction::Swap { c1, c2 },
            } => Some(Box::new(move |i| {
                if l.vertex_of(i, *walker) == *vertex && pattern_matches(l, i, controls, pattern) {
                    swap_coin(i, *walker, *c1, *c2)
                } else {
                    i
                }
            })),
            OperatorSpec::WalkInteraction {
                vertex,
                control_walker,
                control_coin,
                target_walker,
                action: CoinAction::Swap { c1, c2 },
            } => Some(Box::new(move |i| {
                if l.vertex_of(i, *control_walker) == *vertex
                    && l.coin_of(i, *control_walker) == *control_coin
                    && l.vertex_of(i, *target_walker) == *vertex
                {
                    swap_coin(i, *target_walker, *c1, *c2)
                } else {
                    i
                }
            })),
            _ => None,
        }
    }

    /// Applies the operator to `state`. `MeasureAndCorrect` is rejected here; it is executed by
    /// [`crate::protocols::run_schedule`].
    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        let layout = state.layout().clone();
        self.check_layout(&layout)?;
        if let Some(f) = self.involution(&layout) {
            state.permute_involution(f);
            return Ok(());
        }
        let l = &layout;
        match self {
            OperatorSpec::CoinBlock { walker, blocks } => {
                for b in blocks {
                    let j = *walker;
                    apply_coin_block(state, j, b.vertex, &b.coins, &b.matrix, |_| true);
                }
            }
            OperatorSpec::DataControlledCoin {
                walker,
                vertex,
                controls,
                pattern,
                action: CoinAction::Block { coins, matrix },
            } => apply_coin_block(state, *walker, *vertex, coins, matrix, |i| {
                pattern_matches(l, i, controls, pattern)
            }),
            OperatorSpec::WalkInteraction {
                vertex,
                control_walker,
                control_coin,
                target_walker,
                action: CoinAction::Block { coins, matrix },
            } => apply_coin_block(state, *target_walker, *vertex, coins, matrix, |i| {
                l.vertex_of(i, *control_walker) == *vertex && l.coin_of(i, *control_walker) == *control_coin
            }),
            OperatorSpec::CoinControlledData {
                walker,
                vertex,
                coins,
                targets,
                unitary,
                coin_action,
            } => {
                let j = *walker;
                let target_mask = targets.iter().fold(0usize, |m, &q| m | (1 << l.data_bit(q)));
                let n = targets.len();
                state.apply_block(
                    unitary,
                    |i| {
                        i & target_mask == 0
                            && l.vertex_of(i, j) == *vertex
                            && coins.as_ref().is_none_or(|cs| cs.contains(&l.coin_of(i, j)))
                    },
                    |base, k| {
                        targets.iter().enumerate().fold(base, |idx, (t, &q)| {
                            if (k >> (n - 1 - t)) & 1 == 1 {
                                idx | (1 << l.data_bit(q))
                            } else {
                                idx
                            }
                        })
                    },
                );
                match coin_action {
                    None => {}
                    Some(CoinAction::Swap { c1, c2 }) => OperatorSpec::CoinPerm {
                        walker: j,
                        vertex: *vertex,
                        c1: *c1,
                        c2: *c2,
                    }
                    .apply(state)?,
                    Some(CoinAction::Block { coins, matrix }) => {
                        apply_coin_block(state, j, *vertex, coins, matrix, |_| true)
                    }
                }
            }
            OperatorSpec::Fanout { vertex, walkers, .. } => {
                for &w in &walkers[1..] {
                    let at_rest = state.amplitudes().iter().enumerate().all(|(i, a)| {
                        a.norm_sqr() == 0.0 || (l.vertex_of(i, w) == *vertex && l.coin_of(i, w) == SELF_PORT)
                    });
                    if !at_rest {
                        return Err(Error::UninitializedHelper(w));
                    }
                }
                for op in self.expand() {
                    op.apply(state)?;
                }
            }
            OperatorSpec::MeasureAndCorrect { .. } => {
                return Err(Error::Precondition(
                    "measurement is not unitary; run it through run_schedule".into(),
                ))
            }
            // Permutation kinds were handled above.
            _ => unreachable!("permutation operator without an index map"),
        }
        Ok(())
    }

    /// Checks that the operator denotes a unitary on `layout`: permutation kinds must induce a
    /// bijection of basis indices, block kinds must have unitary blocks.
    pub fn check_unitary(&self, layout: &RegisterLayout) -> Result<()> {
        self.check_layout(layout)?;
        match self {
            OperatorSpec::Fanout { .. } => {
                for op in self.expand() {
                    op.check_unitary(layout)?;
                }
                Ok(())
            }
            OperatorSpec::MeasureAndCorrect { .. } => Err(Error::Precondition("measurement is not unitary".into())),
            _ => {
                if let Some(f) = self.involution(layout) {
                    let mut hit = vec![false; layout.dim()];
                    for i in 0..layout.dim() {
                        let j = f(i);
                        if j >= hit.len() || hit[j] {
                            return Err(Error::NotUnitary("index map is not a bijection".into()));
                        }
                        hit[j] = true;
                    }
                    return Ok(());
                }
                let matrices: Vec<&Matrix> = match self {
                    OperatorSpec::CoinBlock { blocks, .. } => blocks.iter().map(|b| &b.matrix).collect(),
                    OperatorSpec::DataControlledCoin {
                        action: CoinAction::Block { matrix, .. },
                        ..
                    }
                    | OperatorSpec::WalkInteraction {
                        action: CoinAction::Block { matrix, .. },
                        ..
                    } => vec![matrix],
                    OperatorSpec::CoinControlledData {
                        unitary, coin_action, ..
                    } => {
                        let mut v = vec![unitary];
                        if let Some(CoinAction::Block { matrix, .. }) = coin_action {
                            v.push(matrix);
                        }
                        v
                    }
                    _ => Vec::new(),
                };
                for m in matrices {
                    m.ensure_unitary("operator block")?;
                }
                Ok(())
            }
        }
    }
}

fn pattern_matches(l: &RegisterLayout, i: usize, controls: &[usize], pattern: &[bool]) -> bool {
    controls
        .iter()
        .zip(pattern)
        .all(|(&q, &b)| ((i >> l.data_bit(q)) & 1 == 1) == b)
}

/// Applies `matrix` to walker `j`'s coin values `coins` at vertex `v` where `cond` holds.
/// `cond` must not depend on walker `j`'s coin.
fn apply_coin_block(
    state: &mut StateVector,
    j: usize,
    v: usize,
    coins: &[usize],
    matrix: &Matrix,
    cond: impl Fn(usize) -> bool,
) {
    if coins.is_empty() {
        return;
    }
    let l = state.layout().clone();
    state.apply_block(
        matrix,
        |i| l.vertex_of(i, j) == v && l.coin_of(i, j) == coins[0] && cond(i),
        |base, k| l.with_coin(base, j, coins[k]),
    );
}

/// One timestep: operators in order, then the shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timestep {
    pub ops: Vec<OperatorSpec>,
    pub shift: ShiftSpec,
}

/// Time-ordered operator list with exactly one shift per timestep and an optional terminal
/// measurement.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub timesteps: Vec<Timestep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<OperatorSpec>,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timesteps.is_empty() && self.terminal.is_none()
    }

    pub fn push(&mut self, ops: Vec<OperatorSpec>, shift: ShiftSpec) {
        self.timesteps.push(Timestep { ops, shift });
    }

    /// Appends the timesteps of `other`. Fails if `self` already ends in a measurement.
    pub fn extend(&mut self, other: Schedule) -> Result<()> {
        if self.terminal.is_some() {
            return Err(Error::Precondition("measurement must be the last element".into()));
        }
        self.timesteps.extend(other.timesteps);
        self.terminal = other.terminal;
        Ok(())
    }

    /// Structural checks: no shift or measurement inside a timestep, terminal is a measurement.
    pub fn validate(&self) -> Result<()> {
        for (t, step) in self.timesteps.iter().enumerate() {
            for op in &step.ops {
                if matches!(op, OperatorSpec::Shift { .. } | OperatorSpec::MeasureAndCorrect { .. }) {
                    return Err(Error::Precondition(format!(
                        "timestep {t} lists a shift or measurement among its operators"
                    )));
                }
            }
        }
        match &self.terminal {
            None | Some(OperatorSpec::MeasureAndCorrect { .. }) => Ok(()),
            Some(_) => Err(Error::Precondition("terminal element must be a measurement".into())),
        }
    }

    pub fn operators(&self) -> impl Iterator<Item = &OperatorSpec> {
        self.timesteps.iter().flat_map(|t| t.ops.iter())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Schedule = serde_json::from_str(text).map_err(|e| Error::Precondition(format!("schedule JSON: {e}")))?;
        s.validate()?;
        Ok(s)
    }
}

/// Reverses a measurement-free schedule, inverting each operator.
///
/// The flattened sequence `ops_0, S_0, ops_1, S_1, …` becomes `S_n, ops_n⁻¹, …, S_0, ops_0⁻¹`,
/// regrouped so that every shift closes a timestep. Timesteps that would hold no operator and
/// an identity shift are dropped, and trailing operators get an identity shift.
pub fn invert_schedule(sched: &Schedule) -> Result<Schedule> {
    if sched.terminal.is_some() {
        return Err(Error::MeasurementInSchedule);
    }
    let mut out = Schedule::new();
    let mut pending: Vec<OperatorSpec> = Vec::new();
    for step in sched.timesteps.iter().rev() {
        if !(pending.is_empty() && step.shift.is_identity()) {
            out.push(std::mem::take(&mut pending), step.shift.clone());
        }
        for op in step.ops.iter().rev() {
            pending.extend(op.inverse()?);
        }
    }
    if !pending.is_empty() {
        out.push(pending, ShiftSpec::identity());
    }
    Ok(out)
}
