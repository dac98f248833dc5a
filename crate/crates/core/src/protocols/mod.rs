//! Compilers from named network procedures to schedules, and the schedule runner.
//!
//! Every compiler returns a [`Compiled`] protocol: the schedule together with the layout it was
//! built for, the walkers' starting positions, the gate list the oracle should apply to the data
//! plane, and the timesteps at which each target node is expected to receive its walker.

mod run;

pub use run::{run_compiled, run_schedule, Branch, ClassicalMessage, RunOutcome, RunTrace};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::linalg::{ghz_prep, hadamard, pauli_x, x_all, Matrix};
use crate::netgraph::{NetworkGraph, PathSpec, TreeSpec, SELF_PORT};
use crate::oracle::{GateList, OracleGate};
use crate::statevec::RegisterLayout;
use crate::walkops::{
    invert_schedule, make_coin_block, make_coin_controlled_data, make_coin_perm, make_data_controlled_coin,
    make_fanout_op, CoinAction, CoinBlockEntry, OperatorSpec, Schedule, SeparationMeasurement, ShiftSpec, Timestep,
};

/// A data qubit named by its node and local name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QubitRef {
    pub vertex: usize,
    pub name: String,
}

impl QubitRef {
    pub fn new(vertex: usize, name: &str) -> Self {
        QubitRef {
            vertex,
            name: name.to_string(),
        }
    }

    /// Parses `label.name`.
    pub fn parse(g: &NetworkGraph, text: &str) -> Result<Self> {
        let (node, name) = text
            .split_once('.')
            .ok_or_else(|| Error::UnknownQubit(text.to_string()))?;
        let vertex = g.vertex(node)?;
        if !g.data_qubits(vertex).iter().any(|q| q == name) {
            return Err(Error::UnknownQubit(text.to_string()));
        }
        Ok(QubitRef::new(vertex, name))
    }

    pub fn display(&self, g: &NetworkGraph) -> String {
        format!("{}.{}", g.label(self.vertex), self.name)
    }

    fn resolve(&self, g: &NetworkGraph, layout: &RegisterLayout) -> Result<usize> {
        layout
            .data_index(self.vertex, &self.name)
            .ok_or_else(|| Error::UnknownQubit(format!("{}.{}", g.label(self.vertex), self.name)))
    }
}

/// Unitary on one or more qubits of a single node; the first qubit is most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetGate {
    pub targets: Vec<QubitRef>,
    pub unitary: Matrix,
}

impl TargetGate {
    pub fn new(targets: Vec<QubitRef>, unitary: Matrix) -> Self {
        TargetGate { targets, unitary }
    }

    pub fn node(&self) -> Result<usize> {
        let first = self
            .targets
            .first()
            .ok_or_else(|| Error::Precondition("gate without target".into()))?;
        if self.targets.iter().any(|q| q.vertex != first.vertex) {
            return Err(Error::Precondition("all targets of a gate must sit at one node".into()));
        }
        Ok(first.vertex)
    }

    fn validate(&self) -> Result<()> {
        self.node()?;
        if self.unitary.dim() != 1 << self.targets.len() {
            return Err(Error::Precondition(format!(
                "{}x{} unitary for {} target qubits",
                self.unitary.dim(),
                self.unitary.dim(),
                self.targets.len()
            )));
        }
        self.unitary.ensure_unitary("target gate")
    }
}

/// Controlled gate request: `target` is applied iff the control qubits read `pattern`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateRequest {
    pub controls: Vec<QubitRef>,
    pub pattern: Vec<bool>,
    pub target: TargetGate,
}

impl GateRequest {
    /// Singly controlled `U`, firing on control value 1.
    pub fn cu(control: QubitRef, target: QubitRef, unitary: Matrix) -> Self {
        GateRequest {
            controls: vec![control],
            pattern: vec![true],
            target: TargetGate::new(vec![target], unitary),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.controls.is_empty() {
            return Err(Error::Precondition("gate request without control".into()));
        }
        if self.controls.len() != self.pattern.len() {
            return Err(Error::PatternLength {
                expected: self.controls.len(),
                got: self.pattern.len(),
            });
        }
        self.target.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Separation {
    /// Run the walker history backwards.
    Reverse,
    /// Measure the walker registers and correct the control qubit.
    Measure,
}

/// A schedule ready to run, with everything needed to check it.
#[derive(Clone, Debug, PartialEq)]
pub struct Compiled {
    pub layout: RegisterLayout,
    pub walker_inits: Vec<(usize, usize)>,
    pub schedule: Schedule,
    /// What the protocol should do to the data plane.
    pub gates: GateList,
    /// Number of timesteps before the separation suffix.
    pub forward_steps: usize,
    /// `(walker, vertex, t)`: the walker first reaches `vertex` at the start of timestep `t`.
    pub arrivals: Vec<(usize, usize, usize)>,
}

/// Accumulates forward and history (walker-only) timesteps.
struct Builder {
    ops: Vec<Vec<OperatorSpec>>,
    history: Vec<Vec<OperatorSpec>>,
    moving: Vec<BTreeSet<usize>>,
}

impl Builder {
    fn new(steps: usize) -> Self {
        Builder {
            ops: vec![Vec::new(); steps],
            history: vec![Vec::new(); steps],
            moving: vec![BTreeSet::new(); steps],
        }
    }

    /// Operator that belongs to the walker history.
    fn walk(&mut self, t: usize, op: OperatorSpec) {
        self.ops[t].push(op.clone());
        self.history[t].push(op);
    }

    /// Data gate, left out of the history.
    fn gate(&mut self, t: usize, op: OperatorSpec) {
        self.ops[t].push(op);
    }

    /// Forward operator whose walker part is `hist`.
    fn split(&mut self, t: usize, fwd: OperatorSpec, hist: OperatorSpec) {
        self.ops[t].push(fwd);
        self.history[t].push(hist);
    }

    fn shift(&mut self, t: usize, walker: usize) {
        self.moving[t].insert(walker);
    }

    fn timesteps(ops: &[Vec<OperatorSpec>], moving: &[BTreeSet<usize>]) -> Vec<Timestep> {
        ops.iter()
            .zip(moving)
            .map(|(o, m)| Timestep {
                ops: o.clone(),
                shift: if m.is_empty() {
                    ShiftSpec::identity()
                } else {
                    ShiftSpec::flipflop(m.iter().copied().collect())
                },
            })
            .collect()
    }

    fn forward(&self) -> Schedule {
        Schedule {
            timesteps: Self::timesteps(&self.ops, &self.moving),
            terminal: None,
        }
    }

    fn history(&self) -> Schedule {
        Schedule {
            timesteps: Self::timesteps(&self.history, &self.moving),
            terminal: None,
        }
    }

    /// Forward schedule followed by the reverse-separation suffix.
    fn reversed(&self) -> Result<(Schedule, usize)> {
        let mut s = self.forward();
        let n = s.len();
        s.extend(separate_reverse(&self.history())?)?;
        Ok((s, n))
    }
}

/// Reverse-separation suffix: the inverse of the walker history.
pub fn separate_reverse(history: &Schedule) -> Result<Schedule> {
    invert_schedule(history)
}

/// Measurement that separates walker `walker` when its support is `{a, b}` with the coin at the
/// self-loop. Vertex bits where `a` and `b` agree are measured in `Z`, the others in `X`; odd
/// parity of the `X` outcomes triggers `Z` on data qubit `correction`.
pub fn separate_measure(
    layout: &RegisterLayout,
    walker: usize,
    a: usize,
    b: usize,
    correction: usize,
) -> Result<OperatorSpec> {
    layout.check_walker(walker)?;
    for v in [a, b] {
        if v >= layout.num_vertices() {
            return Err(Error::InvalidVertex(v));
        }
    }
    if a == b {
        return Err(Error::Precondition("separation endpoints must differ".into()));
    }
    if correction >= layout.num_data() {
        return Err(Error::InvalidQubitIndex(correction));
    }
    Ok(OperatorSpec::MeasureAndCorrect {
        entries: vec![SeparationMeasurement {
            walker,
            node_a: a,
            node_b: b,
            correction,
        }],
    })
}

fn check_budget(layout_k: usize, g: &NetworkGraph, data: usize) -> Result<()> {
    let bits = layout_k * (g.vertex_bits() + g.coin_bits()) + data;
    if bits > crate::statevec::MAX_TOTAL_BITS {
        return Err(Error::TooManyBits {
            bits,
            max: crate::statevec::MAX_TOTAL_BITS,
        });
    }
    Ok(())
}

fn layout_for(g: &NetworkGraph, k: usize) -> Result<RegisterLayout> {
    let data = (0..g.num_vertices()).map(|v| g.data_qubits(v).len()).sum();
    check_budget(k, g, data)?;
    RegisterLayout::for_network(g, k)
}

fn resolve_all(g: &NetworkGraph, l: &RegisterLayout, qs: &[QubitRef]) -> Result<Vec<usize>> {
    qs.iter().map(|q| q.resolve(g, l)).collect()
}

fn port(g: &NetworkGraph, v: usize, u: usize) -> Result<usize> {
    g.port_to(v, u)
}

/// Gate request compiled for one walker on `path`: the target operator at the end of the path.
fn target_op(g: &NetworkGraph, l: &RegisterLayout, walker: usize, gate: &TargetGate) -> Result<OperatorSpec> {
    let node = gate.node()?;
    let targets = resolve_all(g, l, &gate.targets)?;
    make_coin_controlled_data(g, l, node, None, &targets, gate.unitary.clone(), None, walker)
}

/// Oracle form of a controlled request.
fn oracle_gate(
    g: &NetworkGraph,
    l: &RegisterLayout,
    controls: &[QubitRef],
    pattern: &[bool],
    t: &TargetGate,
) -> Result<OracleGate> {
    Ok(OracleGate::new(
        resolve_all(g, l, controls)?,
        pattern.to_vec(),
        resolve_all(g, l, &t.targets)?,
        t.unitary.clone(),
    ))
}

/// Remote controlled-U from the control node at the start of `path` to the target node at its
/// end.
pub fn schedule_remote_cu(
    g: &NetworkGraph,
    req: &GateRequest,
    path: &PathSpec,
    separation: Separation,
) -> Result<Compiled> {
    compile_path_cu(g, req, path, &[], separation)
}

/// Remote controlled-U that also applies `hop_gates` (controlled by the same qubits) at
/// intermediate nodes of the path as the walker passes.
pub fn schedule_remote_cu_with_hops(
    g: &NetworkGraph,
    req: &GateRequest,
    path: &PathSpec,
    hop_gates: &[TargetGate],
    separation: Separation,
) -> Result<Compiled> {
    compile_path_cu(g, req, path, hop_gates, separation)
}

/// Controlled-U whose controls sit at several nodes along `path`. The walker leaves each control
/// node only if that node's controls match.
pub fn schedule_multi_control(
    g: &NetworkGraph,
    req: &GateRequest,
    path: &PathSpec,
    separation: Separation,
) -> Result<Compiled> {
    compile_path_cu(g, req, path, &[], separation)
}

fn compile_path_cu(
    g: &NetworkGraph,
    req: &GateRequest,
    path: &PathSpec,
    hop_gates: &[TargetGate],
    separation: Separation,
) -> Result<Compiled> {
    req.validate()?;
    let nodes = path.nodes();
    let delta = path.hops();
    let (a, b) = (path.start(), path.end());
    if delta == 0 {
        return Err(Error::InvalidPath("path needs at least one hop".into()));
    }
    if req.target.node()? != b {
        return Err(Error::Precondition(format!(
            "target sits at {}, but the path ends at {}",
            g.label(req.target.node()?),
            g.label(b)
        )));
    }
    // Controls grouped by node, in path order.
    let mut groups: BTreeMap<usize, (Vec<QubitRef>, Vec<bool>)> = BTreeMap::new();
    for (q, &bit) in req.controls.iter().zip(&req.pattern) {
        let pos = path
            .position(q.vertex)
            .ok_or_else(|| Error::Precondition(format!("control {} is not on the path", q.display(g))))?;
        if pos == delta {
            return Err(Error::Precondition(format!(
                "control {} sits at the target node",
                q.display(g)
            )));
        }
        let e = groups.entry(pos).or_default();
        e.0.push(q.clone());
        e.1.push(bit);
    }
    if !groups.contains_key(&0) {
        return Err(Error::Precondition(format!(
            "the path must start at a control node, not {}",
            g.label(a)
        )));
    }
    let mut hops: BTreeMap<usize, Vec<&TargetGate>> = BTreeMap::new();
    for h in hop_gates {
        h.validate()?;
        let pos = path
            .position(h.node()?)
            .filter(|&p| p > 0 && p < delta)
            .ok_or_else(|| {
                Error::Precondition(format!(
                    "hop gate at {} is not an intermediate node",
                    g.label(h.node().unwrap())
                ))
            })?;
        hops.entry(pos).or_default().push(h);
    }
    if separation == Separation::Measure && (req.controls.len() != 1 || !hop_gates.is_empty()) {
        return Err(Error::Precondition(
            "measurement separation needs a single control and no hop gates".into(),
        ));
    }

    let l = layout_for(g, 1)?;
    let mut bld = Builder::new(delta + 1);
    for t in 0..=delta {
        let v = nodes[t];
        let prev = if t > 0 { Some(port(g, v, nodes[t - 1])?) } else { None };
        if let Some(hg) = hops.get(&t) {
            for h in hg {
                bld.gate(t, target_op(g, &l, 0, h)?);
            }
        }
        if t == delta {
            bld.walk(t, make_coin_perm(g, v, prev.unwrap(), SELF_PORT, 0)?);
            bld.gate(t, target_op(g, &l, 0, &req.target)?);
            break;
        }
        let next = port(g, v, nodes[t + 1])?;
        if let Some((qs, pat)) = groups.get(&t) {
            if let Some(p) = prev {
                bld.walk(t, make_coin_perm(g, v, p, SELF_PORT, 0)?);
            }
            let ctrl = resolve_all(g, &l, qs)?;
            bld.walk(
                t,
                make_data_controlled_coin(g, &l, v, &ctrl, pat, CoinAction::swap(SELF_PORT, next), 0)?,
            );
        } else {
            bld.walk(t, make_coin_perm(g, v, prev.unwrap(), next, 0)?);
        }
        bld.shift(t, 0);
    }

    let mut gates = Vec::new();
    for (t, hg) in &hops {
        // A hop gate fires when every control up to that node matched.
        let (cs, ps): (Vec<_>, Vec<_>) = groups
            .range(..*t)
            .flat_map(|(_, (q, p))| q.iter().cloned().zip(p.iter().copied()))
            .unzip();
        for h in hg {
            gates.push(oracle_gate(g, &l, &cs, &ps, h)?);
        }
    }
    gates.push(oracle_gate(g, &l, &req.controls, &req.pattern, &req.target)?);

    let (schedule, forward_steps) = match separation {
        Separation::Reverse => bld.reversed()?,
        Separation::Measure => {
            let mut s = bld.forward();
            let correction = req.controls[0].resolve(g, &l)?;
            s.terminal = Some(separate_measure(&l, 0, a, b, correction)?);
            (s, delta + 1)
        }
    };
    let arrivals = (1..=delta).map(|t| (0, nodes[t], t)).collect();
    Ok(Compiled {
        layout: l,
        walker_inits: vec![(a, SELF_PORT)],
        schedule,
        gates,
        forward_steps,
        arrivals,
    })
}

/// One branch of a multi-path fan-out: the path from the shared control node and the gate at its
/// end.
#[derive(Clone, Debug, PartialEq)]
pub struct PathTarget {
    pub path: PathSpec,
    pub gate: TargetGate,
}

/// Control signal fanned out from one node over several paths, one walker per path. Paths must
/// leave the control node over distinct edges; walkers that arrive early wait in place.
pub fn schedule_multipath(
    g: &NetworkGraph,
    controls: &[QubitRef],
    pattern: &[bool],
    branches: &[PathTarget],
) -> Result<Compiled> {
    let first = branches
        .first()
        .ok_or_else(|| Error::Precondition("multipath needs at least one path".into()))?;
    let a = first.path.start();
    for (j, br) in branches.iter().enumerate() {
        GateRequest {
            controls: controls.to_vec(),
            pattern: pattern.to_vec(),
            target: br.gate.clone(),
        }
        .validate()?;
        if br.path.start() != a {
            return Err(Error::Precondition(format!(
                "path {j} does not start at {}",
                g.label(a)
            )));
        }
        if br.path.hops() == 0 {
            return Err(Error::InvalidPath("path needs at least one hop".into()));
        }
        if br.gate.node()? != br.path.end() {
            return Err(Error::Precondition(format!("target of path {j} is not at its end")));
        }
        if controls.iter().any(|q| q.vertex != a) {
            return Err(Error::Precondition(
                "all controls must sit at the shared start node".into(),
            ));
        }
    }
    let k = branches.len();
    let l = layout_for(g, k)?;
    let ctrl = resolve_all(g, &l, controls)?;
    let first_hops: Vec<usize> = branches.iter().map(|b| b.path.nodes()[1]).collect();
    let max_delta = branches.iter().map(|b| b.path.hops()).max().unwrap();
    let mut bld = Builder::new(max_delta + 1);

    let c0 = port(g, a, first_hops[0])?;
    bld.walk(
        0,
        make_data_controlled_coin(g, &l, a, &ctrl, pattern, CoinAction::swap(SELF_PORT, c0), 0)?,
    );
    if k > 1 {
        let walkers: Vec<usize> = (0..k).collect();
        bld.walk(0, make_fanout_op(g, &l, a, c0, &first_hops, &walkers)?);
    }
    let mut arrivals = Vec::new();
    for (j, br) in branches.iter().enumerate() {
        let nodes = br.path.nodes();
        let delta = br.path.hops();
        bld.shift(0, j);
        for t in 1..=delta {
            let v = nodes[t];
            let prev = port(g, v, nodes[t - 1])?;
            arrivals.push((j, v, t));
            if t == delta {
                bld.walk(t, make_coin_perm(g, v, prev, SELF_PORT, j)?);
                bld.gate(t, target_op(g, &l, j, &br.gate)?);
            } else {
                bld.walk(t, make_coin_perm(g, v, prev, port(g, v, nodes[t + 1])?, j)?);
                bld.shift(t, j);
            }
        }
    }
    let gates = branches
        .iter()
        .map(|br| oracle_gate(g, &l, controls, pattern, &br.gate))
        .collect::<Result<Vec<_>>>()?;
    let (schedule, forward_steps) = bld.reversed()?;
    Ok(Compiled {
        layout: l,
        walker_inits: vec![(a, SELF_PORT); k],
        schedule,
        gates,
        forward_steps,
        arrivals,
    })
}

/// Number of walkers tree propagation needs: one, plus one per extra child at every node.
pub fn tree_walkers(tree: &TreeSpec) -> usize {
    1 + tree
        .nodes()
        .iter()
        .map(|&v| tree.children(v).len().saturating_sub(1))
        .sum::<usize>()
}

/// Control signal propagated down a rooted tree. A node with one child passes the walker on, a
/// node with several children fans out to helper walkers waiting there, and leaves keep the
/// walker. Gates fire when the walker reaches their node.
pub fn schedule_tree(
    g: &NetworkGraph,
    tree: &TreeSpec,
    controls: &[QubitRef],
    pattern: &[bool],
    targets: &[TargetGate],
) -> Result<Compiled> {
    let root = tree.root();
    if tree.children(root).is_empty() {
        return Err(Error::InvalidTree("root has no children".into()));
    }
    if controls.iter().any(|q| q.vertex != root) {
        return Err(Error::Precondition("all controls must sit at the tree root".into()));
    }
    let mut at_node: BTreeMap<usize, Vec<&TargetGate>> = BTreeMap::new();
    for t in targets {
        GateRequest {
            controls: controls.to_vec(),
            pattern: pattern.to_vec(),
            target: t.clone(),
        }
        .validate()?;
        let v = t.node()?;
        if !tree.contains(v) || v == root {
            return Err(Error::Precondition(format!(
                "target node {} is not a non-root tree node",
                g.label(v)
            )));
        }
        at_node.entry(v).or_default().push(t);
    }

    let k = tree_walkers(tree);
    let l = layout_for(g, k)?;
    let ctrl = resolve_all(g, &l, controls)?;
    let height = tree.height();
    let mut bld = Builder::new(height + 1);

    // Walker assignment: the first child inherits the parent's walker, later children get
    // helpers parked at the parent from the start.
    let mut walker_of: BTreeMap<usize, usize> = BTreeMap::from([(root, 0)]);
    let mut inits = vec![(root, SELF_PORT)];
    for v in tree.nodes() {
        for (i, &u) in tree.children(v).iter().enumerate() {
            if i == 0 {
                walker_of.insert(u, walker_of[&v]);
            } else {
                walker_of.insert(u, inits.len());
                inits.push((v, SELF_PORT));
            }
        }
    }

    let mut arrivals = Vec::new();
    for v in tree.nodes() {
        let t = tree.depth(v).unwrap();
        let w = walker_of[&v];
        let children = tree.children(v);
        let incoming = match tree.parent(v) {
            Some(p) => port(g, v, p)?,
            None => {
                // The control enters at the root: swap the self-loop onto the first child's edge.
                let c0 = port(g, v, children[0])?;
                bld.walk(
                    t,
                    make_data_controlled_coin(g, &l, v, &ctrl, pattern, CoinAction::swap(SELF_PORT, c0), w)?,
                );
                c0
            }
        };
        if v != root {
            arrivals.push((w, v, t));
        }
        let gates = at_node.get(&v).cloned().unwrap_or_default();
        if children.is_empty() {
            bld.walk(t, make_coin_perm(g, v, incoming, SELF_PORT, w)?);
            for tg in gates {
                bld.gate(t, target_op(g, &l, w, tg)?);
            }
            continue;
        }
        for tg in gates {
            bld.gate(t, target_op(g, &l, w, tg)?);
        }
        if children.len() == 1 {
            // At the root the entangler already put the walker on the child's edge.
            if v != root {
                bld.walk(t, make_coin_perm(g, v, incoming, port(g, v, children[0])?, w)?);
            }
        } else {
            let walkers: Vec<usize> = children.iter().map(|u| walker_of[u]).collect();
            bld.walk(t, make_fanout_op(g, &l, v, incoming, children, &walkers)?);
        }
        for u in children {
            bld.shift(t, walker_of[u]);
        }
    }
    let gates = targets
        .iter()
        .map(|t| oracle_gate(g, &l, controls, pattern, t))
        .collect::<Result<Vec<_>>>()?;
    let (schedule, forward_steps) = bld.reversed()?;
    Ok(Compiled {
        layout: l,
        walker_inits: inits,
        schedule,
        gates,
        forward_steps,
        arrivals,
    })
}

/// GHZ distribution along one path: `qubits[i]` are the qubits at `path.nodes()[i]` to include.
#[derive(Clone, Debug, PartialEq)]
pub struct GhzPath {
    pub path: PathSpec,
    pub qubits: Vec<Vec<QubitRef>>,
}

/// GHZ states over the qubits listed along each path, one walker per path. The qubits at the
/// start node are prepared locally; each node the walker passes flips its qubits in the branch
/// that carries the walker.
pub fn schedule_ghz_path(g: &NetworkGraph, paths: &[GhzPath]) -> Result<Compiled> {
    if paths.is_empty() {
        return Err(Error::Precondition("no GHZ path given".into()));
    }
    let mut seen = BTreeSet::new();
    for (j, p) in paths.iter().enumerate() {
        if p.qubits.len() != p.path.nodes().len() {
            return Err(Error::Precondition(format!(
                "path {j} lists qubit sets for {} nodes but has {}",
                p.qubits.len(),
                p.path.nodes().len()
            )));
        }
        if p.qubits[0].is_empty() {
            return Err(Error::Precondition(format!("path {j} has no qubit at its start node")));
        }
        for (i, qs) in p.qubits.iter().enumerate() {
            for q in qs {
                if q.vertex != p.path.nodes()[i] {
                    return Err(Error::Precondition(format!(
                        "qubit {} does not sit at {}",
                        q.display(g),
                        g.label(p.path.nodes()[i])
                    )));
                }
                if !seen.insert(q.clone()) {
                    return Err(Error::OverlappingQubits(q.display(g)));
                }
            }
        }
    }
    let k = paths.len();
    let l = layout_for(g, k)?;
    let max_delta = paths.iter().map(|p| p.path.hops()).max().unwrap();
    let mut bld = Builder::new(max_delta + 1);
    let mut gates = Vec::new();
    let mut arrivals = Vec::new();
    for (j, p) in paths.iter().enumerate() {
        let nodes = p.path.nodes();
        let delta = p.path.hops();
        let local = resolve_all(g, &l, &p.qubits[0])?;
        let a = nodes[0];
        bld.gate(
            0,
            make_coin_controlled_data(g, &l, a, None, &local, ghz_prep(local.len()), None, j)?,
        );
        gates.push(OracleGate::local(vec![local[0]], hadamard()));
        for &q in &local[1..] {
            gates.push(OracleGate::new(vec![local[0]], vec![true], vec![q], pauli_x()));
        }
        if delta == 0 {
            continue;
        }
        let c0 = port(g, a, nodes[1])?;
        bld.walk(
            0,
            make_data_controlled_coin(g, &l, a, &local[..1], &[true], CoinAction::swap(SELF_PORT, c0), j)?,
        );
        bld.shift(0, j);
        for t in 1..=delta {
            let v = nodes[t];
            let prev = port(g, v, nodes[t - 1])?;
            let next = if t == delta {
                SELF_PORT
            } else {
                port(g, v, nodes[t + 1])?
            };
            arrivals.push((j, v, t));
            let perm = make_coin_perm(g, v, prev, next, j)?;
            let qs = resolve_all(g, &l, &p.qubits[t])?;
            if qs.is_empty() {
                bld.walk(t, perm);
            } else {
                let flip = make_coin_controlled_data(
                    g,
                    &l,
                    v,
                    None,
                    &qs,
                    x_all(qs.len()),
                    Some(CoinAction::swap(prev, next)),
                    j,
                )?;
                bld.split(t, flip, perm);
                for &q in &qs {
                    gates.push(OracleGate::new(vec![local[0]], vec![true], vec![q], pauli_x()));
                }
            }
            if t < delta {
                bld.shift(t, j);
            }
        }
    }
    let (schedule, forward_steps) = bld.reversed()?;
    Ok(Compiled {
        layout: l,
        walker_inits: paths.iter().map(|p| (p.path.start(), SELF_PORT)).collect(),
        schedule,
        gates,
        forward_steps,
        arrivals,
    })
}

/// Data qubits `(q_u, q_v)` that receive the Bell pair of edge `(u, v)`.
pub type EdgeCoupling = (QubitRef, QubitRef);

/// Link-level entanglement: one walker per edge `{u, v}` with `u < v`, started at `|u, c_u⟩`,
/// coined into `(|u, c_u⟩ + |u, c_uv⟩)/√2` and shifted once. With `couplings` (one per edge in
/// [`NetworkGraph::proper_edges`] order) each walker's superposition is transferred to a Bell
/// pair on the edge's data qubits and the walkers are then measured out.
pub fn schedule_linklevel(g: &NetworkGraph, couplings: Option<&[EdgeCoupling]>) -> Result<Compiled> {
    let edges = g.proper_edges();
    if edges.is_empty() {
        return Err(Error::Precondition("graph has no edges".into()));
    }
    if let Some(c) = couplings {
        if c.len() != edges.len() {
            return Err(Error::Precondition(format!(
                "{} couplings for {} edges",
                c.len(),
                edges.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for ((qu, qv), &(u, v)) in c.iter().zip(&edges) {
            if qu.vertex != u || qv.vertex != v {
                return Err(Error::Precondition(format!(
                    "coupling {}/{} does not match edge {}-{}",
                    qu.display(g),
                    qv.display(g),
                    g.label(u),
                    g.label(v)
                )));
            }
            for q in [qu, qv] {
                if !seen.insert(q.clone()) {
                    return Err(Error::OverlappingQubits(q.display(g)));
                }
            }
        }
    }
    let k = edges.len();
    let l = layout_for(g, k)?;
    let steps = if couplings.is_some() { 2 } else { 1 };
    let mut bld = Builder::new(steps);
    let mut gates = Vec::new();
    let mut entries = Vec::new();
    let mut arrivals = Vec::new();
    for (j, &(u, v)) in edges.iter().enumerate() {
        let cu = port(g, u, v)?;
        let cv = port(g, v, u)?;
        bld.walk(
            0,
            make_coin_block(
                g,
                vec![CoinBlockEntry {
                    vertex: u,
                    coins: vec![SELF_PORT, cu],
                    matrix: hadamard(),
                }],
                j,
            )?,
        );
        bld.shift(0, j);
        arrivals.push((j, v, 1));
        if let Some(c) = couplings {
            let qu = c[j].0.resolve(g, &l)?;
            let qv = c[j].1.resolve(g, &l)?;
            bld.gate(
                0,
                make_coin_controlled_data(g, &l, u, Some(vec![cu]), &[qu], pauli_x(), None, j)?,
            );
            bld.split(
                1,
                make_coin_controlled_data(
                    g,
                    &l,
                    v,
                    None,
                    &[qv],
                    pauli_x(),
                    Some(CoinAction::swap(cv, SELF_PORT)),
                    j,
                )?,
                make_coin_perm(g, v, cv, SELF_PORT, j)?,
            );
            gates.push(OracleGate::local(vec![qu], hadamard()));
            gates.push(OracleGate::new(vec![qu], vec![true], vec![qv], pauli_x()));
            entries.push(SeparationMeasurement {
                walker: j,
                node_a: u,
                node_b: v,
                correction: qu,
            });
        }
    }
    let mut schedule = bld.forward();
    if couplings.is_some() {
        schedule.terminal = Some(OperatorSpec::MeasureAndCorrect { entries });
    }
    Ok(Compiled {
        layout: l,
        walker_inits: edges.iter().map(|&(u, _)| (u, SELF_PORT)).collect(),
        schedule,
        gates,
        forward_steps: steps,
        arrivals,
    })
}
