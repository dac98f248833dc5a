use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt;
use std::path::{Path, PathBuf};

use super::script::{parse_script, Command, GateSpec, InitValue, ParseError, Script, StepCommand};
use crate::error::Error;
use crate::linalg::{named_gate, Matrix, ONE, ZERO};
use crate::netgraph::{load_network, NetworkGraph, PathSpec, TreeSpec, SELF_PORT};
use crate::oracle::{compare, oracle_apply, GateList, OracleGate};
use crate::protocols::{
    run_compiled, schedule_ghz_path, schedule_linklevel, schedule_multi_control, schedule_multipath,
    schedule_remote_cu_with_hops, schedule_tree, separate_measure, Compiled, GateRequest, GhzPath, PathTarget,
    QubitRef, TargetGate,
};
use crate::statevec::{init_state, Basis, MeasureMode, RegisterLayout, StateVector};
use crate::walkops::{
    make_coin_block, make_coin_perm, make_data_controlled_coin, make_flipflop_shift, make_walk_interaction, CoinAction,
    CoinBlockEntry, OperatorSpec, Schedule, ShiftKind, ShiftSpec,
};

/// Failure of a CLI invocation, with the process exit code it maps to.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Io(String),
    Parse(ParseError),
    /// A reference that does not resolve against the network, or a malformed argument.
    Bind {
        line: usize,
        message: String,
    },
    /// A well-formed request that cannot run (violated protocol precondition).
    Precondition {
        line: usize,
        message: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) | CliError::Bind { .. } => 2,
            CliError::Precondition { .. } => 3,
        }
    }

    fn at(line: usize, e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Precondition(_)
            | Error::NotNormalized(_)
            | Error::LocalityViolation { .. }
            | Error::UninitializedHelper(_)
            | Error::OverlappingQubits(_)
            | Error::LayoutMismatch
            | Error::TooManyBits { .. } => CliError::Precondition { line, message },
            _ => CliError::Bind { line, message },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "{m}"),
            CliError::Parse(e) => write!(f, "parse error: {e}"),
            CliError::Bind { line, message } => write!(f, "line {line}: {message}"),
            CliError::Precondition { line, message } => write!(f, "line {line}: precondition failed: {message}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    pub mode: MeasureMode,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 0,
            mode: MeasureMode::Sample(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommandReport {
    pub line: usize,
    pub command: String,
    pub steps: usize,
    pub walkers: usize,
    pub fidelity: f64,
    pub walker_purity: f64,
    pub locality_ok: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasurementReport {
    pub line: usize,
    pub branch: usize,
    pub qubits: Vec<String>,
    pub bases: Vec<Basis>,
    pub outcomes: Vec<u8>,
    pub probability: f64,
    pub corrections: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MessageReport {
    pub line: usize,
    pub branch: usize,
    pub from: String,
    pub to: String,
    pub bits: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportReport {
    pub line: usize,
    pub t: usize,
    pub walkers: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchReport {
    pub probability: f64,
    pub fidelity: f64,
    pub walker_purity: f64,
    pub norm: f64,
}

/// Machine-readable result of a script run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub schema: u32,
    pub steps: usize,
    pub final_norm: f64,
    pub fidelity_vs_oracle: f64,
    pub walker_purity: f64,
    pub passed: bool,
    pub commands: Vec<CommandReport>,
    pub measurements: Vec<MeasurementReport>,
    pub classical_messages: Vec<MessageReport>,
    pub supports: Vec<SupportReport>,
    pub branches: Vec<BranchReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything one run produces.
#[derive(Clone, Debug)]
pub struct Execution {
    pub report: Report,
    /// Compiled schedule of each protocol command, with its script line.
    pub schedules: Vec<(usize, Schedule)>,
    /// Final data-plane state of each branch.
    pub final_states: Vec<StateVector>,
}

/// Executable unit bound against the network.
enum Unit {
    Protocol {
        name: &'static str,
        compiled: Box<Compiled>,
    },
    Oracle(OracleGate),
}

struct Bound {
    graph: NetworkGraph,
    init: Vec<(usize, InitValue)>,
    units: Vec<(usize, Unit)>,
}

fn matrix(g: &GateSpec) -> Result<Matrix, Error> {
    match g {
        GateSpec::Named(n) => named_gate(n).ok_or_else(|| Error::NotUnitary(format!("unknown gate {n}"))),
        GateSpec::Columns(cols) => {
            let n = cols.len();
            let data = (0..n * n).map(|i| cols[i % n][i / n]).collect();
            let m = Matrix::from_row_major(n, data);
            m.ensure_unitary("custom gate")?;
            Ok(m)
        }
    }
}

fn pattern(string: &Option<String>, n: usize) -> Result<Vec<bool>, Error> {
    match string {
        None => Ok(vec![true; n]),
        Some(s) => {
            if s.len() != n {
                return Err(Error::PatternLength {
                    expected: n,
                    got: s.len(),
                });
            }
            Ok(s.chars().map(|c| c == '1').collect())
        }
    }
}

/// Path from labels, naming the first non-adjacent hop on failure.
fn path(g: &NetworkGraph, labels: &[String]) -> Result<PathSpec, Error> {
    let nodes = labels.iter().map(|l| g.vertex(l)).collect::<Result<Vec<_>, _>>()?;
    for w in nodes.windows(2) {
        if !g.is_adjacent(w[0], w[1]) {
            return Err(Error::InvalidPath(format!(
                "hop {}-{} is not an edge",
                g.label(w[0]),
                g.label(w[1])
            )));
        }
    }
    PathSpec::new(g, nodes)
}

fn qubits(g: &NetworkGraph, names: &[String]) -> Result<Vec<QubitRef>, Error> {
    names.iter().map(|q| QubitRef::parse(g, q)).collect()
}

/// Coin argument: a port number, `self`, or the label of a neighbour.
fn coin(g: &NetworkGraph, v: usize, text: &str) -> Result<usize, Error> {
    if text == "self" {
        return Ok(SELF_PORT);
    }
    if let Ok(c) = text.parse::<usize>() {
        g.check_coin(v, c)?;
        return Ok(c);
    }
    g.port_to(v, g.vertex(text)?)
}

fn data_index(g: &NetworkGraph, l: &RegisterLayout, q: &str) -> Result<usize, Error> {
    let r = QubitRef::parse(g, q)?;
    l.data_index(r.vertex, &r.name)
        .ok_or_else(|| Error::UnknownQubit(q.to_string()))
}

/// Low-level step block under construction.
struct StepBlock {
    start_line: usize,
    walkers: Vec<(usize, usize)>,
    schedule: Schedule,
    pending: Vec<OperatorSpec>,
    layout: RegisterLayout,
}

impl StepBlock {
    fn finish(mut self) -> Compiled {
        if !self.pending.is_empty() {
            self.schedule
                .push(std::mem::take(&mut self.pending), ShiftSpec::identity());
        }
        let steps = self.schedule.len();
        Compiled {
            layout: self.layout,
            walker_inits: self.walkers,
            schedule: self.schedule,
            gates: Vec::new(),
            forward_steps: steps,
            arrivals: Vec::new(),
        }
    }
}

fn bind(script: &Script, graph: NetworkGraph) -> Result<Bound, CliError> {
    let g = &graph;
    let mut budget: Option<usize> = None;
    let mut init = Vec::new();
    let mut units: Vec<(usize, Unit)> = Vec::new();
    let mut placements: Vec<(usize, usize, usize)> = Vec::new();
    let mut block: Option<StepBlock> = None;

    let flush = |block: &mut Option<StepBlock>, units: &mut Vec<(usize, Unit)>| {
        if let Some(b) = block.take() {
            let line = b.start_line;
            units.push((
                line,
                Unit::Protocol {
                    name: "step",
                    compiled: Box::new(b.finish()),
                },
            ));
        }
    };

    for l in &script.lines {
        let line = l.line;
        let at = |e: Error| CliError::at(line, e);
        if !matches!(l.command, Command::Step(_)) {
            flush(&mut block, &mut units);
        }
        let compiled: Option<(&'static str, Compiled)> = match &l.command {
            Command::Network(_) => None,
            Command::Walkers(k) => {
                budget = Some(*k);
                None
            }
            Command::Init(items) => {
                for (q, v) in items {
                    let r = QubitRef::parse(g, q).map_err(at)?;
                    let idx = RegisterLayout::for_network(g, 0)
                        .map_err(at)?
                        .data_index(r.vertex, &r.name)
                        .expect("declared qubit");
                    init.retain(|(i, _)| *i != idx);
                    init.push((idx, v.clone()));
                }
                None
            }
            Command::Oracle {
                controls,
                string,
                targets,
                gate,
            } => {
                let l0 = RegisterLayout::for_network(g, 0).map_err(at)?;
                let cs = controls
                    .iter()
                    .map(|q| data_index(g, &l0, q))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(at)?;
                let ts = targets
                    .iter()
                    .map(|q| data_index(g, &l0, q))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(at)?;
                let p = pattern(string, cs.len()).map_err(at)?;
                units.push((
                    line,
                    Unit::Oracle(OracleGate::new(cs, p, ts, matrix(gate).map_err(at)?)),
                ));
                None
            }
            Command::RemoteCu {
                control,
                target,
                path: p,
                gate,
                separation,
                hops,
            } => {
                let req = GateRequest::cu(
                    QubitRef::parse(g, control).map_err(at)?,
                    QubitRef::parse(g, target).map_err(at)?,
                    matrix(gate).map_err(at)?,
                );
                let hop_gates = hops
                    .iter()
                    .map(|(q, hg)| Ok(TargetGate::new(vec![QubitRef::parse(g, q)?], matrix(hg)?)))
                    .collect::<Result<Vec<_>, Error>>()
                    .map_err(at)?;
                let p = path(g, p).map_err(at)?;
                Some((
                    "remote_cu",
                    schedule_remote_cu_with_hops(g, &req, &p, &hop_gates, *separation).map_err(at)?,
                ))
            }
            Command::RemoteMcu {
                controls,
                string,
                targets,
                path: p,
                gate,
                separation,
            } => {
                let req = GateRequest {
                    controls: qubits(g, controls).map_err(at)?,
                    pattern: pattern(&Some(string.clone()), controls.len()).map_err(at)?,
                    target: TargetGate::new(qubits(g, targets).map_err(at)?, matrix(gate).map_err(at)?),
                };
                let p = path(g, p).map_err(at)?;
                Some((
                    "remote_mcu",
                    schedule_multi_control(g, &req, &p, *separation).map_err(at)?,
                ))
            }
            Command::Multipath {
                controls,
                string,
                branches,
            } => {
                let cs = qubits(g, controls).map_err(at)?;
                let p = pattern(string, cs.len()).map_err(at)?;
                let brs = branches
                    .iter()
                    .map(|b| {
                        Ok(PathTarget {
                            path: path(g, &b.path)?,
                            gate: TargetGate::new(vec![QubitRef::parse(g, &b.target)?], matrix(&b.gate)?),
                        })
                    })
                    .collect::<Result<Vec<_>, Error>>()
                    .map_err(at)?;
                Some(("multipath", schedule_multipath(g, &cs, &p, &brs).map_err(at)?))
            }
            Command::Tree {
                controls,
                string,
                root,
                edges,
                targets,
            } => {
                let cs = qubits(g, controls).map_err(at)?;
                let p = pattern(string, cs.len()).map_err(at)?;
                let edge_refs: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
                let tree = TreeSpec::from_labels(g, root, &edge_refs).map_err(at)?;
                let ts = targets
                    .iter()
                    .map(|(q, gs)| Ok(TargetGate::new(qubits(g, q)?, matrix(gs)?)))
                    .collect::<Result<Vec<_>, Error>>()
                    .map_err(at)?;
                Some(("tree", schedule_tree(g, &tree, &cs, &p, &ts).map_err(at)?))
            }
            Command::GhzPath { paths } => {
                let ps = paths
                    .iter()
                    .map(|(p, qs)| {
                        let p = path(g, p)?;
                        let refs = qubits(g, qs)?;
                        let mut per_node = vec![Vec::new(); p.nodes().len()];
                        for r in refs {
                            let i = p.position(r.vertex).ok_or_else(|| {
                                Error::Precondition(format!("qubit {} is not on its path", r.display(g)))
                            })?;
                            per_node[i].push(r);
                        }
                        Ok(GhzPath {
                            path: p,
                            qubits: per_node,
                        })
                    })
                    .collect::<Result<Vec<_>, Error>>()
                    .map_err(at)?;
                Some(("ghz_path", schedule_ghz_path(g, &ps).map_err(at)?))
            }
            Command::Linklevel { pairs } => {
                let couplings = match pairs {
                    None => None,
                    Some(ps) => Some(
                        ps.iter()
                            .map(|(a, b)| Ok((QubitRef::parse(g, a)?, QubitRef::parse(g, b)?)))
                            .collect::<Result<Vec<_>, Error>>()
                            .map_err(at)?,
                    ),
                };
                Some(("linklevel", schedule_linklevel(g, couplings.as_deref()).map_err(at)?))
            }
            Command::Walker { walker, node, coin: c } => {
                let v = g.vertex(node).map_err(at)?;
                let c = match c {
                    Some(c) => coin(g, v, c).map_err(at)?,
                    None => SELF_PORT,
                };
                placements.retain(|p| p.0 != *walker);
                placements.push((*walker, v, c));
                None
            }
            Command::Step(step) => {
                if block.is_none() {
                    let k = budget.ok_or_else(|| CliError::Bind {
                        line,
                        message: "low-level steps need a `walkers` declaration".into(),
                    })?;
                    let layout = RegisterLayout::for_network(g, k).map_err(at)?;
                    let mut walkers = vec![(0, SELF_PORT); k];
                    for &(j, v, c) in &placements {
                        if j >= k {
                            return Err(at(Error::InvalidWalker(j)));
                        }
                        walkers[j] = (v, c);
                    }
                    block = Some(StepBlock {
                        start_line: line,
                        walkers,
                        schedule: Schedule::new(),
                        pending: Vec::new(),
                        layout,
                    });
                }
                let b = block.as_mut().unwrap();
                if b.schedule.terminal.is_some() {
                    return Err(at(Error::Precondition("no step may follow a measurement".into())));
                }
                bind_step(g, b, step).map_err(at)?;
                None
            }
        };
        if let Some((name, c)) = compiled {
            if let Some(k) = budget {
                if c.layout.walkers() > k {
                    return Err(at(Error::WalkerBudget {
                        needed: c.layout.walkers(),
                        available: k,
                    }));
                }
            }
            units.push((
                line,
                Unit::Protocol {
                    name,
                    compiled: Box::new(c),
                },
            ));
        }
    }
    flush(&mut block, &mut units);
    Ok(Bound { graph, init, units })
}

fn bind_step(g: &NetworkGraph, b: &mut StepBlock, step: &StepCommand) -> Result<(), Error> {
    let l = &b.layout;
    let op = match step {
        StepCommand::CoinPerm { walker, node, c1, c2 } => {
            l.check_walker(*walker)?;
            let v = g.vertex(node)?;
            make_coin_perm(g, v, coin(g, v, c1)?, coin(g, v, c2)?, *walker)?
        }
        StepCommand::CoinBlock {
            walker,
            node,
            coins,
            gate,
        } => {
            l.check_walker(*walker)?;
            let v = g.vertex(node)?;
            let coins = coins.iter().map(|c| coin(g, v, c)).collect::<Result<Vec<_>, _>>()?;
            make_coin_block(
                g,
                vec![CoinBlockEntry {
                    vertex: v,
                    coins,
                    matrix: matrix(gate)?,
                }],
                *walker,
            )?
        }
        StepCommand::DataCtrl {
            walker,
            node,
            controls,
            string,
            c1,
            c2,
        } => {
            let v = g.vertex(node)?;
            let cs = controls
                .iter()
                .map(|q| data_index(g, l, q))
                .collect::<Result<Vec<_>, _>>()?;
            let p = pattern(&Some(string.clone()), cs.len())?;
            make_data_controlled_coin(
                g,
                l,
                v,
                &cs,
                &p,
                CoinAction::swap(coin(g, v, c1)?, coin(g, v, c2)?),
                *walker,
            )?
        }
        StepCommand::Interact {
            node,
            control,
            coin: cc,
            target,
            c1,
            c2,
        } => {
            let v = g.vertex(node)?;
            make_walk_interaction(
                g,
                l,
                v,
                coin(g, v, cc)?,
                CoinAction::swap(coin(g, v, c1)?, coin(g, v, c2)?),
                *control,
                *target,
            )?
        }
        StepCommand::Shift { kind, walkers } => {
            let ws: Vec<usize> = walkers.clone().unwrap_or_else(|| (0..l.walkers()).collect());
            let shift = match kind {
                ShiftKind::Flipflop => {
                    make_flipflop_shift(l, &ws)?;
                    ShiftSpec::flipflop(ws)
                }
                ShiftKind::Identity => ShiftSpec::identity(),
            };
            b.schedule.push(std::mem::take(&mut b.pending), shift);
            return Ok(());
        }
        StepCommand::Measure {
            walker,
            a,
            b: bb,
            correct,
        } => {
            if !b.pending.is_empty() {
                b.schedule.push(std::mem::take(&mut b.pending), ShiftSpec::identity());
            }
            let m = separate_measure(l, *walker, g.vertex(a)?, g.vertex(bb)?, data_index(g, l, correct)?)?;
            b.schedule.terminal = Some(m);
            return Ok(());
        }
    };
    b.pending.push(op);
    Ok(())
}

fn initial_data(bound: &Bound, rng: &mut ChaCha8Rng) -> Result<StateVector, Error> {
    let l = RegisterLayout::for_network(&bound.graph, 0)?.data_plane();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut inits = Vec::new();
    for (idx, v) in &bound.init {
        let amps = match v {
            InitValue::Zero => [ONE, ZERO],
            InitValue::One => [ZERO, ONE],
            InitValue::Plus => [Complex64::new(h, 0.0), Complex64::new(h, 0.0)],
            InitValue::Minus => [Complex64::new(h, 0.0), Complex64::new(-h, 0.0)],
            InitValue::Amplitudes(a) => *a,
            InitValue::Random => {
                // Uniform on the Bloch sphere.
                let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
                let phi: f64 = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                let theta = z.acos();
                [
                    Complex64::new((theta / 2.0).cos(), 0.0),
                    Complex64::from_polar((theta / 2.0).sin(), phi),
                ]
            }
        };
        inits.push((*idx, amps));
    }
    init_state(&l, &[], &inits)
}

fn qubit_label(g: &NetworkGraph, l: &RegisterLayout, q: usize) -> String {
    let wb = l.walker_bits();
    if q < l.walkers() * wb {
        let (j, r) = (q / wb, q % wb);
        if r < l.vertex_bits() {
            format!("w{j}.v{r}")
        } else {
            format!("w{j}.c{}", r - l.vertex_bits())
        }
    } else {
        let d = &l.data_qubits()[q - l.walkers() * wb];
        format!("{}.{}", g.label(d.vertex), d.name)
    }
}

struct Live {
    probability: f64,
    data: StateVector,
    oracle: StateVector,
    fidelity: f64,
    walker_purity: f64,
    norm: f64,
}

/// Binds and runs a parsed script against `graph`.
pub fn execute(script: &Script, graph: NetworkGraph, opts: RunOptions) -> Result<Execution, CliError> {
    let bound = bind(script, graph)?;
    let g = &bound.graph;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start = initial_data(&bound, &mut rng).map_err(|e| CliError::at(0, e))?;
    let mut live = vec![Live {
        probability: 1.0,
        data: start.clone(),
        oracle: start,
        fidelity: 1.0,
        walker_purity: 1.0,
        norm: 1.0,
    }];
    let mut report = Report {
        schema: 1,
        steps: 0,
        final_norm: 1.0,
        fidelity_vs_oracle: 1.0,
        walker_purity: 1.0,
        passed: true,
        commands: Vec::new(),
        measurements: Vec::new(),
        classical_messages: Vec::new(),
        supports: Vec::new(),
        branches: Vec::new(),
    };
    let mut schedules = Vec::new();
    let mut protocol_index = 0u64;
    for (line, unit) in &bound.units {
        let line = *line;
        let (name, compiled) = match unit {
            Unit::Oracle(gate) => {
                for b in &mut live {
                    b.oracle =
                        oracle_apply(&b.oracle, std::slice::from_ref(gate)).map_err(|e| CliError::at(line, e))?;
                }
                continue;
            }
            Unit::Protocol { name, compiled } => (*name, compiled),
        };
        schedules.push((line, compiled.schedule.clone()));
        let mode = match opts.mode {
            MeasureMode::Branch => MeasureMode::Branch,
            MeasureMode::Sample(_) => MeasureMode::Sample(opts.seed.wrapping_add(protocol_index)),
        };
        protocol_index += 1;
        let gates: &GateList = &compiled.gates;
        let mut next = Vec::new();
        let mut cmd = CommandReport {
            line,
            command: name.to_string(),
            steps: compiled.schedule.len(),
            walkers: compiled.layout.walkers(),
            fidelity: 1.0,
            walker_purity: 1.0,
            locality_ok: true,
            passed: true,
        };
        for (bi, b) in live.iter().enumerate() {
            let oracle = oracle_apply(&b.oracle, gates).map_err(|e| CliError::at(line, e))?;
            let out = run_compiled(compiled, &b.data, mode).map_err(|e| CliError::at(line, e))?;
            cmd.locality_ok &= out.trace.locality_ok();
            if bi == 0 {
                for (t, sup) in out.trace.supports.iter().enumerate() {
                    report.supports.push(SupportReport {
                        line,
                        t,
                        walkers: sup
                            .iter()
                            .map(|s| s.iter().map(|&v| g.label(v).to_string()).collect())
                            .collect(),
                    });
                }
            }
            for br in out.branches {
                let branch_id = next.len();
                if let Some(rec) = &br.record {
                    report.measurements.push(MeasurementReport {
                        line,
                        branch: branch_id,
                        qubits: rec
                            .qubits
                            .iter()
                            .map(|&q| qubit_label(g, &compiled.layout, q))
                            .collect(),
                        bases: rec.bases.clone(),
                        outcomes: rec.outcomes.clone(),
                        probability: rec.probability,
                        corrections: br
                            .corrections
                            .iter()
                            .map(|&q| {
                                let d = &compiled.layout.data_qubits()[q];
                                format!("{}.{}", g.label(d.vertex), d.name)
                            })
                            .collect(),
                    });
                }
                for m in &br.messages {
                    report.classical_messages.push(MessageReport {
                        line,
                        branch: branch_id,
                        from: g.label(m.from).to_string(),
                        to: g.label(m.to).to_string(),
                        bits: m.bits.clone(),
                    });
                }
                let cmp = compare(&br.state, &oracle).map_err(|e| CliError::at(line, e))?;
                cmd.fidelity = cmd.fidelity.min(cmp.fidelity);
                cmd.walker_purity = cmd.walker_purity.min(cmp.walker_purity);
                let norm = br.state.norm();
                let data = if cmp.walker_purity >= crate::oracle::PASS_THRESHOLD {
                    br.state.data_factor().map_err(|e| CliError::at(line, e))?
                } else {
                    // Keep the run going on the oracle state; the failure is already recorded.
                    oracle.clone()
                };
                next.push(Live {
                    probability: b.probability * br.probability,
                    data,
                    oracle: oracle.clone(),
                    fidelity: b.fidelity.min(cmp.fidelity),
                    walker_purity: b.walker_purity.min(cmp.walker_purity),
                    norm,
                });
            }
        }
        cmd.passed = cmd.locality_ok
            && cmd.fidelity >= crate::oracle::PASS_THRESHOLD
            && cmd.walker_purity >= crate::oracle::PASS_THRESHOLD;
        report.steps += cmd.steps;
        report.passed &= cmd.passed;
        report.commands.push(cmd);
        live = next;
    }
    // Oracle lines after the last protocol are checked against the final data.
    for b in &mut live {
        let f = crate::statevec::fidelity(&b.data, &b.oracle).map_err(|e| CliError::at(0, e))?;
        b.fidelity = b.fidelity.min(f);
    }
    report.final_norm = live[0].norm;
    report.fidelity_vs_oracle = live.iter().map(|b| b.fidelity).fold(1.0, f64::min);
    report.walker_purity = live.iter().map(|b| b.walker_purity).fold(1.0, f64::min);
    report.passed &= report.fidelity_vs_oracle >= crate::oracle::PASS_THRESHOLD;
    report.branches = live
        .iter()
        .map(|b| BranchReport {
            probability: b.probability,
            fidelity: b.fidelity,
            walker_purity: b.walker_purity,
            norm: b.norm,
        })
        .collect();
    Ok(Execution {
        report,
        schedules,
        final_states: live.into_iter().map(|b| b.data).collect(),
    })
}

/// Reads, parses and runs a script file. A relative `network` path is resolved against the
/// script's directory; `network_override` replaces it.
pub fn run_file(script_path: &Path, network_override: Option<&Path>, opts: RunOptions) -> Result<Execution, CliError> {
    let text =
        std::fs::read_to_string(script_path).map_err(|e| CliError::Io(format!("{}: {e}", script_path.display())))?;
    let script = parse_script(&text).map_err(CliError::Parse)?;
    let net_path: PathBuf = match network_override {
        Some(p) => p.to_path_buf(),
        None => {
            let declared = script
                .lines
                .iter()
                .find_map(|l| match &l.command {
                    Command::Network(p) => Some(p.clone()),
                    _ => None,
                })
                .ok_or_else(|| CliError::Bind {
                    line: 0,
                    message: "no `network` line and no --network given".into(),
                })?;
            let p = PathBuf::from(declared);
            if p.is_relative() {
                script_path.parent().unwrap_or(Path::new(".")).join(p)
            } else {
                p
            }
        }
    };
    let net_text =
        std::fs::read_to_string(&net_path).map_err(|e| CliError::Io(format!("{}: {e}", net_path.display())))?;
    let graph = load_network(&net_text).map_err(|e| CliError::Bind {
        line: 0,
        message: format!("{}: {e}", net_path.display()),
    })?;
    execute(&script, graph, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> NetworkGraph {
        let mut g = NetworkGraph::undirected(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        g.add_data_qubit(0, "a").unwrap();
        g.add_data_qubit(2, "c").unwrap();
        g
    }

    fn run(text: &str, mode: MeasureMode) -> Result<Execution, CliError> {
        execute(&parse_script(text).unwrap(), net(), RunOptions { seed: 7, mode })
    }

    #[test]
    fn remote_cnot_passes() {
        let e = run(
            "init A.a=plus\nremote_cu control=A.a target=C.c path=A,B,C gate=X\n",
            MeasureMode::Sample(7),
        )
        .unwrap();
        assert!(e.report.passed, "{:?}", e.report);
        assert_eq!(e.report.steps, 2 * 2 + 2);
    }

    #[test]
    fn bad_hop_is_named() {
        let err = run(
            "remote_cu control=A.a target=C.c path=A,C gate=X\n",
            MeasureMode::Branch,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("A-C"), "{err}");
    }

    #[test]
    fn budget_enforced() {
        let err = run(
            "walkers 0\nremote_cu control=A.a target=C.c path=A,B,C gate=X\n",
            MeasureMode::Branch,
        )
        .unwrap_err();
        assert!(matches!(err, CliError::Bind { line: 2, .. }), "{err}");
    }

    #[test]
    fn measure_branches_all_pass() {
        let e = run(
            "init A.a=random C.c=random\nremote_cu control=A.a target=C.c path=A,B,C gate=X separation=measure\n",
            MeasureMode::Branch,
        )
        .unwrap();
        assert!(e.report.passed);
        assert_eq!(e.report.measurements.len(), e.report.branches.len());
        assert_eq!(e.report.classical_messages.len(), e.report.branches.len());
    }

    #[test]
    fn low_level_round_trip_restores_data() {
        // Walk out of A on a=1, then undo every step in reverse order.
        let out = "walkers 1
init A.a=plus
walker 0 A
step datactrl walker=0 node=A controls=A.a string=1 c1=self c2=B
step shift flipflop
step coinperm walker=0 node=B c1=A c2=C
step shift flipflop
";
        let back = "step shift flipflop
step coinperm walker=0 node=B c1=A c2=C
step shift flipflop
step datactrl walker=0 node=A controls=A.a string=1 c1=self c2=B
";
        let half = run(out, MeasureMode::Branch).unwrap();
        assert!(!half.report.passed);
        assert!((half.report.walker_purity - 0.5).abs() < 1e-12);
        assert_eq!(half.report.supports.last().unwrap().walkers[0], vec!["A", "C"]);
        let full = run(&format!("{out}{back}"), MeasureMode::Branch).unwrap();
        assert!(full.report.passed, "{:?}", full.report);
        // The trailing operator gets a timestep of its own.
        assert_eq!(full.report.steps, 5);
    }

    #[test]
    fn step_after_measure_rejected() {
        let text = "walkers 1
walker 0 A
step measure walker=0 a=A b=B correct=A.a
step shift identity
";
        let err = run(text, MeasureMode::Branch).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
