mod common;

use common::{random_op, random_state, random_unitary, random_walk_setup};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qwcp::cli::{parse_script, Command, GateSpec, InitValue, Line, MultipathBranch, Script, StepCommand};
use qwcp::linalg::named_gate;
use qwcp::netgraph::{NetworkGraph, PathSpec};
use qwcp::oracle::{compare, oracle_apply};
use qwcp::protocols::{run_compiled, run_schedule, schedule_remote_cu, GateRequest, QubitRef, Separation};
use qwcp::statevec::{fidelity, MeasureMode, RegisterLayout, StateVector};
use qwcp::walkops::{invert_schedule, make_flipflop_shift, OperatorSpec, Schedule, ShiftKind, ShiftSpec};

fn graph(n: usize, mask: u32) -> NetworkGraph {
    let labels: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let pairs: Vec<(&str, &str)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, (u, v))| (refs[u], refs[v]))
        .collect();
    NetworkGraph::undirected(&refs, &pairs).unwrap()
}

/// Path graph v0 - v1 - … with a data qubit `q` at every node. Labels sort in path order for
/// `n <= 10`.
fn line(n: usize) -> NetworkGraph {
    let labels: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let pairs: Vec<(&str, &str)> = refs.windows(2).map(|w| (w[0], w[1])).collect();
    let mut g = NetworkGraph::undirected(&refs, &pairs).unwrap();
    for v in 0..n {
        g.add_data_qubit(v, "q").unwrap();
    }
    g
}

/// A random schedule on the shared 2x3 grid setup; shifts only close timesteps.
fn random_schedule(g: &NetworkGraph, l: &RegisterLayout, rng: &mut ChaCha8Rng, steps: usize) -> Schedule {
    let mut s = Schedule::new();
    for _ in 0..steps {
        let ops = (0..rng.random_range(0..4))
            .map(|_| loop {
                let op = random_op(g, l, rng);
                if !matches!(op, OperatorSpec::Shift { .. }) {
                    break op;
                }
            })
            .collect();
        let shift = match rng.random_range(0..3) {
            0 => ShiftSpec::identity(),
            1 => ShiftSpec::flipflop(vec![rng.random_range(0..2)]),
            _ => ShiftSpec::flipflop(vec![0, 1]),
        };
        s.push(ops, shift);
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flipflop_squares_to_identity(n in 1usize..=6, mask in any::<u32>(), two in any::<bool>(), seed in any::<u64>()) {
        let g = graph(n, mask);
        let k = if two { 2 } else { 1 };
        let l = RegisterLayout::for_network(&g, k).unwrap();
        let walkers: Vec<usize> = (0..k).collect();
        let s = make_flipflop_shift(&l, &walkers).unwrap();
        let start = random_state(&l, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut st = start.clone();
        s.apply(&mut st).unwrap();
        s.apply(&mut st).unwrap();
        prop_assert_eq!(st, start);
    }

    #[test]
    fn random_operators_preserve_norm(seed in any::<u64>(), len in 1usize..80) {
        let (g, l) = random_walk_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = random_state(&l, &mut rng);
        for _ in 0..len {
            let op = random_op(&g, &l, &mut rng);
            prop_assert!(op.check_unitary(&l).is_ok());
            s.apply(&op).unwrap();
        }
        prop_assert!((s.norm() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn operator_inverse_undoes_it(seed in any::<u64>()) {
        let (g, l) = random_walk_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = random_op(&g, &l, &mut rng);
        let start = random_state(&l, &mut rng);
        let mut s = start.clone();
        s.apply(&op).unwrap();
        for inv in op.inverse().unwrap() {
            prop_assert!(inv.check_unitary(&l).is_ok());
            s.apply(&inv).unwrap();
        }
        prop_assert!(fidelity(&start, &s).unwrap() >= 1.0 - 1e-10);
    }

    #[test]
    fn inverted_schedule_restores_state(seed in any::<u64>(), steps in 1usize..10) {
        let (g, l) = random_walk_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sched = random_schedule(&g, &l, &mut rng, steps);
        let mut both = sched.clone();
        both.extend(invert_schedule(&sched).unwrap()).unwrap();
        let start = random_state(&l, &mut rng);
        let out = run_schedule(start.clone(), &both, MeasureMode::Branch).unwrap();
        prop_assert!(fidelity(&start, out.state()).unwrap() >= 1.0 - 1e-10);
        // Inverting twice gives back an equivalent schedule.
        let twice = invert_schedule(&invert_schedule(&sched).unwrap()).unwrap();
        let a = run_schedule(start.clone(), &sched, MeasureMode::Branch).unwrap();
        let b = run_schedule(start, &twice, MeasureMode::Branch).unwrap();
        prop_assert!(fidelity(a.state(), b.state()).unwrap() >= 1.0 - 1e-10);
    }

    #[test]
    fn walkers_stay_local(seed in any::<u64>(), steps in 1usize..12) {
        let (g, l) = random_walk_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sched = random_schedule(&g, &l, &mut rng, steps);
        let start = StateVector::product(
            &l,
            &[(rng.random_range(0..6), 0), (rng.random_range(0..6), 0)],
            &random_state(&l.data_plane(), &mut rng),
        )
        .unwrap();
        let out = run_schedule(start, &sched, MeasureMode::Branch).unwrap();
        prop_assert!(out.trace.locality_ok(), "{:?}", out.trace.locality_violations);
        for t in 1..out.trace.supports.len() {
            for j in 0..2 {
                let before = &out.trace.supports[t - 1][j];
                for &v in &out.trace.supports[t][j] {
                    let near = before.iter().any(|&u| u == v || g.is_adjacent(u, v));
                    prop_assert!(near, "walker {} reached {} from {:?}", j, v, before);
                }
            }
        }
    }

    #[test]
    fn schedule_json_round_trips(seed in any::<u64>(), steps in 1usize..6) {
        let (g, l) = random_walk_setup();
        let sched = random_schedule(&g, &l, &mut ChaCha8Rng::seed_from_u64(seed), steps);
        prop_assert_eq!(Schedule::from_json(&sched.to_json()).unwrap(), sched);
    }

    #[test]
    fn remote_cu_matches_oracle_on_lines(
        n in 2usize..=6,
        gate in prop::sample::select(vec!["X", "Y", "Z", "H", "S", "T"]),
        measure in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let g = line(n);
        let req = GateRequest::cu(QubitRef::new(0, "q"), QubitRef::new(n - 1, "q"), named_gate(gate).unwrap());
        let p = PathSpec::new(&g, (0..n).collect()).unwrap();
        let sep = if measure { Separation::Measure } else { Separation::Reverse };
        let c = schedule_remote_cu(&g, &req, &p, sep).unwrap();
        let hops = n - 1;
        prop_assert_eq!(c.schedule.len(), if measure { hops + 1 } else { 2 * hops + 2 });
        let data = random_state(&c.layout.data_plane(), &mut ChaCha8Rng::seed_from_u64(seed));
        let want = oracle_apply(&data, &c.gates).unwrap();
        let out = run_compiled(&c, &data, MeasureMode::Branch).unwrap();
        prop_assert!(out.trace.locality_ok());
        let total: f64 = out.branches.iter().map(|b| b.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for br in &out.branches {
            let cmp = compare(&br.state, &want).unwrap();
            prop_assert!(cmp.passed, "{:?}", cmp);
        }
    }

    #[test]
    fn random_unitaries_are_unitary(n in 1usize..=8, seed in any::<u64>()) {
        let m = random_unitary(n, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(m.is_unitary(1e-10));
    }
}

fn label() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["A", "B", "n1", "u_2"]).prop_map(String::from)
}

fn qubit() -> impl Strategy<Value = String> {
    (label(), prop::sample::select(vec!["a", "b", "q0"])).prop_map(|(n, q)| format!("{n}.{q}"))
}

fn gate() -> impl Strategy<Value = GateSpec> {
    prop_oneof![
        prop::sample::select(vec!["X", "H", "T"]).prop_map(|g| GateSpec::Named(g.into())),
        (any::<f64>(), -1e3f64..1e3)
            .prop_filter("finite", |(a, _)| a.is_finite())
            .prop_map(|(a, b)| {
                let z = Complex64::new(0.0, 0.0);
                GateSpec::Columns(vec![vec![Complex64::new(a, b), z], vec![z, Complex64::new(b, -a)]])
            }),
    ]
}

fn bits(n: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(any::<bool>(), n).prop_map(|v| v.iter().map(|&b| if b { '1' } else { '0' }).collect())
}

fn coin() -> impl Strategy<Value = String> {
    prop_oneof![
        (0usize..4).prop_map(|c| c.to_string()),
        Just("self".to_string()),
        label()
    ]
}

fn command() -> impl Strategy<Value = Command> {
    let sep = prop::sample::select(vec![Separation::Reverse, Separation::Measure]);
    let path = || prop::collection::vec(label(), 2..5);
    prop_oneof![
        "[a-z][a-z0-9_./]{0,12}\\.json".prop_map(Command::Network),
        (0usize..9).prop_map(Command::Walkers),
        prop::collection::vec(
            (
                qubit(),
                prop_oneof![
                    Just(InitValue::Zero),
                    Just(InitValue::Plus),
                    Just(InitValue::Random),
                    (-1.0f64..1.0, -1.0f64..1.0)
                        .prop_map(|(a, b)| InitValue::Amplitudes([Complex64::new(a, 0.0), Complex64::new(0.0, b)])),
                ]
            ),
            1..3
        )
        .prop_map(Command::Init),
        (
            qubit(),
            qubit(),
            path(),
            gate(),
            sep.clone(),
            prop::collection::vec((qubit(), gate()), 0..2)
        )
            .prop_map(|(control, target, path, gate, separation, hops)| Command::RemoteCu {
                control,
                target,
                path,
                gate,
                separation,
                hops
            }),
        (prop::collection::vec(qubit(), 1..3), qubit(), path(), gate(), sep)
            .prop_flat_map(|(controls, t, path, gate, separation)| {
                let n = controls.len();
                (
                    Just(controls),
                    bits(n),
                    Just(t),
                    Just(path),
                    Just(gate),
                    Just(separation),
                )
            })
            .prop_map(|(controls, string, t, path, gate, separation)| Command::RemoteMcu {
                controls,
                string,
                targets: vec![t],
                path,
                gate,
                separation
            }),
        (
            qubit(),
            prop::collection::vec(
                (path(), qubit(), gate()).prop_map(|(path, target, gate)| MultipathBranch { path, target, gate }),
                1..3
            )
        )
            .prop_map(|(c, branches)| Command::Multipath {
                controls: vec![c],
                string: None,
                branches
            }),
        (
            label(),
            prop::collection::vec((label(), label()), 1..4),
            qubit(),
            gate()
        )
            .prop_map(|(root, edges, t, g)| {
                Command::Tree {
                    controls: vec![format!("{root}.a")],
                    string: Some("1".into()),
                    root,
                    edges,
                    targets: vec![(vec![t], g)],
                }
            }),
        prop::option::of(prop::collection::vec((qubit(), qubit()), 1..3))
            .prop_map(|pairs| Command::Linklevel { pairs }),
        (0usize..3, label(), prop::option::of(coin())).prop_map(|(walker, node, coin)| Command::Walker {
            walker,
            node,
            coin
        }),
        (0usize..3, label(), coin(), coin()).prop_map(|(walker, node, c1, c2)| Command::Step(StepCommand::CoinPerm {
            walker,
            node,
            c1,
            c2
        })),
        (
            prop::sample::select(vec![ShiftKind::Flipflop, ShiftKind::Identity]),
            prop::option::of(prop::collection::vec(0usize..3, 1..3))
        )
            .prop_map(|(kind, walkers)| Command::Step(StepCommand::Shift { kind, walkers })),
        (0usize..3, label(), label(), qubit())
            .prop_map(|(walker, a, b, correct)| Command::Step(StepCommand::Measure { walker, a, b, correct })),
    ]
}

proptest! {
    #[test]
    fn script_text_round_trips(cmds in prop::collection::vec(command(), 1..8)) {
        let script = Script {
            lines: cmds.into_iter().enumerate().map(|(i, command)| Line { line: i + 1, command }).collect(),
        };
        let text = script.to_text();
        let back = parse_script(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert!(back.equivalent(&script), "{}", text);
        prop_assert_eq!(back.to_text(), text);
    }
}
