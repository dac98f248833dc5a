use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn qwcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qwcp"))
        .args(args)
        .output()
        .expect("spawn qwcp")
}

/// Writes `body` as a script next to a copy-free reference to the grid fixture.
fn script(dir: &tempfile::TempDir, body: &str) -> PathBuf {
    let p = dir.path().join("s.qw");
    let net = fixture("grid3.json");
    std::fs::write(&p, format!("network {}\n{body}", net.display())).unwrap();
    p
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: stdout {:?} stderr {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn remote_cnot_report() {
    let out = qwcp(&["run", fixture("remote_cnot.qw").to_str().unwrap(), "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    assert_eq!(r["schema"], 1);
    // Three hops: forward walk plus one gate step, mirrored.
    assert_eq!(r["steps"], 2 * 3 + 2);
    assert!(r["fidelity_vs_oracle"].as_f64().unwrap() >= 1.0 - 1e-9);
    assert!(r["walker_purity"].as_f64().unwrap() >= 1.0 - 1e-9);
    assert!((r["final_norm"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(r["measurements"].as_array().unwrap().len(), 0);
    let sup = r["supports"].as_array().unwrap();
    assert_eq!(sup.len(), 2 * 3 + 2 + 1);
    assert_eq!(sup[3]["walkers"][0], serde_json::json!(["n0", "n5"]));
}

#[test]
fn branch_mode_lists_every_outcome() {
    let out = qwcp(&[
        "run",
        fixture("remote_cnot_measure.qw").to_str().unwrap(),
        "--mode",
        "branch",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    let branches = r["branches"].as_array().unwrap();
    let ms = r["measurements"].as_array().unwrap();
    assert_eq!(ms.len(), branches.len());
    assert!(branches.len() > 1);
    let total: f64 = branches.iter().map(|b| b["probability"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let f0 = branches[0]["fidelity"].as_f64().unwrap();
    for b in branches {
        assert!((b["fidelity"].as_f64().unwrap() - f0).abs() < 1e-9);
    }
    for m in &r["classical_messages"].as_array().unwrap()[..] {
        assert_eq!((m["from"].as_str(), m["to"].as_str()), (Some("n0"), Some("n5")));
    }
}

#[test]
fn same_seed_same_bytes() {
    let s = fixture("remote_cnot_measure.qw");
    let a = qwcp(&["run", s.to_str().unwrap(), "--seed", "42"]);
    let b = qwcp(&["run", s.to_str().unwrap(), "--seed", "42"]);
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn parse_error_exit_code_and_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(&dir, "remote_cu control=n0.a target=n5.b path=n0,n1 gate=Q\n");
    let out = qwcp(&["run", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("2:"), "{}", stderr(&out));
}

#[test]
fn bad_hop_names_the_edge() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(&dir, "remote_cu control=n0.a target=n5.b path=n0,n2,n5 gate=X\n");
    let out = qwcp(&["run", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("n0-n2"), "{}", stderr(&out));
}

#[test]
fn unknown_qubit_is_a_bind_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(&dir, "remote_cu control=n0.zz target=n5.b path=n0,n1,n2,n5 gate=X\n");
    let out = qwcp(&["run", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("n0.zz"), "{}", stderr(&out));
}

#[test]
fn measuring_a_wandering_walker_is_a_precondition_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(
        &dir,
        "walkers 1
walker 0 n0
step coinperm walker=0 node=n0 c1=self c2=n1
step shift flipflop
step measure walker=0 a=n0 b=n5 correct=n0.a
",
    );
    let out = qwcp(&["run", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn oracle_mismatch_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(
        &dir,
        "init n0.a=one
oracle controls=n0.a targets=n5.b gate=X
",
    );
    let out = qwcp(&["run", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let r = report(&out);
    assert_eq!(r["passed"], false);
    assert!(r["fidelity_vs_oracle"].as_f64().unwrap() < 1e-9);
}

#[test]
fn output_files_and_network_override() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.qw");
    std::fs::write(
        &p,
        "network missing.json\ninit n0.a=one\nremote_cu control=n0.a target=n5.b path=n0,n1,n2,n5 gate=X\n",
    )
    .unwrap();
    let missing = qwcp(&["run", p.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));

    let (rep, dump, sched) = (
        dir.path().join("r.json"),
        dir.path().join("d.txt"),
        dir.path().join("s.json"),
    );
    let out = qwcp(&[
        "run",
        p.to_str().unwrap(),
        "--network",
        fixture("grid3.json").to_str().unwrap(),
        "--out",
        rep.to_str().unwrap(),
        "--dump-state",
        dump.to_str().unwrap(),
        "--schedule-out",
        sched.to_str().unwrap(),
        "--trace",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    assert!(stderr(&out).contains("w0={n5}"));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    // Data order n0.a, n4.x, n5.b, n8.c: a=1 flips b, giving |1010⟩.
    let d = std::fs::read_to_string(&dump).unwrap();
    assert_eq!(d.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().len(), 1);
    assert!(d.contains("1010"), "{d}");
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&sched).unwrap()).unwrap();
    assert_eq!(s[0]["schedule"]["timesteps"].as_array().unwrap().len(), 8);
}

#[test]
fn walker_budget_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let p = script(
        &dir,
        "walkers 1
multipath controls=n4.x path=n4,n1,n0 target=n0.a gate=X path=n4,n5,n8 target=n8.c gate=X
",
    );
    let out = qwcp(&["run", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
    assert!(stderr(&out).contains("walker"), "{}", stderr(&out));
}
