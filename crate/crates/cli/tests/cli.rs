use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bgsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bgsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn reduce_common_proposal_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let o = bgsim(&[
        "reduce",
        "--n",
        "4",
        "--proposals",
        "0,0",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let s = stdout_json(&o);
    assert_eq!(s["decisions"], serde_json::json!([0, 0]));
    assert!(out.exists());
}

#[test]
fn reduce_with_crash_reports_survivor() {
    let o = bgsim(&[
        "reduce",
        "--n",
        "4",
        "--proposals",
        "0,0",
        "--seed",
        "7",
        "--crash",
        "1:3",
    ]);
    assert_eq!(code(&o), 0);
    let s = stdout_json(&o);
    assert_eq!(s["crashed"], 1);
    assert_eq!(s["decisions"][0], 0);
    assert_eq!(s["survivor_decided"], true);
}

#[test]
fn reduce_rejects_bad_input() {
    let o = bgsim(&["reduce", "--n", "2"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n > 2"));
    assert_eq!(code(&bgsim(&["reduce", "--proposals", "0,3"])), 2);
    assert_eq!(code(&bgsim(&["reduce", "--crash", "oops"])), 2);
    assert_eq!(code(&bgsim(&["reduce", "--algorithm", "teleport"])), 2);
    assert_eq!(code(&bgsim(&["reduce", "--formation", "2-gathering"])), 2);
    assert_eq!(code(&bgsim(&["reduce", "--bogus"])), 2);
    assert_eq!(code(&bgsim(&[])), 2);
}

#[test]
fn reduce_exits_3_when_slots_run_out() {
    let o = bgsim(&[
        "reduce",
        "--n",
        "3",
        "--proposals",
        "0,1",
        "--algorithm",
        "center-of-gravity",
        "--max-slots",
        "12",
        "--seed",
        "2",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn verify_accepts_fresh_trace_and_flags_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("m.json");
    let o = bgsim(&[
        "reduce",
        "--n",
        "3",
        "--proposals",
        "0,1",
        "--seed",
        "2",
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let v = bgsim(&["verify-trace", trace.to_str().unwrap()]);
    assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stdout));
    let report = read_json(&dir.path().join("m.report.json"));
    assert_eq!(report["pass"], true);

    let mut t = read_json(&trace);
    let slot = 4;
    let committer = t["slots"][slot]["committer"].as_u64().unwrap();
    for e in t["events"].as_array_mut().unwrap() {
        let w = &mut e["write"];
        if w["cell"]["index"] == slot * 2 && w["cell"]["owner"] == committer {
            w["value"]["val"]["location"] = serde_json::json!(["7/1", "7/1"]);
        }
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&t).unwrap()).unwrap();
    let v = bgsim(&["verify-trace", bad.to_str().unwrap()]);
    assert_eq!(code(&v), 1);
    let report = read_json(&dir.path().join("bad.report.json"));
    let meta = report["admissibility"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "metadata")
        .unwrap();
    assert_eq!(meta["violations"][0]["slot"], slot);
}

#[test]
fn verify_rejects_unparseable_files() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    bgsim(&["reduce", "--out", trace.to_str().unwrap()]);
    let text = std::fs::read_to_string(&trace).unwrap();
    let cut = dir.path().join("cut.json");
    std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
    assert_eq!(code(&bgsim(&["verify-trace", cut.to_str().unwrap()])), 2);
    assert_eq!(
        code(&bgsim(&["verify-trace", "/nonexistent/trace.json"])),
        2
    );
}

#[test]
fn check_slot_default_mutant_and_bound() {
    let o = bgsim(&["check-slot"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("(40 crash-free)"));
    let m = bgsim(&["check-slot", "--mutant", "--values", "5:7"]);
    assert_eq!(code(&m), 1);
    let text = String::from_utf8_lossy(&m.stdout);
    let line = text
        .lines()
        .find(|l| l.starts_with("NoContentionCommitment:"))
        .unwrap();
    assert!(!line.starts_with("NoContentionCommitment: 88/88"), "{text}");
    assert!(text.contains("first failure:"));
    assert_eq!(code(&bgsim(&["check-slot", "--max-events", "25"])), 2);
    assert_eq!(code(&bgsim(&["check-slot", "--values", "5"])), 2);
}

#[test]
fn simulate_gathers_or_exhausts() {
    let o = bgsim(&["simulate", "--n", "4", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["gathered"], true);
    let o = bgsim(&[
        "simulate",
        "--n",
        "4",
        "--algorithm",
        "stay-put",
        "--max-slots",
        "20",
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn formations_line_and_two_gathering() {
    let o = bgsim(&[
        "formations",
        "--formation",
        "line",
        "--samples",
        "500",
        "--grid",
        "0",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["certified"], true);
    let o = bgsim(&[
        "formations",
        "--formation",
        "2-gathering",
        "--samples",
        "0",
        "--grid",
        "0",
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout_json(&o)["chain"].is_object());
    assert_eq!(code(&bgsim(&["formations", "--formation", "hexagon"])), 2);
}

#[test]
fn seeded_commands_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let t = dir.path().join(format!("{name}.json"));
        let o = bgsim(&[
            "reduce",
            "--n",
            "5",
            "--proposals",
            "1,0",
            "--seed",
            "11",
            "--max-burst",
            "4",
            "--crash",
            "0:30",
            "--out",
            t.to_str().unwrap(),
        ]);
        let v = bgsim(&["verify-trace", t.to_str().unwrap()]);
        (
            std::fs::read(&t).unwrap(),
            std::fs::read(dir.path().join(format!("{name}.report.json"))).unwrap(),
            code(&v),
            o.stdout,
            v.stdout,
        )
    };
    let (ta, ra, ca, _, va) = run("a");
    let (tb, rb, _, _, vb) = run("b");
    assert_eq!(ca, 0);
    assert_eq!(ta, tb);
    assert_eq!(ra, rb);
    assert_eq!(
        String::from_utf8(va)
            .unwrap()
            .replace("a.report", "b.report"),
        String::from_utf8(vb).unwrap()
    );
}
