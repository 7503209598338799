//! End-to-end behaviour of the `mcheck` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/corpus").join(name)
}

fn mcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcheck")).args(args).output().expect("spawn mcheck")
}

fn run(name: &str, extra: &[&str]) -> Output {
    let file = corpus(name);
    let mut args = vec!["run", file.to_str().unwrap()];
    args.extend_from_slice(extra);
    mcheck(&args)
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json report")
}

#[test]
fn clean_program_exits_0() {
    let out = run("lock_counter.asm", &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("violation: none"), "{text}");
}

#[test]
fn violations_exit_1_with_kind() {
    for (name, kind) in [
        ("atomic_racy.asm", "assertion"),
        ("two_lock_deadlock.asm", "deadlock"),
        ("illegal_unlock.asm", "illegal-monitor"),
        ("unknown_method.asm", "unsupported-native-method"),
    ] {
        for mode in ["--mode=abstracted", "--mode=reference"] {
            let out = run(name, &[mode, "--output=json"]);
            assert_eq!(out.status.code(), Some(1), "{name} {mode}");
            assert_eq!(json(&out)["violation"]["kind"], kind, "{name} {mode}");
        }
    }
}

#[test]
fn json_report_has_the_fixed_fields() {
    let out = run("two_lock_deadlock.asm", &["--output=json"]);
    let report = json(&out);
    let mut keys: Vec<&str> = report.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(
        keys,
        ["interned_versions", "max_depth", "peak_state_bytes", "states", "time_ms", "transitions", "violation"]
    );
    let trace = report["violation"]["trace"].as_array().unwrap();
    assert!(!trace.is_empty());
    assert!(trace[0].get("tid").is_some());

    let clean = json(&run("atomic_ok.asm", &["--output=json"]));
    assert!(clean["violation"].is_null());
}

#[test]
fn filtered_trace_has_no_library_entries() {
    let out = run("two_lock_deadlock.asm", &["--mode=reference", "--trace-filter=on", "--output=json"]);
    let report = json(&out);
    let trace = report["violation"]["trace"].as_array().unwrap();
    assert!(trace.iter().all(|e| e["library"] == false));
}

#[test]
fn defines_override_constants() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("const.asm");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "const X = 1\nfn main(0 args, 0 locals):\n  push X\n  push 1\n  eq\n  assert\n  ret").unwrap();
    let file = path.to_str().unwrap();
    assert_eq!(mcheck(&["run", file]).status.code(), Some(0));
    assert_eq!(mcheck(&["run", file, "--define", "X=2"]).status.code(), Some(1));
}

#[test]
fn usage_and_parse_errors_exit_2() {
    assert_eq!(mcheck(&["run"]).status.code(), Some(2));
    assert_eq!(run("lock_counter.asm", &["--mode=sideways"]).status.code(), Some(2));
    assert_eq!(mcheck(&["run", "/nonexistent/program.asm"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.asm");
    std::fs::write(&path, "fn main(0 args, 0 locals):\n  frobnicate\n").unwrap();
    let out = mcheck(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn depth_limit_is_a_violation() {
    let out = run("lock_counter.asm", &["--max-depth", "2", "--output=json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["violation"]["kind"], "depth-limit");
}

#[test]
fn runs_are_deterministic() {
    let strip = |out: Output| {
        let mut v = json(&out);
        v.as_object_mut().unwrap().remove("time_ms");
        v
    };
    let a = strip(run("mixed.asm", &["--output=json", "--peer-gc=on"]));
    let b = strip(run("mixed.asm", &["--output=json", "--peer-gc=on"]));
    assert_eq!(a, b);
}

#[test]
fn bench_csv_header_and_rows() {
    let out = mcheck(&["bench", "--benchmarks=atomicint,lock", "--threads=2", "--repeat=1"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "benchmark,threads,mode,states,transitions,time_ms,state_ratio,time_ratio");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("atomicint,2,reference,"));
    assert!(lines[4].starts_with("lock,2,abstracted,210,"));
}

#[test]
fn bench_json_output() {
    let out = mcheck(&["bench", "--benchmarks=map", "--threads=2", "--repeat=1", "--output=json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.to_string().contains("\"map\""));
}
