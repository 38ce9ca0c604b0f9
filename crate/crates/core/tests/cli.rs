use std::process::Command;

use privsim::adversary::{AttackId, AttackParams};
use privsim::cli::{self, EXIT_OK, EXIT_USAGE, EXIT_VULNERABLE};
use privsim::conformance::{conformance_matrix, MatrixReport};
use privsim::profiles::{all_presets, parse_profile, preset};
use privsim::proto::decode_trace;

fn call(args: &[&str]) -> (i32, String, String) {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = cli::run(std::iter::once("privsim").chain(args.iter().copied()), &mut o, &mut e);
    (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_privsim");
    let run = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    assert_eq!(run(&["list-attacks"]).status.code(), Some(EXIT_OK));
    let bad = run(&["matrix", "--attacks", "nonsense"]);
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("nonsense"));
    let vuln = run(&["matrix", "--fail-on-vulnerable"]);
    assert_eq!(vuln.status.code(), Some(EXIT_VULNERABLE));
    let clean = run(&["matrix", "--profiles", "oai", "--attacks", "imsi_catching", "--fail-on-vulnerable"]);
    assert_eq!(clean.status.code(), Some(EXIT_OK));
}

#[test]
fn default_matrix_matches_library() {
    let (code, out, _) = call(&["matrix", "--format", "structured"]);
    assert_eq!(code, EXIT_OK);
    let parsed: MatrixReport = serde_json::from_str(&out).unwrap();
    let lib = conformance_matrix(&all_presets(), &AttackId::LEGACY, privsim::DEFAULT_SEED, &AttackParams::default())
        .unwrap();
    assert_eq!(parsed, lib);
    assert_eq!(out, lib.to_json());
}

#[test]
fn text_matrix_uses_weak_for_partial() {
    let (_, out, _) = call(&["matrix"]);
    assert!(out.contains("Weak"));
    assert!(!out.contains("PartiallyMitigated"));
    let (_, combined, _) = call(&["matrix", "--combined"]);
    assert!(combined.contains("operator-sa*"));
}

#[test]
fn explain_covers_mechanisms() {
    let (code, out, _) = call(&["explain", "suci"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("concealed"));
    let (code, out, _) = call(&["explain", "guti_realloc_dos"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("Mitigation:"));
    assert_eq!(call(&["explain", "R10"]).0, EXIT_USAGE);
}

#[test]
fn simulate_writes_trace_and_audit_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let t = trace.to_str().unwrap();
    let (code, out, _) = call(&["simulate", "--profile", "operator-nsa", "--trace", t]);
    assert_eq!(code, EXIT_OK, "{out}");
    let events = decode_trace(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert!(!events.is_empty());

    let (code, out, _) = call(&["audit", "--trace", t, "--rules", "R1,r5"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("R1 ["), "{out}");
    assert!(out.contains("\nR5 ["), "{out}");

    let (code, out, _) = call(&["audit", "--trace", t, "--format", "structured"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v.as_array().unwrap().iter().all(|f| f["events"].as_array().is_some_and(|e| !e.is_empty())));

    let missing = dir.path().join("missing.jsonl");
    assert_eq!(call(&["audit", "--trace", missing.to_str().unwrap()]).0, EXIT_USAGE);
}

#[test]
fn custom_profile_file() {
    let dir = tempfile::tempdir().unwrap();
    let (code, toml, _) = call(&["show-profile", "operator-sa-b"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(parse_profile(&toml).unwrap(), preset("operator-sa-b").unwrap());

    let path = dir.path().join("p.toml");
    let custom = toml.replace("include_mac_in_smc = false", "include_mac_in_smc = true");
    std::fs::write(&path, custom).unwrap();
    let p = path.to_str().unwrap();
    let (code, out, _) = call(&[
        "simulate",
        "--profile",
        p,
        "--attack",
        "security_caps_bidding_down_extended",
        "--policy",
        "strict",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains(": Mitigated"), "{out}");

    std::fs::write(&path, toml.replace("supports_suci", "supports_sushi")).unwrap();
    let (code, _, err) = call(&["simulate", "--profile", p]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("supports_sushi"), "{err}");
}

#[test]
fn list_profiles_shows_gaps() {
    let (_, out, _) = call(&["list-profiles"]);
    assert_eq!(out.lines().count(), 5);
    let nsa = out.lines().find(|l| l.starts_with("operator-nsa")).unwrap();
    assert!(nsa.contains("E1"), "{nsa}");
}
