use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn sscada(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sscada")).args(args).output().expect("spawn sscada")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn run_scenario(name: &str) -> Output {
    sscada(&["run", scenario(name).to_str().unwrap()])
}

#[test]
fn run_aga_replay_reports_success() {
    let o = run_scenario("aga-replay");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("attack: SUCCEEDED (stale plaintext delivered)"));
}

#[test]
fn run_replay_immune_reports_defense() {
    let o = run_scenario("sscada-replay-immune");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("attack: DEFENDED (0 replayed frames accepted)"));
}

#[test]
fn printed_transcript_matches_golden() {
    let o = run_scenario("tesla");
    let golden = fs::read_to_string(scenario("golden/tesla").with_extension("transcript")).unwrap();
    assert!(stdout(&o).starts_with(&golden));
}

#[test]
fn run_writes_transcript_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.txt");
    let json = dir.path().join("r.json");
    let o = sscada(&[
        "run",
        scenario("aga-replay").to_str().unwrap(),
        "--transcript",
        transcript.to_str().unwrap(),
        "--summary-json",
        json.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(!out.contains("--- summary ---"), "transcript went to the file, not stdout");
    assert!(out.contains(&format!("transcript: {}", transcript.display())));

    let golden = fs::read_to_string(scenario("golden/aga-replay").with_extension("transcript")).unwrap();
    assert_eq!(fs::read_to_string(&transcript).unwrap(), golden);

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["attack"]["outcome"], "succeeded");
    assert_eq!(report["attack"]["reason"], "stale plaintext delivered");
    assert_eq!(report["channels"]["link"]["ACCEPTED"], 2);
    assert_eq!(report["transcript_path"], transcript.to_str().unwrap());
}

#[test]
fn seed_override_changes_ciphertexts_not_verdict() {
    let path = scenario("aga-replay");
    let a = sscada(&["run", path.to_str().unwrap()]);
    let b = sscada(&["run", path.to_str().unwrap(), "--seed", "77"]);
    assert!(b.status.success());
    assert_ne!(stdout(&a), stdout(&b));
    assert!(stdout(&b).contains("attack: SUCCEEDED (stale plaintext delivered)"));
}

fn run_text(text: &str) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    sscada(&["run", path.to_str().unwrap()])
}

#[test]
fn malformed_file_names_the_field() {
    let text = fs::read_to_string(scenario("aga-replay")).unwrap().replace("latency = 5", "latency = \"five\"");
    let o = run_text(&text);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("latency"), "{err}");
    assert!(err.contains("line"), "{err}");
}

#[test]
fn invalid_reference_names_the_path() {
    let text = fs::read_to_string(scenario("aga-replay")).unwrap().replace("device = \"cc\"", "device = \"plc\"");
    let o = run_text(&text);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("traffic[0].device"), "{err}");
    assert!(err.contains("plc"), "{err}");
}

#[test]
fn unknown_field_is_rejected() {
    let text = fs::read_to_string(scenario("tesla")).unwrap().replace("delta = 100", "delta = 100\ndelay = 3");
    let o = run_text(&text);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("delay"), "{}", stderr(&o));
}

#[test]
fn missing_file_exits_one() {
    let o = sscada(&["run", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

const SEED: &str = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";

#[test]
fn keychain_of_length_one() {
    let o = sscada(&["keychain", "--length", "1", "--seed", SEED]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], format!("1 {SEED}"));
    assert_eq!(lines[2], "chain OK");
}

#[test]
fn keychain_links_hash_to_predecessor() {
    let o = sscada(&["keychain", "--length", "5", "--seed", SEED]);
    assert!(o.status.success());
    let out = stdout(&o);
    let keys: Vec<(u32, String)> = out
        .lines()
        .take(6)
        .map(|l| {
            let (i, k) = l.split_once(' ').unwrap();
            (i.parse().unwrap(), k.to_string())
        })
        .collect();
    assert_eq!(keys.iter().map(|(i, _)| *i).collect::<Vec<_>>(), [0, 1, 2, 3, 4, 5]);
    assert_eq!(keys[5].1, SEED);
    for w in keys.windows(2) {
        let next = hex::decode(&w[1].1).unwrap();
        assert_eq!(w[0].1, hex::encode(Sha256::digest(&next)));
    }
    assert_eq!(out, stdout(&sscada(&["keychain", "--length", "5", "--seed", SEED])));
}

#[test]
fn keychain_rejects_bad_arguments() {
    assert_eq!(sscada(&["keychain", "--length", "0", "--seed", SEED]).status.code(), Some(1));
    assert_eq!(sscada(&["keychain", "--length", "3", "--seed", "abcd"]).status.code(), Some(1));
    assert_eq!(sscada(&["keychain", "--length", "3"]).status.code(), Some(1));
}

#[test]
fn demo_aga_attack_ends_in_success() {
    let o = sscada(&["demo", "aga-attack"]);
    assert!(o.status.success());
    let out = stdout(&o);
    for step in ["step 1", "step 2", "step 3", "step 4"] {
        assert!(out.contains(step), "missing {step}:\n{out}");
    }
    assert_eq!(out.lines().last(), Some("attack: SUCCEEDED (stale plaintext delivered)"));
}

#[test]
fn demo_tesla_rejects_the_late_forgery() {
    let out = stdout(&sscada(&["demo", "tesla"]));
    assert!(out.contains("forged-late packet at t=605 rejected with REJECTED_KEY_DISCLOSED"), "{out}");
}

#[test]
fn demo_emergency_delay_contrasts_both_channels() {
    let out = stdout(&sscada(&["demo", "emergency-delay"]));
    assert!(out.contains("basic channel: attack: SUCCEEDED (delayed message delivered)"), "{out}");
    assert!(out.contains("revised channel: delayed reveal at t=2205 REJECTED_EXPIRED"), "{out}");
}

#[test]
fn demo_emergency_revised_defends() {
    let o = sscada(&["demo", "emergency-revised"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("REJECTED_EXPIRED"));
}

#[test]
fn unknown_demo_lists_the_choices() {
    let o = sscada(&["demo", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for name in ["aga-attack", "tesla", "emergency-delay", "emergency-revised"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn help_exits_zero() {
    assert!(sscada(&["--help"]).status.success());
}
