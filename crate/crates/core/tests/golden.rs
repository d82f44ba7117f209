//! Checked-in scenarios: they parse, survive a TOML round trip, and
//! reproduce their golden transcripts byte for byte.
//!
//! Set `SSCADA_UPDATE_GOLDEN=1` to rewrite the golden files.

use std::fs;
use std::path::{Path, PathBuf};

use sscada::scenario::Scenario;
use sscada::simnet::sim_run;

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenarios() -> Vec<(String, Scenario)> {
    let mut out: Vec<(String, Scenario)> = fs::read_dir(scenario_dir())
        .expect("scenarios directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            let s = Scenario::from_toml_str(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (p.file_stem().unwrap().to_string_lossy().into_owned(), s)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn all_scenarios_present() {
    let names: Vec<String> = scenarios().into_iter().map(|(n, _)| n).collect();
    assert_eq!(
        names,
        ["aga-replay", "emergency-delay", "emergency-revised", "sscada-replay-immune", "tesla"]
    );
}

#[test]
fn scenarios_round_trip_through_toml() {
    for (name, s) in scenarios() {
        let text = s.to_toml_string().unwrap();
        let back = Scenario::from_toml_str(&text).unwrap_or_else(|e| panic!("{name}: {e}\n{text}"));
        assert_eq!(back, s, "{name}");
    }
}

#[test]
fn transcripts_match_golden_files() {
    let update = std::env::var_os("SSCADA_UPDATE_GOLDEN").is_some();
    for (name, s) in scenarios() {
        let text = sim_run(&s).unwrap().to_text();
        let path = scenario_dir().join("golden").join(format!("{name}.transcript"));
        if update {
            fs::write(&path, &text).unwrap();
            continue;
        }
        let golden = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(golden == text, "{name}: transcript differs from {}", path.display());
    }
}

#[test]
fn repeated_runs_are_identical() {
    for (name, s) in scenarios() {
        let a = sim_run(&s).unwrap().to_text();
        let b = sim_run(&s.clone()).unwrap().to_text();
        assert_eq!(a, b, "{name}");
    }
}
