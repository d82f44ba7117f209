//! `sscada`: run simulator scenarios, print key chains, and replay the
//! canned attack and defense demonstrations.

mod demo;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use sscada::crypto::{chain_generate, chain_verify, hash_iter, Digest};
use sscada::report::RunReport;
use sscada::scenario::{Scenario, ScenarioError};
use sscada::simnet::{SimError, Simulator};
use sscada::Error;

const EXIT_INVALID: u8 = 1;
const EXIT_INTERNAL: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "sscada", version, about = "Secure SCADA link protocols and attack simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and print the transcript and report.
    Run {
        file: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the transcript here instead of printing it.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long = "summary-json")]
        summary_json: Option<PathBuf>,
    },
    /// Print a one-way key chain K_0..K_n grown from a 32-byte seed K_n.
    Keychain {
        #[arg(long)]
        length: u32,
        /// 64 hex digits.
        #[arg(long)]
        seed: String,
    },
    /// Run a canned scenario and narrate it.
    Demo { name: demo::Demo },
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self { code: EXIT_INVALID, message: message.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self { code: EXIT_INTERNAL, message: format!("{e:#}") }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::Scenario(_) | SimError::Runtime(Error::Script(_)) => EXIT_INVALID,
            SimError::Runtime(_) => EXIT_INTERNAL,
        };
        Self { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INVALID) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { file, seed, transcript, summary_json } => run(file, seed, transcript, summary_json),
        Command::Keychain { length, seed } => keychain(length, &seed),
        Command::Demo { name } => demo::run(name).map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(file: PathBuf, seed: Option<u64>, transcript: Option<PathBuf>, summary_json: Option<PathBuf>) -> Result<(), Failure> {
    let text = fs::read_to_string(&file).map_err(|e| Failure::invalid(format!("cannot read {}: {e}", file.display())))?;
    let mut scenario = Scenario::from_toml_str(&text).map_err(|e| match e {
        ScenarioError::Serialize(m) => Failure { code: EXIT_INTERNAL, message: m },
        other => Failure::invalid(format!("{}: {other}", file.display())),
    })?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let t = Simulator::new(&scenario)?.run().map_err(SimError::from)?;
    let path = transcript.as_ref().map(|p| p.display().to_string());
    let report = RunReport::from_transcript(&t, path);
    match &transcript {
        Some(p) => fs::write(p, t.to_text()).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{}", t.to_text()),
    }
    print!("{}", report.to_text());
    if let Some(p) = summary_json {
        let json = serde_json::to_string_pretty(&report).context("encoding report")?;
        fs::write(&p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn keychain(length: u32, seed_hex: &str) -> Result<(), Failure> {
    if length == 0 {
        return Err(Failure::invalid("--length must be at least 1"));
    }
    let seed: Digest = hex::decode(seed_hex)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Failure::invalid("--seed must be 64 hex digits (32 bytes)"))?;
    let chain = chain_generate(&seed, length).context("generating chain")?;
    for k in chain.keys() {
        println!("{} {}", k.index, hex::encode(k.bytes));
    }
    let anchor = chain.anchor();
    let tip = chain.key(length).expect("chain holds n + 1 keys");
    let ok = anchor.bytes == hash_iter(&seed, length) && chain_verify(&anchor, &tip).context("verifying chain")?;
    if !ok {
        return Err(Failure { code: EXIT_INTERNAL, message: "chain check failed".into() });
    }
    println!("chain OK");
    Ok(())
}
