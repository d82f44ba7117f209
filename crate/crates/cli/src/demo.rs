use anyhow::{Context, Result};
use clap::ValueEnum;
use sscada::report::RunReport;
use sscada::scenario::Scenario;
use sscada::simnet::{sim_run, Direction, Transcript, TranscriptEvent};

pub const AGA_REPLAY: &str = include_str!("../../../scenarios/aga-replay.toml");
pub const TESLA: &str = include_str!("../../../scenarios/tesla.toml");
pub const EMERGENCY_DELAY: &str = include_str!("../../../scenarios/emergency-delay.toml");
pub const EMERGENCY_REVISED: &str = include_str!("../../../scenarios/emergency-revised.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    /// Replay attack on the AGA draft protocol.
    AgaAttack,
    /// Forgery with a disclosed broadcast key.
    Tesla,
    /// Delayed reveal on the basic and revised emergency channels.
    EmergencyDelay,
    /// The revised emergency channel on its own.
    EmergencyRevised,
}

fn simulate(text: &str) -> Result<Transcript> {
    let scenario = Scenario::from_toml_str(text).context("canned scenario")?;
    Ok(sim_run(&scenario)?)
}

/// Payload as text when it is printable, hex otherwise.
fn show(bytes: &[u8]) -> String {
    let trimmed = match bytes.iter().rposition(|&b| b != 0) {
        Some(end) => &bytes[..=end],
        None => bytes,
    };
    if !trimmed.is_empty() && trimmed.iter().all(|b| b.is_ascii_graphic() || *b == b' ') {
        format!("{:?}", String::from_utf8_lossy(trimmed))
    } else {
        hex::encode(bytes)
    }
}

fn line(e: &TranscriptEvent) -> String {
    let mut s = format!("  t={:<5} {:<10} {:<3} {}", e.tick, e.device, e.dir.as_str(), e.status);
    if let Some(o) = e.origin {
        s.push_str(&format!(" [{}]", o.as_str()));
    }
    if let Some(d) = &e.delivered {
        s.push_str(&format!(" -> SCADA {}", show(d)));
    }
    if let Some(n) = &e.note {
        s.push_str(&format!("  ({n})"));
    }
    s
}

/// Prints the events worth narrating: adversary actions, receptions on the
/// named channels, and anything annotated.
fn narrate(t: &Transcript, channels: &[&str]) {
    for e in &t.events {
        let on_channel = e.channel.as_deref().is_some_and(|c| channels.contains(&c));
        let interesting = match e.dir {
            Direction::Adv => true,
            Direction::Rx => on_channel,
            Direction::Tx => e.note.is_some() && on_channel,
        };
        if interesting {
            println!("{}", line(e));
        }
    }
}

pub fn run(demo: Demo) -> Result<()> {
    match demo {
        Demo::AgaAttack => {
            println!("AGA draft protocol: tamper with authenticators, then replay logged frames\n");
            let t = simulate(AGA_REPLAY)?;
            narrate(&t, &["link"]);
            let report = RunReport::from_transcript(&t, None);
            println!("\n{}", report.attack);
        }
        Demo::Tesla => {
            println!("Broadcast authentication: forge with a withheld, disclosed key\n");
            let t = simulate(TESLA)?;
            narrate(&t, &["status"]);
            if let Some(e) = t.received().find(|e| e.status == "REJECTED_KEY_DISCLOSED") {
                println!("\nforged-late packet at t={} rejected with {}", e.tick, e.status);
            }
            println!("{}", RunReport::from_transcript(&t, None).attack);
        }
        Demo::EmergencyDelay => {
            println!("Basic commitment channel: hold a reveal back\n");
            let basic = simulate(EMERGENCY_DELAY)?;
            narrate(&basic, &["alarm"]);
            println!("\nbasic channel: {}", RunReport::from_transcript(&basic, None).attack);

            println!("\nRevised commitment channel, same adversary\n");
            let revised = simulate(EMERGENCY_REVISED)?;
            narrate(&revised, &["alarm"]);
            let delayed = revised.received().find(|e| e.origin.is_some() && e.channel.as_deref() == Some("alarm"));
            if let Some(e) = delayed {
                println!("\nrevised channel: delayed reveal at t={} {}", e.tick, e.status);
            }
            println!("revised channel: {}", RunReport::from_transcript(&revised, None).attack);
        }
        Demo::EmergencyRevised => {
            println!("Revised commitment channel: reveals expire\n");
            let t = simulate(EMERGENCY_REVISED)?;
            narrate(&t, &["alarm"]);
            println!("\n{}", RunReport::from_transcript(&t, None).attack);
        }
    }
    Ok(())
}
