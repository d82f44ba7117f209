//! Run reports derived from a transcript.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::simnet::{Origin, Transcript};

/// Whether scripted adversarial deliveries got plaintext to the SCADA side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum AttackVerdict {
    /// No adversary action appeared in the transcript.
    None,
    Succeeded { reason: String },
    Defended { accepted: usize },
}

impl fmt::Display for AttackVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackVerdict::None => write!(f, "attack: NONE"),
            AttackVerdict::Succeeded { reason } => write!(f, "attack: SUCCEEDED ({reason})"),
            AttackVerdict::Defended { accepted } => write!(f, "attack: DEFENDED ({accepted} replayed frames accepted)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    /// Receive verdict counts per channel.
    pub channels: BTreeMap<String, BTreeMap<String, usize>>,
    pub summary: BTreeMap<String, usize>,
    pub attack: AttackVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcript_path: Option<String>,
}

fn reason(origin: Origin) -> &'static str {
    match origin {
        Origin::Replay => "stale plaintext delivered",
        Origin::Inject => "forged payload delivered",
        _ => "delayed message delivered",
    }
}

impl RunReport {
    pub fn from_transcript(t: &Transcript, transcript_path: Option<String>) -> Self {
        let mut channels: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for e in t.received() {
            let chan = e.channel.clone().unwrap_or_default();
            *channels.entry(chan).or_default().entry(e.status.clone()).or_insert(0) += 1;
        }
        let adversarial: Vec<Origin> = t
            .received()
            .filter(|e| e.delivered.is_some())
            .filter_map(|e| e.origin.filter(|o| o.is_adversarial_delivery()))
            .collect();
        let attack = if let Some(&worst) = adversarial.iter().max() {
            AttackVerdict::Succeeded { reason: reason(worst).to_string() }
        } else if t.events.iter().any(|e| e.dir == crate::simnet::Direction::Adv) {
            let accepted = t
                .received()
                .filter(|e| e.origin.is_some_and(Origin::is_adversarial_delivery))
                .filter(|e| matches!(e.status.as_str(), "ACCEPTED" | "AUTHENTIC"))
                .count();
            AttackVerdict::Defended { accepted }
        } else {
            AttackVerdict::None
        };
        RunReport { channels, summary: t.summary(), attack, transcript_path }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (chan, counts) in &self.channels {
            let parts: Vec<String> = counts.iter().map(|(s, n)| format!("{s}={n}")).collect();
            out.push_str(&format!("channel {chan}: {}\n", parts.join(" ")));
        }
        out.push_str(&format!("{}\n", self.attack));
        if let Some(p) = &self.transcript_path {
            out.push_str(&format!("transcript: {p}\n"));
        }
        out
    }
}
