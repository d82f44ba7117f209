use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::broadcast::Tick;

/// Where a delivered frame came from, as far as the link knows. When
/// several apply the strongest wins: replay, inject, tampered, delayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Honest,
    Delayed,
    Tampered,
    Inject,
    Replay,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Honest => "honest",
            Origin::Delayed => "delayed",
            Origin::Tampered => "tampered",
            Origin::Inject => "inject",
            Origin::Replay => "replay",
        }
    }

    pub fn is_adversarial_delivery(self) -> bool {
        matches!(self, Origin::Delayed | Origin::Inject | Origin::Replay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Tx,
    Rx,
    Adv,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Tx => "tx",
            Direction::Rx => "rx",
            Direction::Adv => "adv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEvent {
    pub tick: Tick,
    pub device: String,
    pub dir: Direction,
    pub bytes: Vec<u8>,
    /// Verdict keyword, e.g. `ACCEPTED` or `REJECTED_KEY_DISCLOSED`.
    pub status: String,
    pub channel: Option<String>,
    /// Set on received frames that did not arrive untouched.
    pub origin: Option<Origin>,
    /// Bytes forwarded to the SCADA side, if any.
    pub delivered: Option<Vec<u8>>,
    /// Extra `key=value` details.
    pub detail: Vec<(String, String)>,
    pub note: Option<String>,
}

impl TranscriptEvent {
    pub fn new(tick: Tick, device: impl Into<String>, dir: Direction, bytes: Vec<u8>, status: impl Into<String>) -> Self {
        Self {
            tick,
            device: device.into(),
            dir,
            bytes,
            status: status.into(),
            channel: None,
            origin: None,
            delivered: None,
            detail: Vec::new(),
            note: None,
        }
    }

    pub fn chan(mut self, channel: impl Into<String>) -> Self {
        self.channel = Some(channel.into());
        self
    }

    pub fn origin(mut self, origin: Origin) -> Self {
        if origin != Origin::Honest {
            self.origin = Some(origin);
        }
        self
    }

    pub fn delivered(mut self, bytes: Vec<u8>) -> Self {
        self.delivered = Some(bytes);
        self
    }

    pub fn detail(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.detail.push((key.to_string(), value.to_string()));
        self
    }

    pub fn note(mut self, note: Option<String>) -> Self {
        self.note = note;
        self
    }

    /// The verdict column: `STATUS chan=.. origin=.. delivered=.. k=v ; note`.
    pub fn verdict(&self) -> String {
        let mut s = self.status.clone();
        if let Some(c) = &self.channel {
            let _ = write!(s, " chan={c}");
        }
        if let Some(o) = self.origin {
            let _ = write!(s, " origin={}", o.as_str());
        }
        if let Some(d) = &self.delivered {
            let _ = write!(s, " delivered={}", hex::encode(d));
        }
        for (k, v) in &self.detail {
            let _ = write!(s, " {k}={v}");
        }
        if let Some(n) = &self.note {
            let _ = write!(s, " ; {n}");
        }
        s
    }

    pub fn line(&self) -> String {
        format!("{}|{}|{}|{}|{}", self.tick, self.device, self.dir.as_str(), hex::encode(&self.bytes), self.verdict())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub events: Vec<TranscriptEvent>,
}

impl Transcript {
    pub fn push(&mut self, e: TranscriptEvent) {
        self.events.push(e);
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Event counts per verdict keyword.
    pub fn summary(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for e in &self.events {
            *m.entry(e.status.clone()).or_insert(0) += 1;
        }
        m
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.line());
            out.push('\n');
        }
        out.push_str("--- summary ---\n");
        let _ = writeln!(out, "events {}", self.events.len());
        for (status, n) in self.summary() {
            let _ = writeln!(out, "{status} {n}");
        }
        out
    }

    pub fn received(&self) -> impl Iterator<Item = &TranscriptEvent> {
        self.events.iter().filter(|e| e.dir == Direction::Rx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let e = TranscriptEvent::new(12, "rtu", Direction::Rx, vec![0xab, 0x01], "ACCEPTED")
            .chan("aga")
            .origin(Origin::Replay)
            .delivered(b"hi".to_vec())
            .detail("seq", 2)
            .note(Some("replay".into()));
        assert_eq!(e.line(), "12|rtu|rx|ab01|ACCEPTED chan=aga origin=replay delivered=6869 seq=2 ; replay");
        let plain = TranscriptEvent::new(0, "cc", Direction::Tx, vec![], "SENT").origin(Origin::Honest);
        assert_eq!(plain.line(), "0|cc|tx||SENT");
    }

    #[test]
    fn summary_counts() {
        let mut t = Transcript::default();
        for s in ["SENT", "ACCEPTED", "SENT"] {
            t.push(TranscriptEvent::new(0, "x", Direction::Tx, vec![], s));
        }
        assert_eq!(t.summary().get("SENT"), Some(&2));
        assert!(t.to_text().ends_with("--- summary ---\nevents 3\nACCEPTED 1\nSENT 2\n"));
    }
}
