use std::collections::HashMap;

use crate::broadcast::{BroadcastPacket, KeyDisclosure, Tick, DISCLOSURE_TYPE, PACKET_TYPE};
use crate::error::{Error, Result};
use crate::scenario::{ActionSpec, AdversarySpec, ChannelKind, FrameMatch, TimedAction};

use super::transcript::Origin;

/// How the receiving device should read the frame bytes on a p2p channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameClass {
    Data,
    AuthOnly,
    Plain,
}

/// A frame on a link. Everything except `bytes` is routing metadata that
/// the adversary cannot alter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub bytes: Vec<u8>,
    pub channel: String,
    pub class: FrameClass,
    pub from: String,
    pub to: String,
    pub origin: Origin,
    pub note: Option<String>,
}

/// What the adversary needs to know about the channel a frame belongs to.
#[derive(Debug, Clone, Copy)]
pub struct FrameContext {
    pub kind: ChannelKind,
    /// Disclosure delay, for broadcast channels.
    pub tesla_d: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdvEvent {
    pub action: &'static str,
    pub bytes: Vec<u8>,
    pub detail: Vec<(String, String)>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Applied {
    /// Frames to hand to receivers, with their arrival ticks.
    pub deliveries: Vec<(Tick, Frame)>,
    pub events: Vec<AdvEvent>,
}

/// The visible sequence number of a frame, where one exists.
pub fn visible_seq(bytes: &[u8], kind: ChannelKind) -> Option<u64> {
    match kind {
        ChannelKind::Aga if bytes.len() >= 4 => Some(u32::from_be_bytes(bytes[..4].try_into().ok()?) as u64),
        ChannelKind::Broadcast if bytes.len() >= 5 && matches!(bytes[0], PACKET_TYPE | DISCLOSURE_TYPE) => {
            Some(u32::from_be_bytes(bytes[1..5].try_into().ok()?) as u64)
        }
        _ => None,
    }
}

fn predicate(m: &FrameMatch, original: &[u8], frame: &Frame, kind: ChannelKind) -> bool {
    if m.type_byte.is_some_and(|t| original.first() != Some(&t)) {
        return false;
    }
    if m.from.as_ref().is_some_and(|f| f != &frame.from) {
        return false;
    }
    if m.channel.as_ref().is_some_and(|c| c != &frame.channel) {
        return false;
    }
    if let Some([lo, hi]) = m.seq {
        match visible_seq(original, kind) {
            Some(s) if (lo..=hi).contains(&s) => {}
            _ => return false,
        }
    }
    true
}

/// The scripted adversary sitting on one link.
#[derive(Debug, Clone)]
pub struct Adversary {
    spec: AdversarySpec,
    matched: Vec<u64>,
    recordings: HashMap<String, Vec<Frame>>,
}

impl Adversary {
    pub fn new(spec: AdversarySpec) -> Self {
        let matched = vec![0; spec.rules.len()];
        Self { spec, matched, recordings: HashMap::new() }
    }

    pub fn spec(&self) -> &AdversarySpec {
        &self.spec
    }

    pub fn recordings(&self, tag: &str) -> &[Frame] {
        self.recordings.get(tag).map_or(&[], Vec::as_slice)
    }

    fn recalled(&self, tag: &str, index: Option<usize>) -> Result<Vec<(usize, Frame)>> {
        let recs = self.recordings(tag);
        match index {
            Some(i) => recs
                .get(i)
                .map(|f| vec![(i, f.clone())])
                .ok_or_else(|| Error::Script(format!("replay of {tag}#{i}, but only {} recorded", recs.len()))),
            None if recs.is_empty() => Err(Error::Script(format!("replay of tag {tag:?} before anything was recorded"))),
            None => Ok(recs.iter().cloned().enumerate().collect()),
        }
    }

    /// Runs `frame` through the rules. The frame itself, unless dropped,
    /// is the first delivery; replays and injections follow.
    pub fn apply(&mut self, frame: Frame, now: Tick, latency: u64, ctx: FrameContext) -> Result<Applied> {
        let original = frame.bytes.clone();
        let mut current = Some(frame);
        let mut extra_delay = 0u64;
        let mut out = Applied::default();
        let mut spawned = Vec::new();

        for k in 0..self.spec.rules.len() {
            let Some(cur) = current.as_mut() else { break };
            let rule = &self.spec.rules[k];
            if !predicate(&rule.matcher, &original, cur, ctx.kind) {
                continue;
            }
            self.matched[k] += 1;
            let nth = self.matched[k];
            let skip = rule.matcher.skip.unwrap_or(0);
            if nth <= skip || rule.matcher.count.is_some_and(|c| nth > skip + c) {
                continue;
            }
            let note = rule.note.clone();
            let mut ev = |action: &'static str, bytes: Vec<u8>, detail: Vec<(String, String)>| {
                out.events.push(AdvEvent { action, bytes, detail, note: note.clone() });
            };
            match &rule.action {
                ActionSpec::Drop => {
                    ev("DROP", cur.bytes.clone(), vec![]);
                    current = None;
                }
                ActionSpec::Delay { ticks } => {
                    extra_delay += ticks;
                    cur.origin = cur.origin.max(Origin::Delayed);
                    cur.note = note.clone().or(cur.note.take());
                    ev("DELAY", cur.bytes.clone(), vec![("ticks".into(), ticks.to_string())]);
                }
                ActionSpec::FlipBit { byte, bit } => {
                    let len = cur.bytes.len() as i64;
                    let at = if *byte < 0 { len + byte } else { *byte };
                    if (0..len).contains(&at) {
                        cur.bytes[at as usize] ^= 1 << bit;
                        cur.origin = cur.origin.max(Origin::Tampered);
                        cur.note = note.clone().or(cur.note.take());
                        ev("FLIP_BIT", cur.bytes.clone(), vec![("byte".into(), at.to_string()), ("bit".into(), bit.to_string())]);
                    }
                }
                ActionSpec::Record { tag } => {
                    let list = self.recordings.entry(tag.clone()).or_default();
                    list.push(cur.clone());
                    ev("RECORD", cur.bytes.clone(), vec![("tag".into(), format!("{tag}#{}", list.len() - 1))]);
                }
                ActionSpec::Replay { tag, index, delay } => {
                    let at = now + latency + delay;
                    let recalled = self.recalled(tag, *index)?;
                    for (i, mut f) in recalled {
                        f.origin = Origin::Replay;
                        f.note = note.clone();
                        ev("REPLAY", f.bytes.clone(), vec![("tag".into(), format!("{tag}#{i}")), ("at".into(), at.to_string())]);
                        spawned.push((at, f));
                    }
                }
                ActionSpec::Inject { hex, delay } => {
                    let at = now + latency + delay;
                    let bytes = hex::decode(hex).map_err(|e| Error::Script(format!("inject hex: {e}")))?;
                    ev("INJECT", bytes.clone(), vec![("at".into(), at.to_string())]);
                    spawned.push((at, Frame { bytes, origin: Origin::Inject, note: note.clone(), class: FrameClass::Data, ..cur.clone() }));
                }
                ActionSpec::ForgeTesla { payload, delay } => {
                    let (Ok(disc), Some(d)) = (KeyDisclosure::parse(&cur.bytes), ctx.tesla_d) else { continue };
                    let Some(interval) = disc.interval.checked_sub(d) else { continue };
                    let packet = BroadcastPacket::seal(interval, payload.as_bytes(), &disc.key)?;
                    let bytes = packet.to_bytes();
                    let at = now + latency + delay;
                    ev("FORGE_TESLA", bytes.clone(), vec![("interval".into(), interval.to_string()), ("at".into(), at.to_string())]);
                    spawned.push((at, Frame { bytes, origin: Origin::Inject, note: note.clone(), class: FrameClass::Data, ..cur.clone() }));
                }
            }
        }

        if let Some(f) = current {
            out.deliveries.push((now + latency + extra_delay, f));
        }
        out.deliveries.extend(spawned);
        Ok(out)
    }

    /// Fires timed entry `index`. `from` is the link endpoint opposite `to`.
    pub fn fire_timed(&mut self, index: usize, now: Tick, latency: u64, from: &str) -> Result<Applied> {
        let t = self.spec.timed[index].clone();
        let at = now + latency;
        let mut out = Applied::default();
        match &t.action {
            TimedAction::Replay { tag, index } => {
                for (i, f) in self.recalled(tag, *index)? {
                    let frame = Frame {
                        channel: t.channel.clone().unwrap_or(f.channel),
                        to: t.to.clone(),
                        from: from.to_string(),
                        origin: Origin::Replay,
                        note: t.note.clone(),
                        ..f
                    };
                    out.events.push(AdvEvent {
                        action: "REPLAY",
                        bytes: frame.bytes.clone(),
                        detail: vec![("tag".into(), format!("{tag}#{i}")), ("at".into(), at.to_string())],
                        note: t.note.clone(),
                    });
                    out.deliveries.push((at, frame));
                }
            }
            TimedAction::Inject { hex } => {
                let bytes = hex::decode(hex).map_err(|e| Error::Script(format!("inject hex: {e}")))?;
                let channel = t.channel.clone().ok_or_else(|| Error::Script("timed inject without a channel".into()))?;
                out.events.push(AdvEvent {
                    action: "INJECT",
                    bytes: bytes.clone(),
                    detail: vec![("at".into(), at.to_string())],
                    note: t.note.clone(),
                });
                out.deliveries.push((
                    at,
                    Frame {
                        bytes,
                        channel,
                        class: FrameClass::Data,
                        from: from.to_string(),
                        to: t.to.clone(),
                        origin: Origin::Inject,
                        note: t.note.clone(),
                    },
                ));
            }
        }
        Ok(out)
    }
}

/// Runs one frame through the adversary on a link; see [`Adversary::apply`].
pub fn adversary_apply(adversary: &mut Adversary, frame: Frame, now: Tick, latency: u64, ctx: FrameContext) -> Result<Applied> {
    adversary.apply(frame, now, latency, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{RuleSpec, TimedSpec};

    const AGA: FrameContext = FrameContext { kind: ChannelKind::Aga, tesla_d: None };

    fn frame(bytes: Vec<u8>) -> Frame {
        Frame {
            bytes,
            channel: "c".into(),
            class: FrameClass::Data,
            from: "a".into(),
            to: "b".into(),
            origin: Origin::Honest,
            note: None,
        }
    }

    fn rule(action: ActionSpec, matcher: FrameMatch) -> RuleSpec {
        RuleSpec { matcher, action, note: None }
    }

    fn adv(rules: Vec<RuleSpec>) -> Adversary {
        Adversary::new(AdversarySpec { rules, timed: vec![] })
    }

    #[test]
    fn flip_last_byte() {
        let mut a = adv(vec![rule(ActionSpec::FlipBit { byte: -1, bit: 0 }, FrameMatch::default())]);
        let original: Vec<u8> = (0..36).collect();
        let out = a.apply(frame(original.clone()), 10, 5, AGA).unwrap();
        let (at, f) = &out.deliveries[0];
        assert_eq!(*at, 15);
        assert_eq!(f.bytes.len(), 36);
        let diff: u32 = f.bytes.iter().zip(&original).map(|(x, y)| (x ^ y).count_ones()).sum();
        assert_eq!(diff, 1);
        assert_eq!(f.bytes[35] ^ original[35], 1);
        assert_eq!(f.origin, Origin::Tampered);
    }

    #[test]
    fn drop_with_count() {
        let m = FrameMatch { count: Some(3), ..Default::default() };
        let mut a = adv(vec![rule(ActionSpec::Drop, m)]);
        for _ in 0..3 {
            assert!(a.apply(frame(vec![1; 20]), 0, 1, AGA).unwrap().deliveries.is_empty());
        }
        assert_eq!(a.apply(frame(vec![1; 20]), 0, 1, AGA).unwrap().deliveries.len(), 1);
    }

    #[test]
    fn skip_and_seq_range() {
        let m = FrameMatch { seq: Some([2, 3]), skip: Some(1), ..Default::default() };
        let mut a = adv(vec![rule(ActionSpec::Drop, m)]);
        let f = |s: u32| {
            let mut b = s.to_be_bytes().to_vec();
            b.extend([0; 32]);
            frame(b)
        };
        let passed: Vec<bool> = [1, 2, 3, 4, 2]
            .iter()
            .map(|&s| !a.apply(f(s), 0, 1, AGA).unwrap().deliveries.is_empty())
            .collect();
        assert_eq!(passed, [true, true, false, true, false]);
    }

    #[test]
    fn record_then_replay() {
        let rec = rule(ActionSpec::Record { tag: "t".into() }, FrameMatch { count: Some(1), ..Default::default() });
        let rep = rule(
            ActionSpec::Replay { tag: "t".into(), index: Some(0), delay: 100 },
            FrameMatch { skip: Some(1), count: Some(1), ..Default::default() },
        );
        let mut a = adv(vec![rec, rep]);
        a.apply(frame(vec![7; 20]), 0, 2, AGA).unwrap();
        let out = a.apply(frame(vec![8; 20]), 50, 2, AGA).unwrap();
        assert_eq!(out.deliveries.len(), 2);
        assert_eq!(out.deliveries[1].0, 152);
        assert_eq!(out.deliveries[1].1.bytes, vec![7; 20]);
        assert_eq!(out.deliveries[1].1.origin, Origin::Replay);
    }

    #[test]
    fn replay_of_unrecorded_tag_is_a_script_error() {
        let mut a = adv(vec![rule(ActionSpec::Replay { tag: "none".into(), index: None, delay: 0 }, FrameMatch::default())]);
        assert!(matches!(a.apply(frame(vec![0; 20]), 0, 1, AGA), Err(Error::Script(_))));
        let mut t = Adversary::new(AdversarySpec {
            rules: vec![],
            timed: vec![TimedSpec {
                at: 5,
                to: "b".into(),
                channel: None,
                action: TimedAction::Replay { tag: "none".into(), index: Some(0) },
                note: None,
            }],
        });
        assert!(matches!(t.fire_timed(0, 5, 1, "a"), Err(Error::Script(_))));
    }

    #[test]
    fn rules_apply_in_order() {
        // Record before the flip keeps the original; the delay stacks.
        let mut a = adv(vec![
            rule(ActionSpec::Record { tag: "t".into() }, FrameMatch::default()),
            rule(ActionSpec::FlipBit { byte: 0, bit: 7 }, FrameMatch::default()),
            rule(ActionSpec::Delay { ticks: 40 }, FrameMatch::default()),
        ]);
        let out = a.apply(frame(vec![0; 20]), 0, 1, AGA).unwrap();
        assert_eq!(a.recordings("t")[0].bytes, vec![0; 20]);
        assert_eq!(out.deliveries[0].0, 41);
        assert_eq!(out.deliveries[0].1.bytes[0], 0x80);
        assert_eq!(out.deliveries[0].1.origin, Origin::Tampered);
        assert_eq!(out.events.len(), 3);
    }

    #[test]
    fn forge_from_disclosure() {
        let mut a = adv(vec![rule(ActionSpec::ForgeTesla { payload: "trip".into(), delay: 0 }, FrameMatch::default())]);
        let disc = KeyDisclosure { interval: 6, key: [9; 32] };
        let ctx = FrameContext { kind: ChannelKind::Broadcast, tesla_d: Some(2) };
        let out = a.apply(frame(disc.to_bytes()), 0, 1, ctx).unwrap();
        assert_eq!(out.deliveries.len(), 2);
        let forged = BroadcastPacket::parse(&out.deliveries[1].1.bytes).unwrap();
        assert_eq!(forged.interval, 4);
        assert_eq!(forged, BroadcastPacket::seal(4, b"trip", &[9; 32]).unwrap());
        assert_eq!(visible_seq(&disc.to_bytes(), ChannelKind::Broadcast), Some(6));
    }
}
