//! Authenticated broadcast by delayed key disclosure over a one-way key
//! chain.
//!
//! Time is split into intervals `I_i` starting at `t_i = t0 + i·delta`.
//! Packets sent during `I_i` are MACed with a key derived from `K_{i+d}`,
//! and `K_i` itself is published at `t_i`. A receiver buffers a packet only
//! while its key cannot yet have been published, and checks it once the key
//! arrives and verifies against the chain.
//!
//! Wire forms:
//! - packet `[0x42][BE32 interval][BE16 len][payload][tag:16]`
//! - disclosure `[0x4B][BE32 interval][key:32]`
//! - bootstrap `[0x62][BE32 i][K_i:32][BE64 t_i][BE64 delta][BE32 d][BE32 n]`

use crate::crypto::{
    chain_verify, hash_iter, hmac_sha256, mac_compute, mac_verify, ChainKey, Digest, KeyChain, MacKey, Tag,
    DIGEST_LEN, TAG_LEN,
};
use crate::error::{Error, Result};
use crate::p2p::{ChannelState, DeliveryStatus};

pub type Tick = u64;

pub const PACKET_TYPE: u8 = 0x42;
pub const DISCLOSURE_TYPE: u8 = 0x4B;
pub const BOOTSTRAP_TYPE: u8 = 0x62;
pub const RECEIVER_BUFFER_LIMIT: usize = 1024;

const MAC_KEY_LABEL: u8 = 0x6D;
const DISCLOSURE_LEN: usize = 1 + 4 + DIGEST_LEN;
const BOOTSTRAP_LEN: usize = 1 + 4 + DIGEST_LEN + 8 + 8 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BroadcastSchedule {
    pub t0: Tick,
    pub delta: u64,
    pub d: u32,
    pub chain_length: u32,
}

impl BroadcastSchedule {
    pub fn new(t0: Tick, delta: u64, d: u32, chain_length: u32) -> Result<Self> {
        if delta == 0 {
            return Err(Error::InvalidArgument("interval duration must be positive".into()));
        }
        if d == 0 {
            return Err(Error::InvalidArgument("disclosure delay must be at least one interval".into()));
        }
        if d > chain_length {
            return Err(Error::InvalidArgument(format!("disclosure delay {d} exceeds chain length {chain_length}")));
        }
        Ok(Self { t0, delta, d, chain_length })
    }

    pub fn interval_of(&self, now: Tick) -> Result<u64> {
        if now < self.t0 {
            return Err(Error::InvalidArgument(format!("time {now} precedes schedule start {}", self.t0)));
        }
        Ok((now - self.t0) / self.delta)
    }

    pub fn interval_start(&self, i: u64) -> Tick {
        self.t0.saturating_add(i.saturating_mul(self.delta))
    }
}

/// MAC key for packets of interval `i`, derived from `K_{i+d}`.
pub fn interval_mac_key(chain_key: &Digest) -> MacKey {
    hmac_sha256(chain_key, &[MAC_KEY_LABEL])
}

fn packet_mac_input(interval: u32, payload: &[u8]) -> Vec<u8> {
    let mut m = Vec::with_capacity(4 + payload.len());
    m.extend_from_slice(&interval.to_be_bytes());
    m.extend_from_slice(payload);
    m
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BroadcastPacket {
    pub interval: u32,
    pub payload: Vec<u8>,
    pub tag: Tag,
}

impl BroadcastPacket {
    /// Builds a packet for `interval` tagged under `K_{interval+d}`.
    pub fn seal(interval: u32, payload: &[u8], key_for_interval: &Digest) -> Result<Self> {
        if payload.len() > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!("broadcast payload of {} bytes is too long", payload.len())));
        }
        let tag = mac_compute(&interval_mac_key(key_for_interval), &packet_mac_input(interval, payload));
        Ok(Self { interval, payload: payload.to_vec(), tag })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(7 + self.payload.len() + TAG_LEN);
        out.push(PACKET_TYPE);
        out.extend_from_slice(&self.interval.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 7 + TAG_LEN || bytes[0] != PACKET_TYPE {
            return Err(Error::Frame("not a broadcast packet".into()));
        }
        let interval = u32::from_be_bytes(bytes[1..5].try_into().expect("4 bytes"));
        let len = u16::from_be_bytes(bytes[5..7].try_into().expect("2 bytes")) as usize;
        if bytes.len() != 7 + len + TAG_LEN {
            return Err(Error::Frame(format!("broadcast packet length {} does not match payload length {len}", bytes.len())));
        }
        Ok(Self {
            interval,
            payload: bytes[7..7 + len].to_vec(),
            tag: bytes[7 + len..].try_into().expect("16 bytes"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyDisclosure {
    pub interval: u32,
    pub key: Digest,
}

impl KeyDisclosure {
    pub fn chain_key(&self) -> ChainKey {
        ChainKey { index: self.interval, bytes: self.key }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(DISCLOSURE_LEN);
        out.push(DISCLOSURE_TYPE);
        out.extend_from_slice(&self.interval.to_be_bytes());
        out.extend_from_slice(&self.key);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != DISCLOSURE_LEN || bytes[0] != DISCLOSURE_TYPE {
            return Err(Error::Frame("not a key disclosure".into()));
        }
        Ok(Self {
            interval: u32::from_be_bytes(bytes[1..5].try_into().expect("4 bytes")),
            key: bytes[5..].try_into().expect("32 bytes"),
        })
    }
}

/// What a new receiver needs: an authentic `K_i` plus the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapMessage {
    pub key: ChainKey,
    pub interval_start: Tick,
    pub delta: u64,
    pub d: u32,
    pub chain_length: u32,
}

impl BootstrapMessage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BOOTSTRAP_LEN);
        out.push(BOOTSTRAP_TYPE);
        out.extend_from_slice(&self.key.index.to_be_bytes());
        out.extend_from_slice(&self.key.bytes);
        out.extend_from_slice(&self.interval_start.to_be_bytes());
        out.extend_from_slice(&self.delta.to_be_bytes());
        out.extend_from_slice(&self.d.to_be_bytes());
        out.extend_from_slice(&self.chain_length.to_be_bytes());
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != BOOTSTRAP_LEN || bytes[0] != BOOTSTRAP_TYPE {
            return Err(Error::Frame("not a broadcast bootstrap message".into()));
        }
        let u32_at = |o: usize| u32::from_be_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let u64_at = |o: usize| u64::from_be_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        Ok(Self {
            key: ChainKey { index: u32_at(1), bytes: bytes[5..37].try_into().expect("32 bytes") },
            interval_start: u64_at(37),
            delta: u64_at(45),
            d: u32_at(53),
            chain_length: u32_at(57),
        })
    }

    pub fn schedule(&self) -> Result<BroadcastSchedule> {
        let offset = (self.key.index as u64)
            .checked_mul(self.delta)
            .filter(|&o| o <= self.interval_start)
            .ok_or_else(|| Error::Protocol("bootstrap interval start precedes the schedule origin".into()))?;
        BroadcastSchedule::new(self.interval_start - offset, self.delta, self.d, self.chain_length)
    }
}

#[derive(Debug, Clone)]
pub struct SenderBroadcastState {
    chain: KeyChain,
    pub schedule: BroadcastSchedule,
}

impl SenderBroadcastState {
    pub fn new(chain: KeyChain, schedule: BroadcastSchedule) -> Result<Self> {
        if chain.length() != schedule.chain_length {
            return Err(Error::InvalidArgument(format!(
                "chain length {} does not match schedule length {}",
                chain.length(),
                schedule.chain_length
            )));
        }
        Ok(Self { chain, schedule })
    }

    pub fn chain(&self) -> &KeyChain {
        &self.chain
    }

    pub fn send(&self, now: Tick, payload: &[u8]) -> Result<BroadcastPacket> {
        let i = self.schedule.interval_of(now)?;
        let key_index = i + self.schedule.d as u64;
        if key_index > self.schedule.chain_length as u64 {
            return Err(Error::ChainExhausted(i));
        }
        let key = self.chain.key(key_index as u32).expect("index within chain");
        BroadcastPacket::seal(i as u32, payload, &key.bytes)
    }

    /// The disclosure due at `now`: `K_i` for the current interval `i`.
    pub fn disclose(&self, now: Tick) -> Result<KeyDisclosure> {
        let i = self.schedule.interval_of(now)?;
        self.disclosure(i)
    }

    pub fn disclosure(&self, i: u64) -> Result<KeyDisclosure> {
        if i > self.schedule.chain_length as u64 {
            return Err(Error::ChainExhausted(i));
        }
        let key = self.chain.key(i as u32).expect("index within chain");
        Ok(KeyDisclosure { interval: key.index, key: key.bytes })
    }

    pub fn bootstrap_message(&self, now: Tick) -> Result<BootstrapMessage> {
        let i = self.schedule.interval_of(now)?;
        if i > self.schedule.chain_length as u64 {
            return Err(Error::ChainExhausted(i));
        }
        Ok(BootstrapMessage {
            key: self.chain.key(i as u32).expect("index within chain"),
            interval_start: self.schedule.interval_start(i),
            delta: self.schedule.delta,
            d: self.schedule.d,
            chain_length: self.schedule.chain_length,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketVerdict {
    Buffered,
    RejectedKeyDisclosed,
    /// The packet's key would lie beyond the end of the chain.
    RejectedOutOfRange,
}

impl PacketVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            PacketVerdict::Buffered => "BUFFERED",
            PacketVerdict::RejectedKeyDisclosed => "REJECTED_KEY_DISCLOSED",
            PacketVerdict::RejectedOutOfRange => "REJECTED_OUT_OF_RANGE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Authenticity {
    Authentic,
    Forged,
}

impl Authenticity {
    pub fn as_str(self) -> &'static str {
        match self {
            Authenticity::Authentic => "AUTHENTIC",
            Authenticity::Forged => "FORGED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyOutcome {
    /// Index at or below the latest key; nothing changed.
    Stale,
    /// Key verified; the buffered packets it settled, in arrival order.
    Accepted(Vec<(BroadcastPacket, Authenticity)>),
}

#[derive(Debug, Clone)]
pub struct ReceiverBroadcastState {
    pub latest_key: ChainKey,
    pub schedule: BroadcastSchedule,
    /// Bound on how far the local clock may lag the sender's. The safety
    /// check treats a key as possibly disclosed once `now + bound` reaches
    /// its disclosure time.
    pub clock_error_bound: u64,
    buffer: Vec<BroadcastPacket>,
}

impl ReceiverBroadcastState {
    pub fn new(latest_key: ChainKey, schedule: BroadcastSchedule, clock_error_bound: u64) -> Self {
        Self { latest_key, schedule, clock_error_bound, buffer: Vec::new() }
    }

    pub fn from_bootstrap(msg: &BootstrapMessage, clock_error_bound: u64) -> Result<Self> {
        Ok(Self::new(msg.key, msg.schedule()?, clock_error_bound))
    }

    pub fn buffered(&self) -> &[BroadcastPacket] {
        &self.buffer
    }

    /// Whether the key of a packet from `interval` may already be public at
    /// local time `now`.
    pub fn key_possibly_disclosed(&self, now: Tick, interval: u32) -> bool {
        let key_index = interval as u64 + self.schedule.d as u64;
        if self.latest_key.index as u64 >= key_index {
            return true;
        }
        let latest_sender_time = now.saturating_add(self.clock_error_bound);
        match self.schedule.interval_of(latest_sender_time) {
            Ok(i) => i >= key_index,
            Err(_) => false,
        }
    }

    pub fn receive_packet(&mut self, now: Tick, packet: BroadcastPacket) -> Result<PacketVerdict> {
        if packet.interval as u64 + self.schedule.d as u64 > self.schedule.chain_length as u64 {
            return Ok(PacketVerdict::RejectedOutOfRange);
        }
        if self.key_possibly_disclosed(now, packet.interval) {
            return Ok(PacketVerdict::RejectedKeyDisclosed);
        }
        if self.buffer.len() >= RECEIVER_BUFFER_LIMIT {
            return Err(Error::BufferOverflow(RECEIVER_BUFFER_LIMIT));
        }
        self.buffer.push(packet);
        Ok(PacketVerdict::Buffered)
    }

    pub fn receive_key(&mut self, disclosure: &KeyDisclosure) -> Result<KeyOutcome> {
        if disclosure.interval <= self.latest_key.index {
            return Ok(KeyOutcome::Stale);
        }
        let candidate = disclosure.chain_key();
        if disclosure.interval > self.schedule.chain_length || !chain_verify(&self.latest_key, &candidate)? {
            return Err(Error::KeyRejected(disclosure.interval));
        }
        self.latest_key = candidate;
        let k = candidate.index as u64;
        let d = self.schedule.d as u64;
        let (due, keep): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.buffer).into_iter().partition(|p| p.interval as u64 + d <= k);
        self.buffer = keep;
        let settled = due
            .into_iter()
            .map(|p| {
                let steps = (k - (p.interval as u64 + d)) as u32;
                let mac_key = interval_mac_key(&hash_iter(&candidate.bytes, steps));
                let ok = mac_verify(&mac_key, &packet_mac_input(p.interval, &p.payload), &p.tag).unwrap_or(false);
                let a = if ok { Authenticity::Authentic } else { Authenticity::Forged };
                (p, a)
            })
            .collect();
        Ok(KeyOutcome::Accepted(settled))
    }
}

/// Delivers `K_i` and the schedule to a new receiver over an established
/// point-to-point channel (`tx` at the sender, `rx` at the receiver).
pub fn bcast_bootstrap(
    sender: &SenderBroadcastState,
    now: Tick,
    tx: &mut ChannelState,
    rx: &mut ChannelState,
    clock_error_bound: u64,
) -> Result<ReceiverBroadcastState> {
    let msg = sender.bootstrap_message(now)?;
    let frame = tx.send(&msg.to_bytes())?;
    receive_bootstrap(rx, &frame.to_bytes(), clock_error_bound)
}

/// Receiving half of [`bcast_bootstrap`], for frames that crossed a link.
pub fn receive_bootstrap(rx: &mut ChannelState, frame: &[u8], clock_error_bound: u64) -> Result<ReceiverBroadcastState> {
    let result = rx.receive_bytes(frame)?;
    match (result.status, result.plaintext) {
        (DeliveryStatus::Accepted, Some(p)) => ReceiverBroadcastState::from_bootstrap(&BootstrapMessage::parse(&p)?, clock_error_bound),
        (status, _) => Err(Error::Protocol(format!("bootstrap frame rejected by channel: {}", status.as_str()))),
    }
}
