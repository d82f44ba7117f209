//! Scenario files: the TOML description of devices, links, channels,
//! adversary scripts and traffic that the simulator runs.
//!
//! One tick is one millisecond by convention. All ticks in `traffic` and
//! `timed` adversary entries are global simulator time; protocol state
//! reads the device clock (global time plus `clock_offset`).

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broadcast::Tick;
use crate::p2p::{ChannelConfig, DeliveryMode, DEFAULT_PREFIX_BITS, DEFAULT_WINDOW};

pub const DEFAULT_LATENCY: u64 = 1;
pub const DEFAULT_FRAGMENT: usize = crate::emergency::DEFAULT_FRAGMENT_CHUNK;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub tick_limit: Tick,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub devices: Vec<DeviceSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traffic: Vec<TrafficSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceRole {
    Master,
    Slave,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub id: String,
    pub role: DeviceRole,
    #[serde(default)]
    pub clock_offset: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: String,
    pub endpoints: [String; 2],
    #[serde(default = "default_latency")]
    pub latency: u64,
    #[serde(default)]
    pub loss_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversarySpec>,
}

fn default_latency() -> u64 {
    DEFAULT_LATENCY
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<RuleSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timed: Vec<TimedSpec>,
}

/// Rules see every frame handed to the link, in order. Each rule acts at
/// most once per frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    #[serde(rename = "match", default)]
    pub matcher: FrameMatch,
    pub action: ActionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A frame predicate. Unset fields match anything. `seq` is an inclusive
/// range over the visible sequence number: bytes 0..4 of an AGA frame, or
/// the interval field of a broadcast packet or disclosure. Frames without
/// a visible sequence number never match a `seq` constraint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_byte: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<[u64; 2]>,
    /// Matching frames to let pass before the rule starts acting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip: Option<u64>,
    /// How many matching frames the rule acts on; unlimited when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ActionSpec {
    Drop,
    Delay {
        ticks: u64,
    },
    /// Negative `byte` counts from the end: -1 is the last byte.
    FlipBit {
        byte: i64,
        bit: u8,
    },
    Record {
        tag: String,
    },
    /// Re-sends recordings under `tag`: the one at `index`, or all of them.
    Replay {
        tag: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
        #[serde(default)]
        delay: u64,
    },
    Inject {
        hex: String,
        #[serde(default)]
        delay: u64,
    },
    /// On a key disclosure for interval `j`, forges a broadcast packet for
    /// interval `j - d` MACed with the disclosed key.
    ForgeTesla {
        payload: String,
        #[serde(default)]
        delay: u64,
    },
}

impl ActionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ActionSpec::Drop => "DROP",
            ActionSpec::Delay { .. } => "DELAY",
            ActionSpec::FlipBit { .. } => "FLIP_BIT",
            ActionSpec::Record { .. } => "RECORD",
            ActionSpec::Replay { .. } => "REPLAY",
            ActionSpec::Inject { .. } => "INJECT",
            ActionSpec::ForgeTesla { .. } => "FORGE_TESLA",
        }
    }
}

/// An adversary action fired at a fixed tick rather than by a frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedSpec {
    pub at: Tick,
    /// Receiving device; must be an endpoint of the link.
    pub to: String,
    /// Channel the frame is presented on. Replays default to the channel
    /// the recording was made on; injections require it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    pub action: TimedAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TimedAction {
    Replay {
        tag: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
    },
    Inject {
        hex: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    Aga,
    P2p,
    Broadcast,
    EmergencyBasic,
    EmergencyRevised,
}

impl ChannelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelKind::Aga => "aga",
            ChannelKind::P2p => "p2p",
            ChannelKind::Broadcast => "broadcast",
            ChannelKind::EmergencyBasic => "emergency-basic",
            ChannelKind::EmergencyRevised => "emergency-revised",
        }
    }

    pub fn is_emergency(self) -> bool {
        matches!(self, ChannelKind::EmergencyBasic | ChannelKind::EmergencyRevised)
    }
}

/// A channel between two devices. Only the parameters of its `kind` may be
/// set; see [`ChannelSpec::allowed_fields`].
///
/// For broadcast and emergency channels `endpoints[0]` is the sender.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub id: String,
    pub kind: Option<ChannelKind>,
    pub endpoints: [String; 2],
    /// Link to use; defaults to the only link joining the endpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,

    /// 32-byte master secret (hex); derived from the scenario seed if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master: Option<String>,
    /// AGA: both directions share one key pair (default true).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_keys: Option<bool>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<DeliveryMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u32>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_length: Option<u32>,
    /// 32-byte chain seed (hex); derived from the scenario seed if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_seed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_error_bound: Option<u64>,
    /// p2p channel that carries the bootstrap message. Without it the
    /// receiver starts out holding `K_0` and the schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_via: Option<String>,

    /// Broadcast channel that carries the commitment tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<u16>,
    /// Revised channel: expiry offsets in ticks after each commit, one row
    /// per message, strictly increasing within a row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expiry: Option<Vec<Vec<u64>>>,
    /// Revised channel: estimated transmission time used when choosing a
    /// slot (default 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub est_transit: Option<u64>,
    /// Table fragment payload size in bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragment: Option<usize>,
    /// Commit a new generation once a message is down to one unused slot
    /// (default true).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_recommit: Option<bool>,
}

impl ChannelSpec {
    pub fn allowed_fields(kind: ChannelKind) -> &'static [&'static str] {
        match kind {
            ChannelKind::Aga => &["master", "shared_keys"],
            ChannelKind::P2p => &["master", "mode", "prefix_bits", "mac", "window"],
            ChannelKind::Broadcast => {
                &["t0", "delta", "d", "chain_length", "chain_seed", "clock_error_bound", "bootstrap_via"]
            }
            ChannelKind::EmergencyBasic => &["via", "u", "v", "fragment", "auto_recommit"],
            ChannelKind::EmergencyRevised => &["via", "u", "v", "expiry", "est_transit", "fragment", "auto_recommit"],
        }
    }

    fn set_fields(&self) -> Vec<&'static str> {
        let flags = [
            ("master", self.master.is_some()),
            ("shared_keys", self.shared_keys.is_some()),
            ("mode", self.mode.is_some()),
            ("prefix_bits", self.prefix_bits.is_some()),
            ("mac", self.mac.is_some()),
            ("window", self.window.is_some()),
            ("t0", self.t0.is_some()),
            ("delta", self.delta.is_some()),
            ("d", self.d.is_some()),
            ("chain_length", self.chain_length.is_some()),
            ("chain_seed", self.chain_seed.is_some()),
            ("clock_error_bound", self.clock_error_bound.is_some()),
            ("bootstrap_via", self.bootstrap_via.is_some()),
            ("via", self.via.is_some()),
            ("u", self.u.is_some()),
            ("v", self.v.is_some()),
            ("expiry", self.expiry.is_some()),
            ("est_transit", self.est_transit.is_some()),
            ("fragment", self.fragment.is_some()),
            ("auto_recommit", self.auto_recommit.is_some()),
        ];
        flags.iter().filter(|(_, set)| *set).map(|(n, _)| *n).collect()
    }

    pub fn p2p_config(&self) -> ChannelConfig {
        ChannelConfig {
            mode: self.mode.unwrap_or(DeliveryMode::M2),
            prefix_bits: self.prefix_bits.unwrap_or(DEFAULT_PREFIX_BITS),
            mac_enabled: self.mac.unwrap_or(true),
            window: self.window.unwrap_or(DEFAULT_WINDOW),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficAction {
    /// Encrypted data (aga, p2p) or an authenticated broadcast packet.
    Send,
    /// p2p authentication-only message.
    SendAuth,
    /// p2p pass-through message.
    SendPlain,
    /// p2p counter synchronization, initiated by `device`.
    Sync,
    /// Broadcast bootstrap over the channel's `bootstrap_via`.
    Bootstrap,
    /// Emergency: broadcast a fresh commitment table.
    Commit,
    /// Emergency: reveal message `msg`.
    Emit,
}

impl TrafficAction {
    fn allowed_on(self, kind: ChannelKind) -> bool {
        use TrafficAction::*;
        match kind {
            ChannelKind::Aga => self == Send,
            ChannelKind::P2p => matches!(self, Send | SendAuth | SendPlain | Sync),
            ChannelKind::Broadcast => matches!(self, Send | Bootstrap),
            ChannelKind::EmergencyBasic | ChannelKind::EmergencyRevised => matches!(self, Commit | Emit),
        }
    }

    fn sender_only(self) -> bool {
        matches!(self, TrafficAction::Bootstrap | TrafficAction::Commit | TrafficAction::Emit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub tick: Tick,
    pub device: String,
    pub channel: String,
    pub action: TrafficAction,
    /// UTF-8 payload.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_hex: Option<String>,
    /// Emergency message index for `emit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TrafficSpec {
    pub fn payload_bytes(&self) -> Vec<u8> {
        match (&self.payload, &self.payload_hex) {
            (Some(s), _) => s.as_bytes().to_vec(),
            (None, Some(h)) => hex::decode(h).unwrap_or_default(),
            (None, None) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("scenario is invalid:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ValidationError>),
    #[error("scenario does not serialize: {0}")]
    Serialize(String),
}

impl Scenario {
    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate().map_err(ScenarioError::Invalid)?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Serialize(e.to_string()))
    }

    pub fn device(&self, id: &str) -> Option<&DeviceSpec> {
        self.devices.iter().find(|d| d.id == id)
    }

    pub fn channel(&self, id: &str) -> Option<&ChannelSpec> {
        self.channels.iter().find(|c| c.id == id)
    }

    /// The link a channel runs over.
    pub fn link_of(&self, channel: &ChannelSpec) -> Option<&LinkSpec> {
        match &channel.link {
            Some(id) => self.links.iter().find(|l| &l.id == id),
            None => {
                let mut it = self.links.iter().filter(|l| same_pair(&l.endpoints, &channel.endpoints));
                let first = it.next();
                if it.next().is_some() {
                    None
                } else {
                    first
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), Vec<ValidationError>> {
        let mut v = Validator::default();
        v.check(self);
        if v.errors.is_empty() {
            Ok(())
        } else {
            Err(v.errors)
        }
    }
}

fn same_pair(a: &[String; 2], b: &[String; 2]) -> bool {
    (a[0] == b[0] && a[1] == b[1]) || (a[0] == b[1] && a[1] == b[0])
}

fn hex32(s: &str) -> bool {
    hex::decode(s).is_ok_and(|b| b.len() == 32)
}

#[derive(Default)]
struct Validator {
    errors: Vec<ValidationError>,
}

impl Validator {
    fn err(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ValidationError { path: path.into(), message: message.into() });
    }

    fn unique<'a>(&mut self, what: &str, ids: impl Iterator<Item = &'a String>) {
        let mut seen = HashSet::new();
        for (i, id) in ids.enumerate() {
            if id.is_empty() {
                self.err(format!("{what}[{i}].id"), "must not be empty");
            } else if !seen.insert(id) {
                self.err(format!("{what}[{i}].id"), format!("duplicate id {id:?}"));
            }
        }
    }

    fn check(&mut self, s: &Scenario) {
        self.unique("devices", s.devices.iter().map(|d| &d.id));
        self.unique("links", s.links.iter().map(|l| &l.id));
        self.unique("channels", s.channels.iter().map(|c| &c.id));
        let devices: HashSet<&str> = s.devices.iter().map(|d| d.id.as_str()).collect();
        let channels: HashMap<&str, &ChannelSpec> = s.channels.iter().map(|c| (c.id.as_str(), c)).collect();

        for (i, l) in s.links.iter().enumerate() {
            let p = format!("links[{i}]");
            self.endpoints(&p, &l.endpoints, &devices);
            if !(0.0..=1.0).contains(&l.loss_rate) {
                self.err(format!("{p}.loss_rate"), format!("must be within [0, 1], got {}", l.loss_rate));
            }
            if let Some(adv) = &l.adversary {
                self.adversary(&p, l, adv, &channels);
            }
        }

        for (i, c) in s.channels.iter().enumerate() {
            self.channel(s, &format!("channels[{i}]"), c, &channels);
        }

        for (i, t) in s.traffic.iter().enumerate() {
            self.traffic(&format!("traffic[{i}]"), t, &devices, &channels);
        }
    }

    fn endpoints(&mut self, path: &str, ends: &[String; 2], devices: &HashSet<&str>) {
        for (k, e) in ends.iter().enumerate() {
            if !devices.contains(e.as_str()) {
                self.err(format!("{path}.endpoints[{k}]"), format!("unknown device {e:?}"));
            }
        }
        if ends[0] == ends[1] {
            self.err(format!("{path}.endpoints"), "endpoints must be two different devices");
        }
    }

    fn adversary(&mut self, p: &str, link: &LinkSpec, adv: &AdversarySpec, channels: &HashMap<&str, &ChannelSpec>) {
        let recorded: HashSet<&str> = adv
            .rules
            .iter()
            .filter_map(|r| match &r.action {
                ActionSpec::Record { tag } => Some(tag.as_str()),
                _ => None,
            })
            .collect();
        for (k, r) in adv.rules.iter().enumerate() {
            let rp = format!("{p}.adversary.rules[{k}]");
            if let Some(from) = &r.matcher.from {
                if !link.endpoints.contains(from) {
                    self.err(format!("{rp}.match.from"), format!("{from:?} is not an endpoint of this link"));
                }
            }
            if let Some(ch) = &r.matcher.channel {
                if !channels.contains_key(ch.as_str()) {
                    self.err(format!("{rp}.match.channel"), format!("unknown channel {ch:?}"));
                }
            }
            if let Some([lo, hi]) = r.matcher.seq {
                if lo > hi {
                    self.err(format!("{rp}.match.seq"), format!("empty range [{lo}, {hi}]"));
                }
            }
            match &r.action {
                ActionSpec::FlipBit { bit, .. } if *bit > 7 => {
                    self.err(format!("{rp}.action.bit"), format!("bit must be 0..=7, got {bit}"));
                }
                ActionSpec::Replay { tag, .. } if !recorded.contains(tag.as_str()) => {
                    self.err(format!("{rp}.action.tag"), format!("no rule records under tag {tag:?}"));
                }
                ActionSpec::Inject { hex, .. } if hex::decode(hex).is_err() => {
                    self.err(format!("{rp}.action.hex"), "not valid hex");
                }
                _ => {}
            }
        }
        for (k, t) in adv.timed.iter().enumerate() {
            let tp = format!("{p}.adversary.timed[{k}]");
            if !link.endpoints.contains(&t.to) {
                self.err(format!("{tp}.to"), format!("{:?} is not an endpoint of this link", t.to));
            }
            match &t.channel {
                Some(ch) => match channels.get(ch.as_str()) {
                    None => self.err(format!("{tp}.channel"), format!("unknown channel {ch:?}")),
                    Some(c) if !c.endpoints.contains(&t.to) => {
                        self.err(format!("{tp}.channel"), format!("{:?} is not an endpoint of channel {ch:?}", t.to))
                    }
                    Some(_) => {}
                },
                None if matches!(t.action, TimedAction::Inject { .. }) => {
                    self.err(format!("{tp}.channel"), "required for inject");
                }
                None => {}
            }
            match &t.action {
                TimedAction::Replay { tag, .. } if !recorded.contains(tag.as_str()) => {
                    self.err(format!("{tp}.action.tag"), format!("no rule records under tag {tag:?}"));
                }
                TimedAction::Inject { hex } if hex::decode(hex).is_err() => {
                    self.err(format!("{tp}.action.hex"), "not valid hex");
                }
                _ => {}
            }
        }
    }

    fn channel(&mut self, s: &Scenario, p: &str, c: &ChannelSpec, channels: &HashMap<&str, &ChannelSpec>) {
        let devices: HashSet<&str> = s.devices.iter().map(|d| d.id.as_str()).collect();
        self.endpoints(p, &c.endpoints, &devices);
        match &c.link {
            Some(id) => match s.links.iter().find(|l| &l.id == id) {
                None => self.err(format!("{p}.link"), format!("unknown link {id:?}")),
                Some(l) if !same_pair(&l.endpoints, &c.endpoints) => {
                    self.err(format!("{p}.link"), format!("link {id:?} does not join the channel endpoints"))
                }
                Some(_) => {}
            },
            None => {
                let n = s.links.iter().filter(|l| same_pair(&l.endpoints, &c.endpoints)).count();
                if n != 1 {
                    self.err(format!("{p}.link"), format!("{n} links join the endpoints; name one explicitly"));
                }
            }
        }
        let Some(kind) = c.kind else {
            self.err(format!("{p}.kind"), "missing");
            return;
        };
        let allowed = ChannelSpec::allowed_fields(kind);
        for f in c.set_fields() {
            if !allowed.contains(&f) {
                self.err(format!("{p}.{f}"), format!("not a parameter of {} channels", kind.as_str()));
            }
        }
        if let Some(m) = &c.master {
            if !hex32(m) {
                self.err(format!("{p}.master"), "must be 32 bytes of hex");
            }
        }
        match kind {
            ChannelKind::Aga => {}
            ChannelKind::P2p => {
                if let Err(e) = c.p2p_config().validate() {
                    self.err(p.to_string(), e.to_string());
                }
            }
            ChannelKind::Broadcast => {
                if c.delta.is_none_or(|d| d == 0) {
                    self.err(format!("{p}.delta"), "required and positive");
                }
                let n = c.chain_length.unwrap_or(0);
                if n == 0 {
                    self.err(format!("{p}.chain_length"), "required and positive");
                }
                match c.d {
                    None | Some(0) => self.err(format!("{p}.d"), "required and positive"),
                    Some(d) if d > n => self.err(format!("{p}.d"), format!("exceeds chain_length {n}")),
                    _ => {}
                }
                if let Some(seed) = &c.chain_seed {
                    if !hex32(seed) {
                        self.err(format!("{p}.chain_seed"), "must be 32 bytes of hex");
                    }
                }
                if let Some(b) = &c.bootstrap_via {
                    match channels.get(b.as_str()) {
                        Some(bc) if bc.kind == Some(ChannelKind::P2p) && same_pair(&bc.endpoints, &c.endpoints) => {}
                        _ => self.err(format!("{p}.bootstrap_via"), format!("{b:?} is not a p2p channel between the same devices")),
                    }
                }
            }
            ChannelKind::EmergencyBasic | ChannelKind::EmergencyRevised => {
                match c.via.as_deref().and_then(|v| channels.get(v)) {
                    Some(bc) if bc.kind == Some(ChannelKind::Broadcast) && bc.endpoints == c.endpoints => {}
                    _ => self.err(format!("{p}.via"), "must name a broadcast channel with the same sender and receiver"),
                }
                let u = c.u.unwrap_or(0);
                let v = c.v.unwrap_or(0);
                if u == 0 {
                    self.err(format!("{p}.u"), "required and positive");
                }
                if v == 0 {
                    self.err(format!("{p}.v"), "required and positive");
                }
                if c.fragment == Some(0) {
                    self.err(format!("{p}.fragment"), "must be positive");
                }
                if kind == ChannelKind::EmergencyRevised {
                    match &c.expiry {
                        None => self.err(format!("{p}.expiry"), "required for revised channels"),
                        Some(grid) => {
                            if grid.len() != u as usize {
                                self.err(format!("{p}.expiry"), format!("{} rows for {u} messages", grid.len()));
                            }
                            for (r, row) in grid.iter().enumerate() {
                                if row.len() != v as usize {
                                    self.err(format!("{p}.expiry[{r}]"), format!("{} entries for {v} uses", row.len()));
                                }
                                if row.windows(2).any(|w| w[0] >= w[1]) {
                                    self.err(format!("{p}.expiry[{r}]"), "must be strictly increasing");
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn traffic(&mut self, p: &str, t: &TrafficSpec, devices: &HashSet<&str>, channels: &HashMap<&str, &ChannelSpec>) {
        if !devices.contains(t.device.as_str()) {
            self.err(format!("{p}.device"), format!("unknown device {:?}", t.device));
        }
        if t.payload.is_some() && t.payload_hex.is_some() {
            self.err(format!("{p}.payload_hex"), "set at most one of payload and payload_hex");
        }
        if let Some(h) = &t.payload_hex {
            if hex::decode(h).is_err() {
                self.err(format!("{p}.payload_hex"), "not valid hex");
            }
        }
        let Some(c) = channels.get(t.channel.as_str()) else {
            self.err(format!("{p}.channel"), format!("unknown channel {:?}", t.channel));
            return;
        };
        if !c.endpoints.contains(&t.device) {
            self.err(format!("{p}.device"), format!("{:?} is not an endpoint of channel {:?}", t.device, c.id));
        }
        let Some(kind) = c.kind else { return };
        if !t.action.allowed_on(kind) {
            self.err(format!("{p}.action"), format!("not available on {} channels", kind.as_str()));
            return;
        }
        let sender_side = kind == ChannelKind::Broadcast || kind.is_emergency();
        if (t.action.sender_only() || sender_side) && c.endpoints[0] != t.device {
            self.err(format!("{p}.device"), format!("only the sender {:?} may do this", c.endpoints[0]));
        }
        if t.action == TrafficAction::Bootstrap && c.bootstrap_via.is_none() {
            self.err(format!("{p}.action"), format!("channel {:?} has no bootstrap_via", c.id));
        }
        if t.action == TrafficAction::Emit {
            match t.msg {
                Some(m) if m >= 1 && m <= c.u.unwrap_or(0) => {}
                _ => self.err(format!("{p}.msg"), format!("must be in 1..={}", c.u.unwrap_or(0))),
            }
        } else if t.msg.is_some() {
            self.err(format!("{p}.msg"), "only used by emit");
        }
    }
}
