//! Deterministic discrete-event simulator.
//!
//! Events are processed in `(tick, insertion order)` order until the queue
//! drains or the tick limit is passed. Every random choice (link loss,
//! protocol nonces, emergency slot selection) comes from one ChaCha8 stream
//! seeded by the scenario, so a transcript is a pure function of the
//! scenario and its seed.

pub mod adversary;
pub mod transcript;

use std::collections::{BTreeMap, HashMap};

use crc::{Crc, CRC_16_MODBUS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::aga::{AgaPeer, AgaStatus};
use crate::broadcast::{
    BootstrapMessage, BroadcastPacket, BroadcastSchedule, KeyDisclosure, KeyOutcome, PacketVerdict,
    ReceiverBroadcastState, SenderBroadcastState, Tick, DISCLOSURE_TYPE, PACKET_TYPE,
};
use crate::crypto::{chain_generate, prf_hash, Digest, MasterSecret, BLOCK_LEN};
use crate::emergency::{
    emg_commit, fragment, AcceptOutcome, CommitmentTable, EmergencyReceiver, EmergencyReveal, EmergencySender, Reassembler,
};
use crate::error::Error;
use crate::p2p::{decode_auth_only, encode_auth_only, ChannelState, DeliveryMode, DeliveryStatus};
use crate::scenario::{ChannelKind, ChannelSpec, Scenario, ScenarioError, TrafficAction};
use crate::sync::{sync_complete, sync_initiate, sync_respond, SyncRequest, SyncResponse, SYNC_REQUEST_LEN, SYNC_REQUEST_TYPE, SYNC_RESPONSE_LEN, SYNC_RESPONSE_TYPE};

pub use adversary::{adversary_apply, Adversary, AdvEvent, Applied, Frame, FrameClass, FrameContext};
pub use transcript::{Direction, Origin, Transcript, TranscriptEvent};

const MODBUS_CRC: Crc<u16> = Crc::<u16>::new(&CRC_16_MODBUS);

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("simulation aborted: {0}")]
    Runtime(#[from] Error),
}

/// Validates `scenario` and runs it to completion.
pub fn sim_run(scenario: &Scenario) -> Result<Transcript, SimError> {
    Ok(Simulator::new(scenario)?.run()?)
}

#[derive(Debug)]
enum Event {
    Traffic(usize),
    Deliver { link: usize, frame: Frame },
    Disclose { channel: usize, interval: u32 },
    Timed { link: usize, index: usize },
}

struct LinkRt {
    id: String,
    endpoints: [String; 2],
    latency: u64,
    loss_rate: f64,
    adversary: Option<Adversary>,
}

struct BroadcastRt {
    sender: SenderBroadcastState,
    receiver: Option<ReceiverBroadcastState>,
    clock_error_bound: u64,
    /// Origin of each buffered packet, so settlement events can report it.
    origins: HashMap<Vec<u8>, (Origin, Option<String>)>,
    table_feed: Option<usize>,
}

struct EmergencyRt {
    sender: Option<EmergencySender>,
    receiver: EmergencyReceiver,
    reassembler: Reassembler,
    via: usize,
    u: u16,
    v: u16,
    expiry: Option<Vec<Vec<u64>>>,
    est_transit: u64,
    chunk: usize,
    auto_recommit: bool,
    generation: u64,
}

enum ChannelRt {
    Aga([AgaPeer; 2]),
    P2p([ChannelState; 2]),
    Broadcast(Box<BroadcastRt>),
    Emergency(Box<EmergencyRt>),
}

struct ChannelInfo {
    id: String,
    kind: ChannelKind,
    endpoints: [String; 2],
    link: usize,
    rt: ChannelRt,
}

impl ChannelInfo {
    fn side_of(&self, device: &str) -> Option<usize> {
        self.endpoints.iter().position(|e| e == device)
    }

    fn tesla_d(&self) -> Option<u32> {
        match &self.rt {
            ChannelRt::Broadcast(b) => Some(b.sender.schedule.d),
            _ => None,
        }
    }
}

fn derived_secret(seed: u64, label: &str, channel: &str) -> Digest {
    let mut pre = Vec::new();
    pre.extend_from_slice(b"sscada-sim/");
    pre.extend_from_slice(label.as_bytes());
    pre.push(0);
    pre.extend_from_slice(&seed.to_be_bytes());
    pre.extend_from_slice(channel.as_bytes());
    prf_hash(&pre)
}

fn secret_or_derived(hex_value: Option<&String>, seed: u64, label: &str, channel: &str) -> Digest {
    hex_value
        .and_then(|h| hex::decode(h).ok())
        .and_then(|b| <Digest>::try_from(b.as_slice()).ok())
        .unwrap_or_else(|| derived_secret(seed, label, channel))
}

/// A scenario being executed.
pub struct Simulator {
    scenario: Scenario,
    now: Tick,
    rng: ChaCha8Rng,
    queue: BTreeMap<(Tick, u64), Event>,
    next_seq: u64,
    offsets: HashMap<String, i64>,
    links: Vec<LinkRt>,
    channels: Vec<ChannelInfo>,
    channel_index: HashMap<String, usize>,
    /// p2p channel -> broadcast channel it bootstraps.
    bootstraps: HashMap<usize, usize>,
    transcript: Transcript,
}

impl Simulator {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        scenario.validate().map_err(ScenarioError::Invalid)?;
        let s = scenario.clone();
        let offsets = s.devices.iter().map(|d| (d.id.clone(), d.clock_offset)).collect();
        let links: Vec<LinkRt> = s
            .links
            .iter()
            .map(|l| LinkRt {
                id: l.id.clone(),
                endpoints: l.endpoints.clone(),
                latency: l.latency,
                loss_rate: l.loss_rate,
                adversary: l.adversary.clone().map(Adversary::new),
            })
            .collect();
        let channel_index: HashMap<String, usize> = s.channels.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();

        let mut channels = Vec::with_capacity(s.channels.len());
        for c in &s.channels {
            let link = s.link_of(c).and_then(|l| s.links.iter().position(|x| x.id == l.id)).expect("validated link");
            let kind = c.kind.expect("validated kind");
            let rt = Self::channel_runtime(&s, c, kind, &channel_index)?;
            channels.push(ChannelInfo { id: c.id.clone(), kind, endpoints: c.endpoints.clone(), link, rt });
        }
        let bootstraps = s
            .channels
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.bootstrap_via.as_ref().map(|b| (channel_index[b], i)))
            .collect();

        let mut sim = Simulator {
            rng: ChaCha8Rng::seed_from_u64(s.seed),
            scenario: s,
            now: 0,
            queue: BTreeMap::new(),
            next_seq: 0,
            offsets,
            links,
            channels,
            channel_index,
            bootstraps,
            transcript: Transcript::default(),
        };
        sim.schedule_initial();
        Ok(sim)
    }

    fn channel_runtime(
        s: &Scenario,
        c: &ChannelSpec,
        kind: ChannelKind,
        index: &HashMap<String, usize>,
    ) -> Result<ChannelRt, Error> {
        Ok(match kind {
            ChannelKind::Aga => {
                let master = MasterSecret::new(secret_or_derived(c.master.as_ref(), s.seed, "master", &c.id));
                let (a, b) = AgaPeer::pair(&master, c.shared_keys.unwrap_or(true));
                ChannelRt::Aga([a, b])
            }
            ChannelKind::P2p => {
                let master = MasterSecret::new(secret_or_derived(c.master.as_ref(), s.seed, "master", &c.id));
                let (a, b) = ChannelState::pair(&master, c.p2p_config())?;
                ChannelRt::P2p([a, b])
            }
            ChannelKind::Broadcast => {
                let n = c.chain_length.expect("validated");
                let schedule = BroadcastSchedule::new(c.t0.unwrap_or(0), c.delta.expect("validated"), c.d.expect("validated"), n)?;
                let chain = chain_generate(&secret_or_derived(c.chain_seed.as_ref(), s.seed, "chain", &c.id), n)?;
                let anchor = chain.anchor();
                let bound = c.clock_error_bound.unwrap_or(0);
                let receiver = c.bootstrap_via.is_none().then(|| ReceiverBroadcastState::new(anchor, schedule, bound));
                let table_feed = s
                    .channels
                    .iter()
                    .find(|e| e.kind.is_some_and(ChannelKind::is_emergency) && e.via.as_deref() == Some(c.id.as_str()))
                    .map(|e| index[&e.id]);
                ChannelRt::Broadcast(Box::new(BroadcastRt {
                    sender: SenderBroadcastState::new(chain, schedule)?,
                    receiver,
                    clock_error_bound: bound,
                    origins: HashMap::new(),
                    table_feed,
                }))
            }
            ChannelKind::EmergencyBasic | ChannelKind::EmergencyRevised => ChannelRt::Emergency(Box::new(EmergencyRt {
                sender: None,
                receiver: EmergencyReceiver::new(),
                reassembler: Reassembler::default(),
                via: index[c.via.as_ref().expect("validated")],
                u: c.u.expect("validated"),
                v: c.v.expect("validated"),
                expiry: c.expiry.clone(),
                est_transit: c.est_transit.unwrap_or(0),
                chunk: c.fragment.unwrap_or(crate::scenario::DEFAULT_FRAGMENT),
                auto_recommit: c.auto_recommit.unwrap_or(true),
                generation: 0,
            })),
        })
    }

    fn schedule(&mut self, tick: Tick, event: Event) {
        if tick > self.scenario.tick_limit {
            return;
        }
        self.queue.insert((tick, self.next_seq), event);
        self.next_seq += 1;
    }

    fn schedule_initial(&mut self) {
        for i in 0..self.scenario.traffic.len() {
            self.schedule(self.scenario.traffic[i].tick, Event::Traffic(i));
        }
        for link in 0..self.links.len() {
            let timed: Vec<Tick> = self.links[link]
                .adversary
                .as_ref()
                .map(|a| a.spec().timed.iter().map(|t| t.at).collect())
                .unwrap_or_default();
            for (index, at) in timed.into_iter().enumerate() {
                self.schedule(at, Event::Timed { link, index });
            }
        }
        for channel in 0..self.channels.len() {
            let ChannelRt::Broadcast(b) = &self.channels[channel].rt else { continue };
            let schedule = b.sender.schedule;
            let offset = self.offsets[&self.channels[channel].endpoints[0]];
            for interval in 1..=schedule.chain_length {
                let local = schedule.interval_start(interval as u64) as i128;
                let global = local - offset as i128;
                if global > self.scenario.tick_limit as i128 {
                    break;
                }
                self.schedule(global.max(0) as Tick, Event::Disclose { channel, interval });
            }
        }
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    /// Global time plus the device's clock offset, floored at zero.
    pub fn clock_read(&self, device: &str) -> Option<Tick> {
        let offset = *self.offsets.get(device)?;
        Some((self.now as i128 + offset as i128).max(0) as Tick)
    }

    fn local(&self, device: &str) -> Tick {
        self.clock_read(device).expect("validated device")
    }

    pub fn run(mut self) -> Result<Transcript, Error> {
        while let Some(((tick, _), event)) = self.queue.pop_first() {
            self.now = tick;
            match event {
                Event::Traffic(i) => self.on_traffic(i)?,
                Event::Deliver { link, frame } => self.on_deliver(link, frame)?,
                Event::Disclose { channel, interval } => self.on_disclose(channel, interval)?,
                Event::Timed { link, index } => self.on_timed(link, index)?,
            }
        }
        Ok(self.transcript)
    }

    fn emit(&mut self, e: TranscriptEvent) {
        self.transcript.push(e);
    }

    fn send_error(&mut self, device: &str, channel: &str, e: &Error, note: Option<String>) {
        let ev = TranscriptEvent::new(self.now, device, Direction::Tx, vec![], "SEND_ERROR")
            .chan(channel)
            .detail("reason", e.code())
            .note(note);
        self.emit(ev);
    }

    /// Hands a frame from `side` of channel `ci` to its link.
    fn transmit(
        &mut self,
        ci: usize,
        side: usize,
        bytes: Vec<u8>,
        class: FrameClass,
        detail: Vec<(String, String)>,
        note: Option<String>,
    ) -> Result<(), Error> {
        let ch = &self.channels[ci];
        let (from, to) = (ch.endpoints[side].clone(), ch.endpoints[1 - side].clone());
        let (id, link, ctx) = (ch.id.clone(), ch.link, FrameContext { kind: ch.kind, tesla_d: ch.tesla_d() });
        let mut ev = TranscriptEvent::new(self.now, from.clone(), Direction::Tx, bytes.clone(), "SENT").chan(id.clone());
        ev.detail = detail;
        let lost = {
            let rate = self.links[link].loss_rate;
            rate > 0.0 && self.rng.gen_bool(rate)
        };
        if lost {
            ev = ev.detail("lost", "true");
        }
        self.emit(ev.note(note.clone()));
        if lost {
            return Ok(());
        }
        let frame = Frame { bytes, channel: id, class, from, to, origin: Origin::Honest, note };
        self.route(link, frame, ctx)
    }

    fn route(&mut self, link: usize, frame: Frame, ctx: FrameContext) -> Result<(), Error> {
        let now = self.now;
        let l = &mut self.links[link];
        let latency = l.latency;
        let applied = match l.adversary.as_mut() {
            Some(adv) => adv.apply(frame, now, latency, ctx)?,
            None => Applied { deliveries: vec![(now + latency, frame)], events: vec![] },
        };
        self.apply_outcome(link, applied);
        Ok(())
    }

    fn apply_outcome(&mut self, link: usize, applied: Applied) {
        let device = format!("adv:{}", self.links[link].id);
        let channel = applied.deliveries.first().map(|(_, f)| f.channel.clone());
        for e in applied.events {
            let mut ev = TranscriptEvent::new(self.now, device.clone(), Direction::Adv, e.bytes, e.action);
            if let Some(c) = &channel {
                ev = ev.chan(c.clone());
            }
            ev.detail = e.detail;
            self.emit(ev.note(e.note));
        }
        for (at, frame) in applied.deliveries {
            self.schedule(at, Event::Deliver { link, frame });
        }
    }

    fn on_timed(&mut self, link: usize, index: usize) -> Result<(), Error> {
        let l = &mut self.links[link];
        let to = l.adversary.as_ref().expect("timed entry").spec().timed[index].to.clone();
        let from = if l.endpoints[0] == to { l.endpoints[1].clone() } else { l.endpoints[0].clone() };
        let latency = l.latency;
        let applied = l.adversary.as_mut().expect("timed entry").fire_timed(index, self.now, latency, &from)?;
        self.apply_outcome(link, applied);
        Ok(())
    }

    fn on_disclose(&mut self, ci: usize, interval: u32) -> Result<(), Error> {
        let ChannelRt::Broadcast(b) = &self.channels[ci].rt else { unreachable!("disclosure on non-broadcast channel") };
        let disc = b.sender.disclosure(interval as u64)?;
        self.transmit(ci, 0, disc.to_bytes(), FrameClass::Data, vec![("key".into(), interval.to_string())], None)
    }

    fn on_traffic(&mut self, i: usize) -> Result<(), Error> {
        let t = self.scenario.traffic[i].clone();
        let ci = self.channel_index[&t.channel];
        let side = self.channels[ci].side_of(&t.device).expect("validated endpoint");
        let local = self.local(&t.device);
        let payload = t.payload_bytes();
        let note = t.note.clone();
        let rng = &mut self.rng;

        let sent: Result<(Vec<u8>, FrameClass), Error> = match (&mut self.channels[ci].rt, t.action) {
            (ChannelRt::Aga(peers), TrafficAction::Send) => {
                let mut p = payload;
                let padded = p.len().max(1).div_ceil(BLOCK_LEN) * BLOCK_LEN;
                p.resize(padded, 0);
                peers[side].sender.encrypt(&p).map(|f| (f.to_bytes(), FrameClass::Data))
            }
            (ChannelRt::P2p(states), TrafficAction::Send) => {
                let mut msg = payload;
                if states[side].config.mode == DeliveryMode::M1 {
                    let crc = MODBUS_CRC.checksum(&msg);
                    msg.extend_from_slice(&crc.to_le_bytes());
                }
                states[side].send(&msg).map(|f| (f.to_bytes(), FrameClass::Data))
            }
            (ChannelRt::P2p(states), TrafficAction::SendAuth) => {
                states[side].send_auth_only(&payload).map(|(m, tag)| (encode_auth_only(&m, &tag), FrameClass::AuthOnly))
            }
            (ChannelRt::P2p(_), TrafficAction::SendPlain) => Ok((payload, FrameClass::Plain)),
            (ChannelRt::P2p(states), TrafficAction::Sync) => Ok((sync_initiate(&mut states[side], rng).to_bytes(), FrameClass::Data)),
            (ChannelRt::Broadcast(b), TrafficAction::Send) => b.sender.send(local, &payload).map(|p| (p.to_bytes(), FrameClass::Data)),
            (ChannelRt::Broadcast(b), TrafficAction::Bootstrap) => {
                let msg = match b.sender.bootstrap_message(local) {
                    Ok(m) => m,
                    Err(e) => {
                        self.send_error(&t.device, &t.channel, &e, note);
                        return Ok(());
                    }
                };
                let via = self.channel_index[self.scenario.channels[ci].bootstrap_via.as_ref().expect("validated")];
                let vside = self.channels[via].side_of(&t.device).expect("validated endpoint");
                let ChannelRt::P2p(states) = &mut self.channels[via].rt else { unreachable!("bootstrap carrier is p2p") };
                return match states[vside].send(&msg.to_bytes()) {
                    Ok(f) => {
                        let detail = vec![("bootstrap".into(), self.channels[ci].id.clone())];
                        self.transmit(via, vside, f.to_bytes(), FrameClass::Data, detail, note)
                    }
                    Err(e) => {
                        let id = self.channels[via].id.clone();
                        self.send_error(&t.device, &id, &e, note);
                        Ok(())
                    }
                };
            }
            (ChannelRt::Emergency(_), TrafficAction::Commit) => return self.commit(ci, &t.device, note),
            (ChannelRt::Emergency(em), TrafficAction::Emit) => {
                let msg = t.msg.expect("validated");
                let out = match em.sender.as_mut() {
                    None => Err(Error::Protocol("emit before any commitment".into())),
                    Some(s) => s.emit(rng, msg, local, em.est_transit),
                };
                let recommit = em.auto_recommit && em.sender.as_ref().is_some_and(EmergencySender::needs_recommit);
                match out {
                    Ok(reveal) => {
                        let detail = vec![("msg".into(), msg.to_string()), ("use".into(), reveal.use_index.to_string())];
                        self.transmit(ci, side, reveal.to_bytes(), FrameClass::Data, detail, note)?;
                    }
                    Err(e) => self.send_error(&t.device, &t.channel, &e, note),
                }
                if recommit {
                    self.commit(ci, &t.device, Some("automatic re-commit".into()))?;
                }
                return Ok(());
            }
            (_, action) => unreachable!("validated traffic action {action:?}"),
        };
        match sent {
            Ok((bytes, class)) => self.transmit(ci, side, bytes, class, vec![], note),
            Err(e) => {
                self.send_error(&t.device, &t.channel, &e, note);
                Ok(())
            }
        }
    }

    /// Commits a new generation on emergency channel `ci` and broadcasts
    /// the table in fragments over its broadcast channel.
    fn commit(&mut self, ci: usize, device: &str, note: Option<String>) -> Result<(), Error> {
        let local = self.local(device);
        let rng = &mut self.rng;
        let ChannelRt::Emergency(em) = &mut self.channels[ci].rt else { unreachable!("commit on non-emergency channel") };
        let grid: Option<Vec<Vec<Tick>>> =
            em.expiry.as_ref().map(|g| g.iter().map(|row| row.iter().map(|o| local + o).collect()).collect());
        em.generation += 1;
        let generation = em.generation;
        let (sender, table) = emg_commit(rng, em.u, em.v, grid.as_deref(), generation)?;
        em.sender = Some(sender);
        let (via, chunk) = (em.via, em.chunk);
        let frags = fragment(&table.to_bytes(), chunk)?;
        let total = frags.len();
        for (k, f) in frags.into_iter().enumerate() {
            let ChannelRt::Broadcast(b) = &self.channels[via].rt else { unreachable!("validated via") };
            match b.sender.send(local, &f) {
                Ok(p) => {
                    let detail = vec![
                        ("table".into(), self.channels[ci].id.clone()),
                        ("generation".into(), generation.to_string()),
                        ("fragment".into(), format!("{}/{total}", k + 1)),
                    ];
                    self.transmit(via, 0, p.to_bytes(), FrameClass::Data, detail, note.clone())?;
                }
                Err(e) => {
                    let id = self.channels[via].id.clone();
                    self.send_error(device, &id, &e, note.clone());
                }
            }
        }
        Ok(())
    }

    fn on_deliver(&mut self, _link: usize, frame: Frame) -> Result<(), Error> {
        let ci = self.channel_index[&frame.channel];
        let local = self.local(&frame.to);
        let base = TranscriptEvent::new(self.now, frame.to.clone(), Direction::Rx, frame.bytes.clone(), "")
            .chan(frame.channel.clone())
            .origin(frame.origin)
            .note(frame.note.clone());
        let status = |s: &str| TranscriptEvent { status: s.to_string(), ..base.clone() };
        let Some(side) = self.channels[ci].side_of(&frame.to) else {
            self.emit(status("IGNORED"));
            return Ok(());
        };
        let kind = self.channels[ci].kind;
        let one_way = matches!(kind, ChannelKind::Broadcast) || kind.is_emergency();
        if one_way && side != 1 {
            self.emit(status("IGNORED"));
            return Ok(());
        }

        match &mut self.channels[ci].rt {
            ChannelRt::Aga(peers) => {
                let ev = match peers[side].receiver.receive_bytes(&frame.bytes) {
                    Ok(out) => {
                        let seq = u32::from_be_bytes(frame.bytes[..4].try_into().expect("parsed frame"));
                        let mut ev = status(out.status.as_str()).detail("seq", seq);
                        if !out.delivered_plaintext.is_empty() {
                            ev = ev.delivered(out.delivered_plaintext);
                        }
                        if out.status == AgaStatus::MacFailed {
                            ev = ev.detail("recv_seq", peers[side].receiver.recv_seq);
                        }
                        ev
                    }
                    Err(e) => status("FRAME_ERROR").detail("reason", e.code()),
                };
                self.emit(ev);
            }
            ChannelRt::P2p(states) => {
                let st = &mut states[side];
                let b = &frame.bytes;
                let is_sync_req = frame.class == FrameClass::Data && b.len() == SYNC_REQUEST_LEN && b[0] == SYNC_REQUEST_TYPE;
                let is_sync_resp = frame.class == FrameClass::Data && b.len() == SYNC_RESPONSE_LEN && b[0] == SYNC_RESPONSE_TYPE;
                if is_sync_req {
                    let req = SyncRequest::parse(b)?;
                    let resp = sync_respond(st, &req);
                    self.emit(status("SYNC_REQUEST"));
                    let detail = vec![("counter".into(), resp.counter.to_string())];
                    return self.transmit(ci, side, resp.to_bytes(), FrameClass::Data, detail, None);
                }
                if is_sync_resp {
                    let resp = SyncResponse::parse(b)?;
                    let ev = match sync_complete(st, &resp) {
                        Ok(true) => status("SYNC_OK").detail("recv_counter", st.recv_counter),
                        Ok(false) => status("SYNC_REJECTED"),
                        Err(_) => status("SYNC_UNSOLICITED"),
                    };
                    self.emit(ev);
                    return Ok(());
                }
                let mode = st.config.mode;
                let result = match frame.class {
                    FrameClass::Data => st.receive_bytes(b),
                    FrameClass::AuthOnly => decode_auth_only(b).and_then(|(m, tag)| st.receive_auth_only(&m, &tag)),
                    FrameClass::Plain => {
                        self.emit(status("PASSTHROUGH").delivered(b.clone()));
                        return Ok(());
                    }
                };
                let r = match result {
                    Ok(r) => r,
                    Err(e) => {
                        self.emit(status("FRAME_ERROR").detail("reason", e.code()));
                        return Ok(());
                    }
                };
                let mut ev = status(r.status.as_str());
                if let Some(c) = r.counter_used {
                    ev = ev.detail("counter", c);
                }
                let mut delivered = r.plaintext;
                if let (Some(p), DeliveryMode::M1, FrameClass::Data) = (delivered.as_mut(), mode, frame.class) {
                    let ok = p.len() >= 2 && {
                        let (m, c) = p.split_at(p.len() - 2);
                        MODBUS_CRC.checksum(m).to_le_bytes() == c
                    };
                    if ok {
                        p.truncate(p.len() - 2);
                    }
                    ev = ev.detail("crc", if ok { "ok" } else { "bad" });
                }
                let accepted = r.status == DeliveryStatus::Accepted;
                if let Some(p) = &delivered {
                    ev = ev.delivered(p.clone());
                }
                self.emit(ev);
                if let (true, Some(p), Some(&bc)) = (accepted, delivered, self.bootstraps.get(&ci)) {
                    self.install_bootstrap(bc, &frame, &p);
                }
            }
            ChannelRt::Broadcast(b) => {
                let Some(rx) = b.receiver.as_mut() else {
                    self.emit(status("NO_BOOTSTRAP"));
                    return Ok(());
                };
                match frame.bytes.first() {
                    Some(&PACKET_TYPE) => {
                        let ev = match BroadcastPacket::parse(&frame.bytes) {
                            Err(e) => status("FRAME_ERROR").detail("reason", e.code()),
                            Ok(p) => {
                                let interval = p.interval;
                                match rx.receive_packet(local, p) {
                                    Ok(v) => {
                                        if v == PacketVerdict::Buffered {
                                            b.origins.insert(frame.bytes.clone(), (frame.origin, frame.note.clone()));
                                        }
                                        status(v.as_str()).detail("interval", interval)
                                    }
                                    Err(e) => status(e.code()),
                                }
                            }
                        };
                        self.emit(ev);
                    }
                    Some(&DISCLOSURE_TYPE) => {
                        let disc = match KeyDisclosure::parse(&frame.bytes) {
                            Ok(d) => d,
                            Err(e) => {
                                self.emit(status("FRAME_ERROR").detail("reason", e.code()));
                                return Ok(());
                            }
                        };
                        match rx.receive_key(&disc) {
                            Ok(KeyOutcome::Stale) => self.emit(status("KEY_STALE").detail("key", disc.interval)),
                            Err(_) => self.emit(status("KEY_REJECTED").detail("key", disc.interval)),
                            Ok(KeyOutcome::Accepted(settled)) => {
                                let feed = b.table_feed;
                                let mut events = vec![status("KEY_ACCEPTED").detail("key", disc.interval)];
                                let mut tables = Vec::new();
                                for (p, a) in settled {
                                    let bytes = p.to_bytes();
                                    let (origin, note) = b.origins.remove(&bytes).unwrap_or((Origin::Honest, None));
                                    let mut ev = TranscriptEvent::new(self.now, frame.to.clone(), Direction::Rx, bytes, a.as_str())
                                        .chan(frame.channel.clone())
                                        .origin(origin)
                                        .detail("interval", p.interval)
                                        .note(note);
                                    if a == crate::broadcast::Authenticity::Authentic {
                                        ev = ev.delivered(p.payload.clone());
                                        tables.push(p.payload);
                                    }
                                    events.push(ev);
                                }
                                for e in events {
                                    self.emit(e);
                                }
                                if let Some(em) = feed {
                                    for payload in tables {
                                        self.feed_table(em, &frame.to, &payload);
                                    }
                                }
                            }
                        }
                    }
                    _ => self.emit(status("FRAME_ERROR").detail("reason", "TYPE")),
                }
            }
            ChannelRt::Emergency(em) => {
                let ev = match EmergencyReveal::parse(&frame.bytes) {
                    Err(e) => status("FRAME_ERROR").detail("reason", e.code()),
                    Ok(r) => {
                        let ev = match em.receiver.accept(&r, local) {
                            AcceptOutcome::Accepted(e) => status("ACCEPTED").delivered(e),
                            AcceptOutcome::Rejected(reason) => status(&format!("REJECTED_{}", reason.as_str())),
                        };
                        let ev = ev.detail("msg", r.msg_index).detail("use", r.use_index).detail("local", local);
                        match r.expiry {
                            Some(t) => ev.detail("expiry", t),
                            None => ev,
                        }
                    }
                };
                self.emit(ev);
            }
        }
        Ok(())
    }

    fn install_bootstrap(&mut self, bc: usize, frame: &Frame, plaintext: &[u8]) {
        if self.channels[bc].endpoints[1] != frame.to {
            return;
        }
        let id = self.channels[bc].id.clone();
        let ChannelRt::Broadcast(b) = &mut self.channels[bc].rt else { unreachable!("bootstrap target is broadcast") };
        let base = TranscriptEvent::new(self.now, frame.to.clone(), Direction::Rx, plaintext.to_vec(), "").chan(id);
        let ev = match BootstrapMessage::parse(plaintext).and_then(|m| ReceiverBroadcastState::from_bootstrap(&m, b.clock_error_bound)) {
            Ok(rx) => {
                let ev = TranscriptEvent { status: "BOOTSTRAPPED".into(), ..base }.detail("key", rx.latest_key.index);
                b.receiver = Some(rx);
                ev
            }
            Err(e) => TranscriptEvent { status: "BOOTSTRAP_REJECTED".into(), ..base }.detail("reason", e.code()),
        };
        self.emit(ev);
    }

    fn feed_table(&mut self, ci: usize, device: &str, fragment_bytes: &[u8]) {
        let id = self.channels[ci].id.clone();
        let ChannelRt::Emergency(em) = &mut self.channels[ci].rt else { unreachable!("table feed is emergency") };
        let base = TranscriptEvent::new(self.now, device, Direction::Rx, vec![], "").chan(id);
        let ev = match em.reassembler.push(fragment_bytes) {
            Ok(None) => return,
            Ok(Some(whole)) => match CommitmentTable::parse(&whole, 0) {
                Ok(table) => {
                    let entries = table.entries.len();
                    em.receiver.install(table);
                    let generation = em.receiver.table().map_or(0, |t| t.generation);
                    TranscriptEvent { status: "TABLE_INSTALLED".into(), ..base }
                        .detail("generation", generation)
                        .detail("entries", entries)
                }
                Err(e) => TranscriptEvent { status: "TABLE_REJECTED".into(), ..base }.detail("reason", e.code()),
            },
            Err(e) => TranscriptEvent { status: "TABLE_REJECTED".into(), ..base }.detail("reason", e.code()),
        };
        self.emit(ev);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> Scenario {
        Scenario::from_toml_str(text).unwrap()
    }

    const P2P_HONEST: &str = r#"
seed = 11
tick_limit = 10000

[[devices]]
id = "cc"
role = "master"

[[devices]]
id = "rtu"
role = "slave"

[[links]]
id = "wire"
endpoints = ["cc", "rtu"]
latency = 3

[[channels]]
id = "p"
kind = "p2p"
endpoints = ["cc", "rtu"]
"#;

    fn with_sends(base: &str, n: usize) -> String {
        let mut s = base.to_string();
        for i in 0..n {
            s.push_str(&format!(
                "\n[[traffic]]\ntick = {}\ndevice = \"cc\"\nchannel = \"p\"\naction = \"send\"\npayload = \"msg {i}\"\n",
                10 + i * 10
            ));
        }
        s
    }

    #[test]
    fn empty_scenario_gives_empty_transcript() {
        let t = sim_run(&scenario("seed = 1\ntick_limit = 100\n")).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn honest_p2p_accepts_in_order() {
        let t = sim_run(&scenario(&with_sends(P2P_HONEST, 10))).unwrap();
        let rx: Vec<_> = t.received().collect();
        assert_eq!(rx.len(), 10);
        for (i, e) in rx.iter().enumerate() {
            assert_eq!(e.status, "ACCEPTED");
            assert_eq!(e.delivered.as_deref(), Some(format!("msg {i}").as_bytes()));
            assert_eq!(e.tick, 13 + 10 * i as u64);
        }
    }

    #[test]
    fn deterministic() {
        let s = scenario(&with_sends(&P2P_HONEST.replace("latency = 3", "latency = 3\nloss_rate = 0.4"), 30));
        let a = sim_run(&s).unwrap().to_text();
        assert_eq!(a, sim_run(&s).unwrap().to_text());
        let mut other = s.clone();
        other.seed += 1;
        assert_ne!(a, sim_run(&other).unwrap().to_text());
    }

    #[test]
    fn clock_offsets() {
        let text = P2P_HONEST.replace("role = \"slave\"", "role = \"slave\"\nclock_offset = 5").replace(
            "role = \"master\"",
            "role = \"master\"\nclock_offset = -3",
        );
        let mut sim = Simulator::new(&scenario(&text)).unwrap();
        sim.now = 10;
        assert_eq!(sim.clock_read("rtu"), Some(15));
        assert_eq!(sim.clock_read("cc"), Some(7));
        assert_eq!(sim.clock_read("rtu").unwrap() - sim.clock_read("cc").unwrap(), 8);
        sim.now = 1;
        assert_eq!(sim.clock_read("cc"), Some(0));
        assert_eq!(sim.clock_read("nobody"), None);
    }

    #[test]
    fn tick_limit_cuts_off() {
        let text = with_sends(P2P_HONEST, 10).replace("tick_limit = 10000", "tick_limit = 52");
        let t = sim_run(&scenario(&text)).unwrap();
        // Sends at 10..=50, arrivals at 13..=53: the last arrival is dropped.
        assert_eq!(t.events.iter().filter(|e| e.dir == Direction::Tx).count(), 5);
        assert_eq!(t.received().count(), 4);
    }

    #[test]
    fn sync_over_the_link() {
        let mut text = with_sends(P2P_HONEST, 3);
        text.push_str("\n[[traffic]]\ntick = 100\ndevice = \"rtu\"\nchannel = \"p\"\naction = \"sync\"\n");
        let t = sim_run(&scenario(&text)).unwrap();
        let statuses: Vec<&str> = t.received().map(|e| e.status.as_str()).collect();
        assert_eq!(statuses, ["ACCEPTED", "ACCEPTED", "ACCEPTED", "SYNC_REQUEST", "SYNC_OK"]);
        assert!(t.events.last().unwrap().line().contains("recv_counter=3"));
    }

    #[test]
    fn m1_crc_check() {
        let text = with_sends(P2P_HONEST, 1).replace("endpoints = [\"cc\", \"rtu\"]\n\n[[traffic", "endpoints = [\"cc\", \"rtu\"]\nmode = \"m1\"\n\n[[traffic");
        let t = sim_run(&scenario(&text)).unwrap();
        let rx = t.received().next().unwrap();
        assert_eq!(rx.delivered.as_deref(), Some(&b"msg 0"[..]));
        assert!(rx.line().contains("crc=ok"));
    }
}
