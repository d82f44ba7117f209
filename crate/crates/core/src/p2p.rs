//! Counter-based authenticated point-to-point channel.
//!
//! Each direction has its own cipher key, MAC key and 128-bit counter. The
//! counter is the CBC IV and never travels on the wire; the receiver finds
//! it by trying a small forward window of candidates against the keyed
//! prefix `c̄ = last l bits of H(BE128(counter))` carried at the front of the
//! plaintext. Wire frame: `[ciphertext: 16n][tag: 16 if MAC enabled]`.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::crypto::{
    aes_decrypt_block, cbc_decrypt, cbc_encrypt, derive_direction_keys, mac_compute, mac_verify,
    prf_hash, Block, CipherKey, DirectionKeys, MacKey, MasterSecret, Tag, BLOCK_LEN, TAG_LEN,
};
use crate::error::{Error, Result};

pub type Counter128 = u128;

pub const DEFAULT_PREFIX_BITS: u32 = 32;
pub const DEFAULT_WINDOW: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Endpoint `A`: sends with the A→B keys.
    Master,
    /// Endpoint `B`.
    Slave,
}

/// When decrypted bytes are released relative to MAC verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeliveryMode {
    /// Deliver right after the prefix check; the tag is ignored and the
    /// downstream CRC is the only integrity check.
    M1,
    /// Deliver only after the tag verifies.
    M2,
    /// Deliver right away, verify the tag afterwards and flag a resync on
    /// failure.
    M3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelConfig {
    pub mode: DeliveryMode,
    /// Prefix length `l` in bits: a multiple of 8 in `32..=128`.
    pub prefix_bits: u32,
    pub mac_enabled: bool,
    /// Number of candidate counters tried, starting at the receive counter.
    pub window: u32,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { mode: DeliveryMode::M2, prefix_bits: DEFAULT_PREFIX_BITS, mac_enabled: true, window: DEFAULT_WINDOW }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prefix_bits < 32 || self.prefix_bits > 128 || !self.prefix_bits.is_multiple_of(8) {
            return Err(Error::InvalidArgument(format!(
                "prefix_bits must be a multiple of 8 in 32..=128, got {}",
                self.prefix_bits
            )));
        }
        if self.window == 0 {
            return Err(Error::InvalidArgument("window must be at least 1".into()));
        }
        if !self.mac_enabled && self.mode != DeliveryMode::M1 {
            return Err(Error::InvalidArgument(format!("mode {:?} requires the MAC", self.mode)));
        }
        Ok(())
    }

    fn prefix_len(&self) -> usize {
        (self.prefix_bits / 8) as usize
    }
}

/// Message classes a channel can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgClass {
    Encrypted,
    AuthOnly,
    PassThrough,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P2pFrame {
    pub ciphertext: Vec<u8>,
    pub tag: Option<Tag>,
}

impl P2pFrame {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.ciphertext.clone();
        if let Some(t) = &self.tag {
            out.extend_from_slice(t);
        }
        out
    }

    pub fn parse(bytes: &[u8], mac_enabled: bool) -> Result<Self> {
        let tag_len = if mac_enabled { TAG_LEN } else { 0 };
        if bytes.len() < BLOCK_LEN + tag_len || !(bytes.len() - tag_len).is_multiple_of(BLOCK_LEN) {
            return Err(Error::Frame(format!(
                "p2p frame length {} does not fit 16n{}",
                bytes.len(),
                if mac_enabled { " + 16" } else { "" }
            )));
        }
        let split = bytes.len() - tag_len;
        Ok(Self {
            ciphertext: bytes[..split].to_vec(),
            tag: mac_enabled.then(|| bytes[split..].try_into().expect("16 bytes")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryStatus {
    Accepted,
    PrefixRejected,
    MacFailedLogged,
    MacFailedSuppressed,
    /// Prefix matched but the CBC padding did not.
    PaddingRejected,
}

impl DeliveryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DeliveryStatus::Accepted => "ACCEPTED",
            DeliveryStatus::PrefixRejected => "PREFIX_REJECTED",
            DeliveryStatus::MacFailedLogged => "MAC_FAILED_LOGGED",
            DeliveryStatus::MacFailedSuppressed => "MAC_FAILED_SUPPRESSED",
            DeliveryStatus::PaddingRejected => "PADDING_REJECTED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryResult {
    pub plaintext: Option<Vec<u8>>,
    pub status: DeliveryStatus,
    /// Counter the frame was matched to, if any.
    pub counter_used: Option<Counter128>,
}

impl DeliveryResult {
    fn rejected(status: DeliveryStatus) -> Self {
        Self { plaintext: None, status, counter_used: None }
    }
}

/// The keyed counter check value `c̄` for `counter`.
pub fn counter_prefix(counter: Counter128, prefix_bits: u32) -> Vec<u8> {
    let h = prf_hash(&counter.to_be_bytes());
    h[h.len() - (prefix_bits / 8) as usize..].to_vec()
}

fn iv_for(counter: Counter128) -> Block {
    counter.to_be_bytes()
}

fn mac_input(counter: Counter128, body: &[u8]) -> Vec<u8> {
    let mut m = Vec::with_capacity(16 + body.len());
    m.extend_from_slice(&counter.to_be_bytes());
    m.extend_from_slice(body);
    m
}

/// One endpoint of a point-to-point channel.
#[derive(Debug, Clone)]
pub struct ChannelState {
    keys: DirectionKeys,
    pub role: Role,
    pub config: ChannelConfig,
    pub send_counter: Counter128,
    pub recv_counter: Counter128,
    /// Raised when a matched frame failed its MAC.
    pub resync_needed: bool,
    pub(crate) pending_sync: Option<[u8; 16]>,
}

impl ChannelState {
    pub fn new(master: &MasterSecret, role: Role, config: ChannelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            keys: derive_direction_keys(master),
            role,
            config,
            send_counter: 0,
            recv_counter: 0,
            resync_needed: false,
            pending_sync: None,
        })
    }

    /// Both endpoints of a channel sharing `master`.
    pub fn pair(master: &MasterSecret, config: ChannelConfig) -> Result<(Self, Self)> {
        Ok((Self::new(master, Role::Master, config)?, Self::new(master, Role::Slave, config)?))
    }

    pub fn send_enc_key(&self) -> &CipherKey {
        match self.role {
            Role::Master => &self.keys.enc_a_to_b,
            Role::Slave => &self.keys.enc_b_to_a,
        }
    }

    pub fn send_mac_key(&self) -> &MacKey {
        match self.role {
            Role::Master => &self.keys.mac_a_to_b,
            Role::Slave => &self.keys.mac_b_to_a,
        }
    }

    pub fn recv_enc_key(&self) -> &CipherKey {
        match self.role {
            Role::Master => &self.keys.enc_b_to_a,
            Role::Slave => &self.keys.enc_a_to_b,
        }
    }

    pub fn recv_mac_key(&self) -> &MacKey {
        match self.role {
            Role::Master => &self.keys.mac_b_to_a,
            Role::Slave => &self.keys.mac_a_to_b,
        }
    }

    pub fn pending_sync_nonce(&self) -> Option<[u8; 16]> {
        self.pending_sync
    }

    fn take_send_counter(&mut self) -> Result<Counter128> {
        let c = self.send_counter;
        self.send_counter = c.checked_add(1).ok_or(Error::CounterExhausted)?;
        Ok(c)
    }

    fn window(&self) -> impl Iterator<Item = Counter128> {
        let start = self.recv_counter;
        (0..self.config.window as u128).map_while(move |off| start.checked_add(off))
    }

    fn advance_past(&mut self, counter: Counter128) {
        // A counter of u128::MAX can only be matched, never sent past.
        self.recv_counter = counter.saturating_add(1);
    }

    /// Encrypts `c̄ ‖ message` under the current send counter.
    pub fn send(&mut self, message: &[u8]) -> Result<P2pFrame> {
        let counter = self.take_send_counter()?;
        let mut body = counter_prefix(counter, self.config.prefix_bits);
        body.extend_from_slice(message);
        let ciphertext = cbc_encrypt(self.send_enc_key(), &iv_for(counter), &body);
        let tag = self
            .config
            .mac_enabled
            .then(|| mac_compute(self.send_mac_key(), &mac_input(counter, &ciphertext)));
        Ok(P2pFrame { ciphertext, tag })
    }

    pub fn receive(&mut self, frame: &P2pFrame) -> Result<DeliveryResult> {
        if frame.ciphertext.is_empty() || !frame.ciphertext.len().is_multiple_of(BLOCK_LEN) {
            return Err(Error::Frame("ciphertext must be whole blocks".into()));
        }
        if self.config.mac_enabled != frame.tag.is_some() {
            return Err(Error::Frame("tag presence does not match channel configuration".into()));
        }
        let first: Block = frame.ciphertext[..BLOCK_LEN].try_into().expect("one block");
        let raw = aes_decrypt_block(self.recv_enc_key(), &first);
        let plen = self.config.prefix_len();
        let matched = self.window().find(|&c| {
            let iv = iv_for(c);
            let head: Vec<u8> = raw[..plen].iter().zip(&iv[..plen]).map(|(a, b)| a ^ b).collect();
            head == counter_prefix(c, self.config.prefix_bits)
        });
        let Some(counter) = matched else {
            return Ok(DeliveryResult::rejected(DeliveryStatus::PrefixRejected));
        };
        // The prefix proves the peer really used this counter, so the window
        // moves past it whatever the MAC says. A later copy of the same
        // frame can then never match again.
        self.advance_past(counter);

        let tag_ok = match &frame.tag {
            Some(tag) if self.config.mode != DeliveryMode::M1 => {
                Some(mac_verify(self.recv_mac_key(), &mac_input(counter, &frame.ciphertext), tag)?)
            }
            _ => None,
        };
        if self.config.mode == DeliveryMode::M2 && tag_ok == Some(false) {
            self.resync_needed = true;
            return Ok(DeliveryResult {
                plaintext: None,
                status: DeliveryStatus::MacFailedSuppressed,
                counter_used: Some(counter),
            });
        }
        let plaintext = match cbc_decrypt(self.recv_enc_key(), &iv_for(counter), &frame.ciphertext) {
            Ok(mut p) => p.split_off(plen),
            Err(Error::Padding) => {
                return Ok(DeliveryResult {
                    plaintext: None,
                    status: DeliveryStatus::PaddingRejected,
                    counter_used: Some(counter),
                })
            }
            Err(e) => return Err(e),
        };
        let status = if tag_ok == Some(false) {
            self.resync_needed = true;
            DeliveryStatus::MacFailedLogged
        } else {
            DeliveryStatus::Accepted
        };
        Ok(DeliveryResult { plaintext: Some(plaintext), status, counter_used: Some(counter) })
    }

    pub fn receive_bytes(&mut self, bytes: &[u8]) -> Result<DeliveryResult> {
        let frame = P2pFrame::parse(bytes, self.config.mac_enabled)?;
        self.receive(&frame)
    }

    /// Authentication without encryption: the tag binds the counter, and the
    /// counter still advances.
    pub fn send_auth_only(&mut self, message: &[u8]) -> Result<(Vec<u8>, Tag)> {
        let counter = self.take_send_counter()?;
        let tag = mac_compute(self.send_mac_key(), &mac_input(counter, message));
        Ok((message.to_vec(), tag))
    }

    pub fn receive_auth_only(&mut self, message: &[u8], tag: &Tag) -> Result<DeliveryResult> {
        let key = *self.recv_mac_key();
        let mut found = None;
        for c in self.window() {
            if mac_verify(&key, &mac_input(c, message), tag)? {
                found = Some(c);
                break;
            }
        }
        match found {
            Some(c) => {
                self.advance_past(c);
                Ok(DeliveryResult { plaintext: Some(message.to_vec()), status: DeliveryStatus::Accepted, counter_used: Some(c) })
            }
            None => Ok(DeliveryResult::rejected(DeliveryStatus::MacFailedSuppressed)),
        }
    }
}

/// Auth-only wire form: `message ‖ tag`.
pub fn encode_auth_only(message: &[u8], tag: &Tag) -> Vec<u8> {
    let mut out = message.to_vec();
    out.extend_from_slice(tag);
    out
}

pub fn decode_auth_only(bytes: &[u8]) -> Result<(Vec<u8>, Tag)> {
    if bytes.len() < TAG_LEN {
        return Err(Error::Frame(format!("auth-only frame of {} bytes has no room for a tag", bytes.len())));
    }
    let split = bytes.len() - TAG_LEN;
    Ok((bytes[..split].to_vec(), bytes[split..].try_into().expect("16 bytes")))
}

pub fn channel_passthrough(message: &[u8]) -> Vec<u8> {
    message.to_vec()
}

/// Session key establishment from a long-term master secret: the initiator
/// sends a nonce; the responder returns a fresh session secret encrypted
/// under its B→A key (IV 0) and a MAC over `nonce ‖ ciphertext`.
pub mod session {
    use super::*;

    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct SessionRequest {
        pub nonce: [u8; 16],
    }

    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct SessionResponse {
        pub ciphertext: Vec<u8>,
        pub tag: Tag,
    }

    pub fn request<R: RngCore>(rng: &mut R) -> SessionRequest {
        let mut nonce = [0u8; 16];
        rng.fill_bytes(&mut nonce);
        SessionRequest { nonce }
    }

    pub fn respond<R: RngCore>(master: &MasterSecret, req: &SessionRequest, rng: &mut R) -> (SessionResponse, MasterSecret) {
        let keys = derive_direction_keys(master);
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        let ciphertext = cbc_encrypt(&keys.enc_b_to_a, &[0u8; 16], &secret);
        let tag = mac_compute(&keys.mac_b_to_a, &[&req.nonce[..], &ciphertext].concat());
        (SessionResponse { ciphertext, tag }, MasterSecret::new(secret))
    }

    pub fn accept(master: &MasterSecret, req: &SessionRequest, resp: &SessionResponse) -> Result<MasterSecret> {
        let keys = derive_direction_keys(master);
        if !mac_verify(&keys.mac_b_to_a, &[&req.nonce[..], &resp.ciphertext].concat(), &resp.tag)? {
            return Err(Error::Protocol("session response does not authenticate".into()));
        }
        let secret = cbc_decrypt(&keys.enc_b_to_a, &[0u8; 16], &resp.ciphertext)?;
        MasterSecret::from_slice(&secret)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair(mode: DeliveryMode) -> (ChannelState, ChannelState) {
        let cfg = ChannelConfig { mode, ..ChannelConfig::default() };
        ChannelState::pair(&MasterSecret::new([0x5a; 32]), cfg).unwrap()
    }

    #[test]
    fn config_validation() {
        let m = MasterSecret::new([0; 32]);
        for bad in [
            ChannelConfig { prefix_bits: 24, ..Default::default() },
            ChannelConfig { prefix_bits: 36, ..Default::default() },
            ChannelConfig { prefix_bits: 136, ..Default::default() },
            ChannelConfig { window: 0, ..Default::default() },
            ChannelConfig { mac_enabled: false, ..Default::default() },
        ] {
            assert!(ChannelState::new(&m, Role::Master, bad).is_err(), "{bad:?}");
        }
        let ok = ChannelConfig { mode: DeliveryMode::M1, mac_enabled: false, prefix_bits: 128, ..Default::default() };
        assert!(ChannelState::new(&m, Role::Master, ok).is_ok());
    }

    #[test]
    fn empty_message_round_trip() {
        let (mut a, mut b) = pair(DeliveryMode::M2);
        let f = a.send(b"").unwrap();
        assert_eq!(f.ciphertext.len(), 16);
        assert_eq!(a.send_counter, 1);
        let r = b.receive(&f).unwrap();
        assert_eq!(r.status, DeliveryStatus::Accepted);
        assert_eq!(r.plaintext.unwrap(), b"");
        assert_eq!(r.counter_used, Some(0));
    }

    #[test]
    fn repeated_message_encrypts_differently() {
        let (mut a, _) = pair(DeliveryMode::M2);
        let f1 = a.send(b"shut down").unwrap();
        let f2 = a.send(b"shut down").unwrap();
        assert_ne!(f1.ciphertext, f2.ciphertext);
        assert_ne!(f1.tag, f2.tag);
    }

    #[test]
    fn window_search_skips_lost_frames() {
        let (mut a, mut b) = pair(DeliveryMode::M2);
        for _ in 0..3 {
            a.send(b"lost").unwrap();
        }
        let f = a.send(b"arrives").unwrap();
        let r = b.receive(&f).unwrap();
        assert_eq!(r.status, DeliveryStatus::Accepted);
        assert_eq!(r.counter_used, Some(3));
        assert_eq!(b.recv_counter, 4);
    }

    #[test]
    fn gap_beyond_window_rejected() {
        let (mut a, mut b) = pair(DeliveryMode::M2);
        for _ in 0..8 {
            a.send(b"lost").unwrap();
        }
        let f = a.send(b"too far").unwrap();
        assert_eq!(b.receive(&f).unwrap().status, DeliveryStatus::PrefixRejected);
        assert_eq!(b.recv_counter, 0);
    }

    #[test]
    fn replay_after_acceptance_rejected() {
        for mode in [DeliveryMode::M1, DeliveryMode::M2, DeliveryMode::M3] {
            let (mut a, mut b) = pair(mode);
            let f = a.send(b"open").unwrap();
            assert_eq!(b.receive(&f).unwrap().status, DeliveryStatus::Accepted);
            let r = b.receive(&f).unwrap();
            assert_eq!(r.status, DeliveryStatus::PrefixRejected, "{mode:?}");
            assert!(r.plaintext.is_none());
        }
    }

    #[test]
    fn tampered_tag_by_mode() {
        for (mode, status, delivered) in [
            (DeliveryMode::M1, DeliveryStatus::Accepted, true),
            (DeliveryMode::M2, DeliveryStatus::MacFailedSuppressed, false),
            (DeliveryMode::M3, DeliveryStatus::MacFailedLogged, true),
        ] {
            let (mut a, mut b) = pair(mode);
            let mut f = a.send(b"close").unwrap();
            f.tag.as_mut().unwrap()[15] ^= 1;
            let r = b.receive(&f).unwrap();
            assert_eq!(r.status, status, "{mode:?}");
            assert_eq!(r.plaintext.is_some(), delivered);
            assert_eq!(b.recv_counter, 1);
            assert_eq!(b.resync_needed, mode != DeliveryMode::M1);
            // The untampered original is now stale.
            f.tag.as_mut().unwrap()[15] ^= 1;
            assert_eq!(b.receive(&f).unwrap().status, DeliveryStatus::PrefixRejected);
        }
    }

    #[test]
    fn direction_separation() {
        let (mut a, mut b) = pair(DeliveryMode::M2);
        let f = a.send(b"to b").unwrap();
        // Reflected into A's own receive path.
        assert_eq!(a.receive(&f).unwrap().status, DeliveryStatus::PrefixRejected);
        let g = b.send(b"to a").unwrap();
        assert_eq!(b.receive(&g).unwrap().status, DeliveryStatus::PrefixRejected);
        assert_eq!(a.receive(&g).unwrap().status, DeliveryStatus::Accepted);
    }

    #[test]
    fn frame_parsing() {
        assert!(P2pFrame::parse(&[0u8; 31], true).is_err());
        assert!(P2pFrame::parse(&[0u8; 16], true).is_err());
        assert!(P2pFrame::parse(&[0u8; 32], true).is_ok());
        assert!(P2pFrame::parse(&[0u8; 16], false).is_ok());
        assert!(P2pFrame::parse(&[0u8; 17], false).is_err());
        let (mut a, mut b) = pair(DeliveryMode::M2);
        let f = a.send(b"abc").unwrap();
        assert_eq!(P2pFrame::parse(&f.to_bytes(), true).unwrap(), f);
        assert!(b.receive(&P2pFrame { ciphertext: f.ciphertext.clone(), tag: None }).is_err());
    }

    #[test]
    fn counter_exhaustion() {
        let (mut a, mut b) = pair(DeliveryMode::M2);
        a.send_counter = u128::MAX - 1;
        b.recv_counter = u128::MAX - 1;
        let f = a.send(b"last").unwrap();
        assert_eq!(a.send_counter, u128::MAX);
        assert!(matches!(a.send(b"over"), Err(Error::CounterExhausted)));
        assert!(matches!(a.send_auth_only(b"over"), Err(Error::CounterExhausted)));
        assert_eq!(b.receive(&f).unwrap().status, DeliveryStatus::Accepted);
    }

    #[test]
    fn auth_only_mode() {
        let (mut a, mut b) = pair(DeliveryMode::M2);
        a.send_counter = 5;
        b.recv_counter = 5;
        let (m, t) = a.send_auth_only(b"status?").unwrap();
        assert_eq!(a.send_counter, 6);
        let r = b.receive_auth_only(&m, &t).unwrap();
        assert_eq!(r.status, DeliveryStatus::Accepted);
        assert_eq!(r.counter_used, Some(5));
        assert_eq!(b.receive_auth_only(&m, &t).unwrap().status, DeliveryStatus::MacFailedSuppressed);
        // Wrong direction.
        assert_eq!(a.receive_auth_only(&m, &t).unwrap().status, DeliveryStatus::MacFailedSuppressed);
        // Bit flip.
        let (mut m2, t2) = a.send_auth_only(b"status?").unwrap();
        m2[0] ^= 1;
        assert_eq!(b.receive_auth_only(&m2, &t2).unwrap().status, DeliveryStatus::MacFailedSuppressed);
        assert_eq!(b.recv_counter, 6);
        // After two more losses.
        a.send_auth_only(b"x").unwrap();
        let (m3, t3) = a.send_auth_only(b"y").unwrap();
        let r = b.receive_auth_only(&m3, &t3).unwrap();
        assert_eq!(r.status, DeliveryStatus::Accepted);
        assert_eq!(r.counter_used, Some(8));
        let wire = encode_auth_only(&m3, &t3);
        assert_eq!(decode_auth_only(&wire).unwrap(), (m3, t3));
        assert!(decode_auth_only(&[0u8; 15]).is_err());
    }

    #[test]
    fn passthrough_is_identity() {
        assert_eq!(channel_passthrough(b"poll"), b"poll");
        assert_eq!(channel_passthrough(b""), b"");
        assert_eq!(channel_passthrough(&[0, 255, 7]), vec![0, 255, 7]);
    }

    #[test]
    fn session_establishment() {
        let master = MasterSecret::new([0x33; 32]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let req = session::request(&mut rng);
        let (resp, secret_b) = session::respond(&master, &req, &mut rng);
        let secret_a = session::accept(&master, &req, &resp).unwrap();
        assert_eq!(secret_a, secret_b);
        let other = session::request(&mut rng);
        assert!(session::accept(&master, &other, &resp).is_err());
        let mut bad = resp.clone();
        bad.ciphertext[0] ^= 1;
        assert!(session::accept(&master, &req, &bad).is_err());
    }

    #[test]
    fn random_garbage_rarely_matches_prefix() {
        let (_, mut b) = pair(DeliveryMode::M2);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20_000 {
            let mut bytes = vec![0u8; 48];
            rng.fill_bytes(&mut bytes);
            let r = b.receive_bytes(&bytes).unwrap();
            assert_eq!(r.status, DeliveryStatus::PrefixRejected);
        }
    }

    proptest! {
        #[test]
        fn round_trip_any_message(msg in proptest::collection::vec(any::<u8>(), 0..300),
                                  bits in prop::sample::select(vec![32u32, 64, 96, 128])) {
            let cfg = ChannelConfig { prefix_bits: bits, ..ChannelConfig::default() };
            let (mut a, mut b) = ChannelState::pair(&MasterSecret::new([1; 32]), cfg).unwrap();
            let f = a.send(&msg).unwrap();
            let r = b.receive_bytes(&f.to_bytes()).unwrap();
            prop_assert_eq!(r.status, DeliveryStatus::Accepted);
            prop_assert_eq!(r.plaintext.unwrap(), msg);
        }
    }
}
