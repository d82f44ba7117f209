//! The AGA draft point-to-point protocol, kept faithful to its flaws.
//!
//! Frames are `seq ‖ c_1 … c_n ‖ a` with
//! `c_j = E_k[p_j XOR E_k[BE32(seq) ‖ BE32(j) ‖ 0^8]]` and `a = MAC_k'[BE32(seq) ‖ P]`.
//! The receiver checks the sequence number, forwards decrypted plaintext
//! immediately, and only then checks the MAC. A MAC failure is logged but
//! leaves the receive sequence untouched, which is what the replay attack
//! in [`attack_replay`] exploits.

use crate::crypto::{
    aes_decrypt_block, aes_encrypt_block, derive_direction_keys, mac_compute, mac_verify,
    xor_block, Block, CipherKey, MacKey, MasterSecret, Tag, BLOCK_LEN, TAG_LEN,
};
use crate::error::{Error, Result};

const SEQ_LEN: usize = 4;

/// Smallest valid frame: sequence number, one block, tag.
pub const MIN_FRAME_LEN: usize = SEQ_LEN + BLOCK_LEN + TAG_LEN;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgaFrame {
    pub seq: u32,
    pub blocks: Vec<u8>,
    pub tag: Tag,
}

impl AgaFrame {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SEQ_LEN + self.blocks.len() + TAG_LEN);
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.blocks);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MIN_FRAME_LEN || !(bytes.len() - SEQ_LEN - TAG_LEN).is_multiple_of(BLOCK_LEN) {
            return Err(Error::Frame(format!("AGA frame length {} is not 4 + 16n + 16", bytes.len())));
        }
        let seq = u32::from_be_bytes(bytes[..SEQ_LEN].try_into().expect("4 bytes"));
        let tag_at = bytes.len() - TAG_LEN;
        Ok(Self {
            seq,
            blocks: bytes[SEQ_LEN..tag_at].to_vec(),
            tag: bytes[tag_at..].try_into().expect("16 bytes"),
        })
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len() / BLOCK_LEN
    }
}

/// `BE32(i) ‖ BE32(j) ‖ 0^8`, the counter block for block `j` of message `i`.
pub fn pad_block(seq: u32, block_index: u32) -> Block {
    let mut b = [0u8; BLOCK_LEN];
    b[..4].copy_from_slice(&seq.to_be_bytes());
    b[4..8].copy_from_slice(&block_index.to_be_bytes());
    b
}

fn mac_input(seq: u32, plaintext: &[u8]) -> Vec<u8> {
    let mut m = Vec::with_capacity(SEQ_LEN + plaintext.len());
    m.extend_from_slice(&seq.to_be_bytes());
    m.extend_from_slice(plaintext);
    m
}

#[derive(Debug, Clone)]
pub struct AgaSenderState {
    pub enc_key: CipherKey,
    pub mac_key: MacKey,
    pub send_seq: u32,
}

impl AgaSenderState {
    pub fn new(enc_key: CipherKey, mac_key: MacKey) -> Self {
        Self { enc_key, mac_key, send_seq: 1 }
    }

    /// Encrypts a plaintext whose length is a positive multiple of 16.
    pub fn encrypt(&mut self, plaintext: &[u8]) -> Result<AgaFrame> {
        if plaintext.is_empty() || !plaintext.len().is_multiple_of(BLOCK_LEN) {
            return Err(Error::InvalidArgument(format!(
                "AGA plaintext length {} is not a positive multiple of 16",
                plaintext.len()
            )));
        }
        let seq = self.send_seq;
        let next = seq.checked_add(1).ok_or(Error::SequenceExhausted)?;
        let mut blocks = Vec::with_capacity(plaintext.len());
        for (j, p) in plaintext.chunks_exact(BLOCK_LEN).enumerate() {
            let mask = aes_encrypt_block(&self.enc_key, &pad_block(seq, j as u32 + 1));
            let p: Block = p.try_into().expect("exact chunk");
            blocks.extend_from_slice(&aes_encrypt_block(&self.enc_key, &xor_block(&p, &mask)));
        }
        let tag = mac_compute(&self.mac_key, &mac_input(seq, plaintext));
        self.send_seq = next;
        Ok(AgaFrame { seq, blocks, tag })
    }
}

/// Decrypts the blocks of `frame` without any checks.
pub fn decrypt_blocks(enc_key: &CipherKey, frame: &AgaFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.blocks.len());
    for (j, c) in frame.blocks.chunks_exact(BLOCK_LEN).enumerate() {
        let mask = aes_encrypt_block(enc_key, &pad_block(frame.seq, j as u32 + 1));
        let c: Block = c.try_into().expect("exact chunk");
        out.extend_from_slice(&xor_block(&aes_decrypt_block(enc_key, &c), &mask));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgaStatus {
    Accepted,
    SeqRejected,
    MacFailed,
}

impl AgaStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AgaStatus::Accepted => "ACCEPTED",
            AgaStatus::SeqRejected => "SEQ_REJECTED",
            AgaStatus::MacFailed => "MAC_FAILED",
        }
    }
}

/// What the receiving device forwarded to the SCADA side, and the verdict.
/// For `MacFailed` the plaintext has already gone out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgaReceiveOutcome {
    pub delivered_plaintext: Vec<u8>,
    pub status: AgaStatus,
}

#[derive(Debug, Clone)]
pub struct AgaReceiverState {
    pub enc_key: CipherKey,
    pub mac_key: MacKey,
    pub recv_seq: u32,
}

impl AgaReceiverState {
    pub fn new(enc_key: CipherKey, mac_key: MacKey) -> Self {
        Self { enc_key, mac_key, recv_seq: 0 }
    }

    pub fn receive(&mut self, frame: &AgaFrame) -> Result<AgaReceiveOutcome> {
        if frame.blocks.is_empty() || !frame.blocks.len().is_multiple_of(BLOCK_LEN) {
            return Err(Error::Frame("AGA frame must carry whole blocks".into()));
        }
        if frame.seq <= self.recv_seq {
            return Ok(AgaReceiveOutcome { delivered_plaintext: Vec::new(), status: AgaStatus::SeqRejected });
        }
        let plaintext = decrypt_blocks(&self.enc_key, frame);
        let status = if mac_verify(&self.mac_key, &mac_input(frame.seq, &plaintext), &frame.tag)? {
            self.recv_seq = frame.seq;
            AgaStatus::Accepted
        } else {
            AgaStatus::MacFailed
        };
        Ok(AgaReceiveOutcome { delivered_plaintext: plaintext, status })
    }

    pub fn receive_bytes(&mut self, bytes: &[u8]) -> Result<AgaReceiveOutcome> {
        self.receive(&AgaFrame::parse(bytes)?)
    }
}

/// Both directions of one AGA endpoint.
#[derive(Debug, Clone)]
pub struct AgaPeer {
    pub sender: AgaSenderState,
    pub receiver: AgaReceiverState,
}

impl AgaPeer {
    /// Builds the two endpoints of a link. With `shared_keys` both
    /// directions use the same key pair, as the draft does.
    pub fn pair(master: &MasterSecret, shared_keys: bool) -> (AgaPeer, AgaPeer) {
        let k = derive_direction_keys(master);
        let (ab, ba) = if shared_keys {
            ((k.enc_a_to_b, k.mac_a_to_b), (k.enc_a_to_b, k.mac_a_to_b))
        } else {
            ((k.enc_a_to_b, k.mac_a_to_b), (k.enc_b_to_a, k.mac_b_to_a))
        };
        let a = AgaPeer {
            sender: AgaSenderState::new(ab.0, ab.1),
            receiver: AgaReceiverState::new(ba.0, ba.1),
        };
        let b = AgaPeer {
            sender: AgaSenderState::new(ba.0, ba.1),
            receiver: AgaReceiverState::new(ab.0, ab.1),
        };
        (a, b)
    }
}

/// Flips the lowest bit of the last tag byte.
pub fn flip_tag_bit(frame: &AgaFrame) -> AgaFrame {
    let mut f = frame.clone();
    f.tag[TAG_LEN - 1] ^= 0x01;
    f
}

/// Replays `log[chosen]` to a receiver whose sequence state was frozen by
/// earlier tag tampering. With `tamper` the tag is flipped again so the
/// receiver stays frozen and the attack can be repeated.
pub fn attack_replay(
    log: &[AgaFrame],
    receiver: &mut AgaReceiverState,
    chosen: usize,
    tamper: bool,
) -> Result<AgaReceiveOutcome> {
    let frame = log
        .get(chosen)
        .ok_or_else(|| Error::InvalidArgument(format!("no logged frame at index {chosen}")))?;
    if tamper {
        receiver.receive(&flip_tag_bit(frame))
    } else {
        receiver.receive(frame)
    }
}

/// Reflects a frame sent by an endpoint back into that endpoint's own
/// receive path.
pub fn cross_direction_replay(frame: &AgaFrame, receiver_of_sender: &mut AgaReceiverState) -> Result<AgaReceiveOutcome> {
    receiver_of_sender.receive(frame)
}
