//! Two-message counter synchronization.
//!
//! ```text
//! A -> B: N_A
//! B -> A: C_B, MAC(K'_BA, N_A || C_B)
//! ```
//!
//! `C_B` is the responder's send counter; the initiator overwrites its
//! receive counter with it. Each direction is synchronized by its own
//! exchange.

use rand::RngCore;

use crate::crypto::{mac_compute, mac_verify, Tag, TAG_LEN};
use crate::error::{Error, Result};
use crate::p2p::{ChannelState, Counter128};

pub const SYNC_REQUEST_TYPE: u8 = 0x53;
pub const SYNC_RESPONSE_TYPE: u8 = 0x54;
pub const SYNC_REQUEST_LEN: usize = 17;
pub const SYNC_RESPONSE_LEN: usize = 1 + 16 + TAG_LEN;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncRequest {
    pub nonce: [u8; 16],
}

impl SyncRequest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SYNC_REQUEST_LEN);
        out.push(SYNC_REQUEST_TYPE);
        out.extend_from_slice(&self.nonce);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != SYNC_REQUEST_LEN || bytes[0] != SYNC_REQUEST_TYPE {
            return Err(Error::Frame("not a sync request".into()));
        }
        Ok(Self { nonce: bytes[1..].try_into().expect("16 bytes") })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncResponse {
    pub counter: Counter128,
    pub tag: Tag,
}

impl SyncResponse {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SYNC_RESPONSE_LEN);
        out.push(SYNC_RESPONSE_TYPE);
        out.extend_from_slice(&self.counter.to_be_bytes());
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != SYNC_RESPONSE_LEN || bytes[0] != SYNC_RESPONSE_TYPE {
            return Err(Error::Frame("not a sync response".into()));
        }
        Ok(Self {
            counter: u128::from_be_bytes(bytes[1..17].try_into().expect("16 bytes")),
            tag: bytes[17..].try_into().expect("16 bytes"),
        })
    }
}

fn binding(nonce: &[u8; 16], counter: Counter128) -> [u8; 32] {
    let mut m = [0u8; 32];
    m[..16].copy_from_slice(nonce);
    m[16..].copy_from_slice(&counter.to_be_bytes());
    m
}

/// Draws a fresh nonce and records it as pending. A new initiation
/// replaces any earlier pending nonce.
pub fn sync_initiate<R: RngCore>(state: &mut ChannelState, rng: &mut R) -> SyncRequest {
    let mut nonce = [0u8; 16];
    rng.fill_bytes(&mut nonce);
    state.pending_sync = Some(nonce);
    SyncRequest { nonce }
}

pub fn sync_respond(state: &ChannelState, request: &SyncRequest) -> SyncResponse {
    let counter = state.send_counter;
    SyncResponse { counter, tag: mac_compute(state.send_mac_key(), &binding(&request.nonce, counter)) }
}

/// Returns `Ok(false)` and leaves the state untouched when the response
/// does not authenticate against the pending nonce.
pub fn sync_complete(state: &mut ChannelState, response: &SyncResponse) -> Result<bool> {
    let nonce = state
        .pending_sync
        .ok_or_else(|| Error::Protocol("sync response without a pending request".into()))?;
    if !mac_verify(state.recv_mac_key(), &binding(&nonce, response.counter), &response.tag)? {
        return Ok(false);
    }
    state.recv_counter = response.counter;
    state.pending_sync = None;
    state.resync_needed = false;
    Ok(true)
}

pub fn sync_abort(state: &mut ChannelState) {
    state.pending_sync = None;
}

/// Runs one exchange in each direction over a lossless path.
pub fn sync_bootstrap<R: RngCore>(a: &mut ChannelState, b: &mut ChannelState, rng: &mut R) -> Result<()> {
    let req = sync_initiate(a, rng);
    if !sync_complete(a, &sync_respond(b, &req))? {
        return Err(Error::Protocol("sync response from B failed to verify".into()));
    }
    let req = sync_initiate(b, rng);
    if !sync_complete(b, &sync_respond(a, &req))? {
        return Err(Error::Protocol("sync response from A failed to verify".into()));
    }
    Ok(())
}
