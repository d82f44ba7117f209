//! Commitment-based emergency channels for a finite set of messages.
//!
//! The sender commits to `u` messages, `v` uses each, by publishing
//! `r_ij = H(BE16(i) ‖ N_ij)` (basic) or `H(BE16(i) ‖ N_ij ‖ BE64(T_ij))`
//! (revised, with expiry) over the authenticated broadcast channel. Sending
//! message `i` later just reveals `(i, j, N_ij[, T_ij])`; a receiver accepts
//! it once per slot, and in the revised channel only before `T_ij`.
//!
//! Wire forms:
//! - reveal `[0x45][BE16 i][BE16 j][nonce:16][BE64 expiry, revised only]`
//! - table `[0x43][BE16 u][BE16 v][u·v × (r:32 ‖ BE64 expiry, revised only)]`
//! - table fragment `[BE16 seq][BE16 total][chunk]`

use rand::{Rng, RngCore};

use crate::broadcast::Tick;
use crate::crypto::{prf_hash, Digest, DIGEST_LEN};
use crate::error::{Error, Result};

pub const REVEAL_TYPE: u8 = 0x45;
pub const TABLE_TYPE: u8 = 0x43;
pub const NONCE_LEN: usize = 16;
pub const DEFAULT_FRAGMENT_CHUNK: usize = 240;

const BASIC_REVEAL_LEN: usize = 1 + 2 + 2 + NONCE_LEN;

/// Encoding of emergency message `e_i`.
pub fn encode_message(i: u16) -> [u8; 2] {
    i.to_be_bytes()
}

pub fn commitment_digest(i: u16, nonce: &[u8; NONCE_LEN], expiry: Option<Tick>) -> Digest {
    let mut pre = Vec::with_capacity(2 + NONCE_LEN + 8);
    pre.extend_from_slice(&encode_message(i));
    pre.extend_from_slice(nonce);
    if let Some(t) = expiry {
        pre.extend_from_slice(&t.to_be_bytes());
    }
    prf_hash(&pre)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmergencyMessageSet {
    pub u: u16,
    pub v: u16,
}

impl EmergencyMessageSet {
    pub fn new(u: u16, v: u16) -> Result<Self> {
        if u == 0 || v == 0 {
            return Err(Error::InvalidArgument(format!("need u >= 1 and v >= 1, got u={u} v={v}")));
        }
        Ok(Self { u, v })
    }

    fn slot(&self, i: u16, j: u16) -> Option<usize> {
        ((1..=self.u).contains(&i) && (1..=self.v).contains(&j))
            .then(|| (i as usize - 1) * self.v as usize + (j as usize - 1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commitment {
    pub msg_index: u16,
    pub use_index: u16,
    pub r: Digest,
    pub expiry: Option<Tick>,
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitmentTable {
    pub set: EmergencyMessageSet,
    /// Row-major by message, then use.
    pub entries: Vec<Commitment>,
    pub generation: u64,
}

impl CommitmentTable {
    pub fn is_revised(&self) -> bool {
        self.entries.first().is_some_and(|c| c.expiry.is_some())
    }

    pub fn entry(&self, i: u16, j: u16) -> Option<&Commitment> {
        self.set.slot(i, j).map(|s| &self.entries[s])
    }

    pub fn unused_count(&self) -> usize {
        self.entries.iter().filter(|c| !c.used).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let revised = self.is_revised();
        let per = DIGEST_LEN + if revised { 8 } else { 0 };
        let mut out = Vec::with_capacity(5 + per * self.entries.len());
        out.push(TABLE_TYPE);
        out.extend_from_slice(&self.set.u.to_be_bytes());
        out.extend_from_slice(&self.set.v.to_be_bytes());
        for c in &self.entries {
            out.extend_from_slice(&c.r);
            if let Some(t) = c.expiry {
                out.extend_from_slice(&t.to_be_bytes());
            }
        }
        out
    }

    /// Parses a table; whether expiries are present follows from the length.
    pub fn parse(bytes: &[u8], generation: u64) -> Result<Self> {
        if bytes.len() < 5 || bytes[0] != TABLE_TYPE {
            return Err(Error::Frame("not a commitment table".into()));
        }
        let u = u16::from_be_bytes([bytes[1], bytes[2]]);
        let v = u16::from_be_bytes([bytes[3], bytes[4]]);
        let set = EmergencyMessageSet::new(u, v).map_err(|e| Error::Frame(e.to_string()))?;
        let n = u as usize * v as usize;
        let body = &bytes[5..];
        let revised = match body.len() {
            l if l == n * DIGEST_LEN => false,
            l if l == n * (DIGEST_LEN + 8) => true,
            l => return Err(Error::Frame(format!("table body of {l} bytes does not fit {u}x{v} entries"))),
        };
        let per = if revised { DIGEST_LEN + 8 } else { DIGEST_LEN };
        let entries = body
            .chunks_exact(per)
            .enumerate()
            .map(|(k, c)| Commitment {
                msg_index: (k / v as usize) as u16 + 1,
                use_index: (k % v as usize) as u16 + 1,
                r: c[..DIGEST_LEN].try_into().expect("32 bytes"),
                expiry: revised.then(|| u64::from_be_bytes(c[DIGEST_LEN..].try_into().expect("8 bytes"))),
                used: false,
            })
            .collect();
        Ok(Self { set, entries, generation })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmergencyReveal {
    pub msg_index: u16,
    pub use_index: u16,
    pub nonce: [u8; NONCE_LEN],
    pub expiry: Option<Tick>,
}

impl EmergencyReveal {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BASIC_REVEAL_LEN + 8);
        out.push(REVEAL_TYPE);
        out.extend_from_slice(&self.msg_index.to_be_bytes());
        out.extend_from_slice(&self.use_index.to_be_bytes());
        out.extend_from_slice(&self.nonce);
        if let Some(t) = self.expiry {
            out.extend_from_slice(&t.to_be_bytes());
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.first() != Some(&REVEAL_TYPE) || (bytes.len() != BASIC_REVEAL_LEN && bytes.len() != BASIC_REVEAL_LEN + 8) {
            return Err(Error::Frame("not an emergency reveal".into()));
        }
        Ok(Self {
            msg_index: u16::from_be_bytes([bytes[1], bytes[2]]),
            use_index: u16::from_be_bytes([bytes[3], bytes[4]]),
            nonce: bytes[5..BASIC_REVEAL_LEN].try_into().expect("16 bytes"),
            expiry: (bytes.len() > BASIC_REVEAL_LEN)
                .then(|| u64::from_be_bytes(bytes[BASIC_REVEAL_LEN..].try_into().expect("8 bytes"))),
        })
    }

    pub fn digest(&self) -> Digest {
        commitment_digest(self.msg_index, &self.nonce, self.expiry)
    }
}

/// Sender side of one commitment generation.
#[derive(Debug, Clone)]
pub struct EmergencySender {
    pub set: EmergencyMessageSet,
    nonces: Vec<[u8; NONCE_LEN]>,
    expiries: Option<Vec<Tick>>,
    used: Vec<bool>,
    pub generation: u64,
}

/// Draws the nonce grid and computes the table to broadcast. `expiry_grid`
/// (one row per message, strictly increasing) selects the revised channel.
pub fn emg_commit<R: RngCore>(
    rng: &mut R,
    u: u16,
    v: u16,
    expiry_grid: Option<&[Vec<Tick>]>,
    generation: u64,
) -> Result<(EmergencySender, CommitmentTable)> {
    let set = EmergencyMessageSet::new(u, v)?;
    let expiries = match expiry_grid {
        None => None,
        Some(grid) => {
            if grid.len() != u as usize {
                return Err(Error::InvalidArgument(format!("expiry grid has {} rows, expected {u}", grid.len())));
            }
            for (i, row) in grid.iter().enumerate() {
                if row.len() != v as usize {
                    return Err(Error::InvalidArgument(format!("expiry row {} has {} entries, expected {v}", i + 1, row.len())));
                }
                if row.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidArgument(format!("expiries of message {} are not strictly increasing", i + 1)));
                }
            }
            Some(grid.iter().flatten().copied().collect::<Vec<_>>())
        }
    };
    let n = u as usize * v as usize;
    let nonces: Vec<[u8; NONCE_LEN]> = (0..n)
        .map(|_| {
            let mut b = [0u8; NONCE_LEN];
            rng.fill_bytes(&mut b);
            b
        })
        .collect();
    let entries = (0..n)
        .map(|k| {
            let i = (k / v as usize) as u16 + 1;
            let expiry = expiries.as_ref().map(|e| e[k]);
            Commitment {
                msg_index: i,
                use_index: (k % v as usize) as u16 + 1,
                r: commitment_digest(i, &nonces[k], expiry),
                expiry,
                used: false,
            }
        })
        .collect();
    let sender = EmergencySender { set, nonces, expiries, used: vec![false; n], generation };
    Ok((sender, CommitmentTable { set, entries, generation }))
}

impl EmergencySender {
    pub fn is_revised(&self) -> bool {
        self.expiries.is_some()
    }

    pub fn unused_uses(&self, i: u16) -> usize {
        (1..=self.set.v).filter(|&j| !self.used[self.set.slot(i, j).expect("in range")]).count()
    }

    /// True once some message is down to its last unused slot.
    pub fn needs_recommit(&self) -> bool {
        (1..=self.set.u).any(|i| self.unused_uses(i) <= 1)
    }

    /// Picks a slot for message `i`: uniformly among unused slots in the
    /// basic channel; in the revised channel the unused slot with the
    /// earliest expiry that still leaves `est_transit` ticks of headroom.
    pub fn emit<R: Rng>(&mut self, rng: &mut R, i: u16, now: Tick, est_transit: u64) -> Result<EmergencyReveal> {
        if !(1..=self.set.u).contains(&i) {
            return Err(Error::InvalidArgument(format!("message index {i} outside 1..={}", self.set.u)));
        }
        let unused: Vec<u16> = (1..=self.set.v).filter(|&j| !self.used[self.set.slot(i, j).expect("in range")]).collect();
        if unused.is_empty() {
            return Err(Error::UsesExhausted(self.set.v, i));
        }
        let j = match &self.expiries {
            None => unused[rng.gen_range(0..unused.len())],
            Some(exp) => unused
                .iter()
                .copied()
                .filter(|&j| now.saturating_add(est_transit) < exp[self.set.slot(i, j).expect("in range")])
                .min_by_key(|&j| exp[self.set.slot(i, j).expect("in range")])
                .ok_or(Error::NoValidWindow(i))?,
        };
        let s = self.set.slot(i, j).expect("in range");
        self.used[s] = true;
        Ok(EmergencyReveal {
            msg_index: i,
            use_index: j,
            nonce: self.nonces[s],
            expiry: self.expiries.as_ref().map(|e| e[s]),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    NoMatch,
    AlreadyUsed,
    Expired,
    NoTable,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::NoMatch => "NO_MATCH",
            RejectReason::AlreadyUsed => "ALREADY_USED",
            RejectReason::Expired => "EXPIRED",
            RejectReason::NoTable => "NO_TABLE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AcceptOutcome {
    /// Carries the encoded message `e_i`.
    Accepted(Vec<u8>),
    Rejected(RejectReason),
}

#[derive(Debug, Clone, Default)]
pub struct EmergencyReceiver {
    table: Option<CommitmentTable>,
    installs: u64,
}

impl EmergencyReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn table(&self) -> Option<&CommitmentTable> {
        self.table.as_ref()
    }

    /// Replaces whatever table was installed before.
    pub fn install(&mut self, mut table: CommitmentTable) {
        self.installs += 1;
        table.generation = self.installs;
        self.table = Some(table);
    }

    pub fn accept(&mut self, reveal: &EmergencyReveal, now: Tick) -> AcceptOutcome {
        use AcceptOutcome::Rejected;
        let Some(table) = self.table.as_mut() else {
            return Rejected(RejectReason::NoTable);
        };
        let Some(slot) = table.set.slot(reveal.msg_index, reveal.use_index) else {
            return Rejected(RejectReason::NoMatch);
        };
        let entry = &mut table.entries[slot];
        if entry.used {
            return Rejected(RejectReason::AlreadyUsed);
        }
        if entry.expiry != reveal.expiry || reveal.digest() != entry.r {
            return Rejected(RejectReason::NoMatch);
        }
        if let Some(t) = entry.expiry {
            if now >= t {
                return Rejected(RejectReason::Expired);
            }
        }
        entry.used = true;
        AcceptOutcome::Accepted(encode_message(reveal.msg_index).to_vec())
    }
}

/// Splits a serialized table into broadcast-sized fragments.
pub fn fragment(table_bytes: &[u8], chunk: usize) -> Result<Vec<Vec<u8>>> {
    if chunk == 0 {
        return Err(Error::InvalidArgument("fragment chunk must be positive".into()));
    }
    let parts: Vec<&[u8]> = table_bytes.chunks(chunk).collect();
    let total = u16::try_from(parts.len())
        .map_err(|_| Error::InvalidArgument(format!("table needs {} fragments", parts.len())))?;
    Ok(parts
        .iter()
        .enumerate()
        .map(|(seq, p)| {
            let mut f = Vec::with_capacity(4 + p.len());
            f.extend_from_slice(&(seq as u16).to_be_bytes());
            f.extend_from_slice(&total.to_be_bytes());
            f.extend_from_slice(p);
            f
        })
        .collect())
}

/// Collects fragments of one table. A fragment with `seq == 0` starts over.
#[derive(Debug, Clone, Default)]
pub struct Reassembler {
    parts: Vec<Option<Vec<u8>>>,
}

impl Reassembler {
    pub fn push(&mut self, fragment: &[u8]) -> Result<Option<Vec<u8>>> {
        if fragment.len() < 4 {
            return Err(Error::Frame("fragment shorter than its header".into()));
        }
        let seq = u16::from_be_bytes([fragment[0], fragment[1]]) as usize;
        let total = u16::from_be_bytes([fragment[2], fragment[3]]) as usize;
        if seq >= total {
            return Err(Error::Frame(format!("fragment {seq} of {total}")));
        }
        if seq == 0 || self.parts.len() != total {
            self.parts = vec![None; total];
        }
        self.parts[seq] = Some(fragment[4..].to_vec());
        if self.parts.iter().all(Option::is_some) {
            let whole = self.parts.drain(..).flatten().flatten().collect();
            return Ok(Some(whole));
        }
        Ok(None)
    }
}
