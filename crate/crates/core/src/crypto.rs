//! Concrete primitives behind every protocol in the suite.
//!
//! `H` is SHA-256, the keyed PRF and MAC are HMAC-SHA-256 (tags truncated
//! to 16 bytes for low-bandwidth links), and the block cipher is AES-128.
//! Everything here is a pure function of its inputs.

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockDecrypt, BlockDecryptMut, BlockEncrypt, BlockEncryptMut, KeyInit, KeyIvInit};
use aes::Aes128;
use cbc::cipher::block_padding::Pkcs7;
use hmac::{Hmac, Mac};
use sha2::{Digest as _, Sha256};
use subtle::ConstantTimeEq;

use crate::error::{Error, Result};

pub const DIGEST_LEN: usize = 32;
pub const TAG_LEN: usize = 16;
pub const BLOCK_LEN: usize = 16;

pub type Digest = [u8; DIGEST_LEN];
pub type Tag = [u8; TAG_LEN];
pub type Block = [u8; BLOCK_LEN];
pub type CipherKey = [u8; 16];
pub type MacKey = [u8; 32];

type HmacSha256 = Hmac<Sha256>;

/// 32-byte secret shared by a device pair.
#[derive(Clone, PartialEq, Eq)]
pub struct MasterSecret([u8; 32]);

impl MasterSecret {
    pub fn new(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| {
            Error::InvalidArgument(format!("master secret must be 32 bytes, got {}", bytes.len()))
        })?;
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl std::fmt::Debug for MasterSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MasterSecret(..)")
    }
}

/// Per-direction cipher and MAC keys derived from a [`MasterSecret`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionKeys {
    pub enc_a_to_b: CipherKey,
    pub mac_a_to_b: MacKey,
    pub enc_b_to_a: CipherKey,
    pub mac_b_to_a: MacKey,
}

/// `H(input)`.
pub fn prf_hash(input: &[u8]) -> Digest {
    Sha256::digest(input).into()
}

/// Full-length HMAC-SHA-256, used for key derivation.
pub fn hmac_sha256(key: &[u8], data: &[u8]) -> [u8; 32] {
    let mut mac = <HmacSha256 as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(data);
    mac.finalize().into_bytes().into()
}

/// Derives the four direction keys with single-byte labels 0x01..0x04.
pub fn derive_direction_keys(master: &MasterSecret) -> DirectionKeys {
    let k = master.as_bytes();
    let first16 = |label: u8| -> CipherKey {
        let full = hmac_sha256(k, &[label]);
        full[..16].try_into().expect("16 of 32 bytes")
    };
    DirectionKeys {
        enc_a_to_b: first16(0x01),
        mac_a_to_b: hmac_sha256(k, &[0x02]),
        enc_b_to_a: first16(0x03),
        mac_b_to_a: hmac_sha256(k, &[0x04]),
    }
}

/// HMAC-SHA-256 truncated to [`TAG_LEN`] bytes.
pub fn mac_compute(key: &MacKey, data: &[u8]) -> Tag {
    let full = hmac_sha256(key, data);
    full[..TAG_LEN].try_into().expect("16 of 32 bytes")
}

/// Constant-time tag check. A tag of the wrong length is an error rather
/// than a mismatch.
pub fn mac_verify(key: &MacKey, data: &[u8], tag: &[u8]) -> Result<bool> {
    if tag.len() != TAG_LEN {
        return Err(Error::Frame(format!("tag must be {TAG_LEN} bytes, got {}", tag.len())));
    }
    let expected = mac_compute(key, data);
    Ok(bool::from(expected.ct_eq(tag)))
}

/// PKCS#7-padded AES-128-CBC.
pub fn cbc_encrypt(key: &CipherKey, iv: &Block, plaintext: &[u8]) -> Vec<u8> {
    cbc::Encryptor::<Aes128>::new(key.into(), iv.into()).encrypt_padded_vec_mut::<Pkcs7>(plaintext)
}

pub fn cbc_decrypt(key: &CipherKey, iv: &Block, ciphertext: &[u8]) -> Result<Vec<u8>> {
    if ciphertext.is_empty() || !ciphertext.len().is_multiple_of(BLOCK_LEN) {
        return Err(Error::Frame(format!(
            "ciphertext length {} is not a positive multiple of {BLOCK_LEN}",
            ciphertext.len()
        )));
    }
    cbc::Decryptor::<Aes128>::new(key.into(), iv.into())
        .decrypt_padded_vec_mut::<Pkcs7>(ciphertext)
        .map_err(|_| Error::Padding)
}

/// Single-block AES-128 encryption (ECB of one block).
pub fn aes_encrypt_block(key: &CipherKey, block: &Block) -> Block {
    let cipher = Aes128::new(key.into());
    let mut b = GenericArray::clone_from_slice(block);
    cipher.encrypt_block(&mut b);
    b.into()
}

pub fn aes_decrypt_block(key: &CipherKey, block: &Block) -> Block {
    let cipher = Aes128::new(key.into());
    let mut b = GenericArray::clone_from_slice(block);
    cipher.decrypt_block(&mut b);
    b.into()
}

pub fn xor_block(a: &Block, b: &Block) -> Block {
    let mut out = [0u8; BLOCK_LEN];
    for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
        *o = x ^ y;
    }
    out
}

/// One element `K_i` of a one-way key chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainKey {
    pub index: u32,
    pub bytes: Digest,
}

/// A one-way key chain `K_0..K_n` with `K_i = H(K_{i+1})`.
#[derive(Debug, Clone)]
pub struct KeyChain {
    keys: Vec<ChainKey>,
}

impl KeyChain {
    /// Length `n` of the chain; it holds `n + 1` keys.
    pub fn length(&self) -> u32 {
        (self.keys.len() - 1) as u32
    }

    pub fn key(&self, index: u32) -> Option<ChainKey> {
        self.keys.get(index as usize).copied()
    }

    pub fn keys(&self) -> &[ChainKey] {
        &self.keys
    }

    pub fn anchor(&self) -> ChainKey {
        self.keys[0]
    }
}

/// Builds `K_0..K_n` from the random seed `K_n`.
pub fn chain_generate(seed: &Digest, n: u32) -> Result<KeyChain> {
    if n == 0 {
        return Err(Error::InvalidArgument("key chain length must be at least 1".into()));
    }
    let mut bytes = vec![[0u8; DIGEST_LEN]; n as usize + 1];
    bytes[n as usize] = *seed;
    for i in (0..n as usize).rev() {
        bytes[i] = prf_hash(&bytes[i + 1]);
    }
    let keys = bytes
        .into_iter()
        .enumerate()
        .map(|(i, b)| ChainKey { index: i as u32, bytes: b })
        .collect();
    Ok(KeyChain { keys })
}

/// Checks `trusted = H^(i-v)(candidate)` where `v` and `i` are the indices
/// of `trusted` and `candidate`.
pub fn chain_verify(trusted: &ChainKey, candidate: &ChainKey) -> Result<bool> {
    if trusted.index >= candidate.index {
        return Err(Error::InvalidArgument(format!(
            "trusted index {} must be below candidate index {}",
            trusted.index, candidate.index
        )));
    }
    let mut cur = candidate.bytes;
    for _ in trusted.index..candidate.index {
        cur = prf_hash(&cur);
    }
    Ok(bool::from(cur.ct_eq(&trusted.bytes)))
}

/// Applies `H` to `key` `steps` times.
pub fn hash_iter(key: &Digest, steps: u32) -> Digest {
    let mut cur = *key;
    for _ in 0..steps {
        cur = prf_hash(&cur);
    }
    cur
}
