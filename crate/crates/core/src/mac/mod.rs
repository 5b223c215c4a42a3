//! Keyed message authentication: SHA-256 and HMAC (FIPS 198), both written
//! in this crate with no cryptographic dependency.

mod sha256;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sha256::{Sha256, BLOCK_LEN, DIGEST_LEN};

use crate::coded_core::Verdict;

/// Environment variable holding the HMAC key as hex. Overrides any
/// configured key reference.
pub const MAC_KEY_ENV: &str = "VITALCODE_MAC_KEY";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MacError {
    #[error("MAC key is not valid hex")]
    BadHex,
    #[error("MAC key is empty")]
    EmptyKey,
    #[error("tag length {0} is not one of 8, 16, 32")]
    BadTagLength(usize),
    #[error("no MAC key configured (set {MAC_KEY_ENV} or the config key reference)")]
    MissingKey,
}

/// 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

pub fn hash_digest(message: &[u8]) -> Digest {
    Digest(Sha256::digest(message))
}

/// Shared secret. Neither `Debug` nor `Display` reveal the bytes and the type
/// is not serializable.
#[derive(Clone, PartialEq, Eq)]
pub struct MacKey(Vec<u8>);

impl MacKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        MacKey(bytes.into())
    }

    pub fn from_hex(text: &str) -> Result<Self, MacError> {
        let bytes = hex::decode(text.trim()).map_err(|_| MacError::BadHex)?;
        if bytes.is_empty() {
            return Err(MacError::EmptyKey);
        }
        Ok(MacKey(bytes))
    }

    /// Reads [`MAC_KEY_ENV`], if set.
    pub fn from_env() -> Option<Result<Self, MacError>> {
        std::env::var(MAC_KEY_ENV).ok().map(|v| Self::from_hex(&v))
    }

    fn block_key(&self) -> [u8; BLOCK_LEN] {
        let mut k = [0u8; BLOCK_LEN];
        if self.0.len() > BLOCK_LEN {
            k[..DIGEST_LEN].copy_from_slice(&Sha256::digest(&self.0));
        } else {
            k[..self.0.len()].copy_from_slice(&self.0);
        }
        k
    }
}

impl fmt::Debug for MacKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MacKey(<redacted>)")
    }
}

/// Length of a truncated tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum TagLength {
    Bytes8,
    Bytes16,
    Bytes32,
}

impl TagLength {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        match self {
            TagLength::Bytes8 => 8,
            TagLength::Bytes16 => 16,
            TagLength::Bytes32 => 32,
        }
    }
}

impl TryFrom<usize> for TagLength {
    type Error = MacError;

    fn try_from(n: usize) -> Result<Self, MacError> {
        match n {
            8 => Ok(TagLength::Bytes8),
            16 => Ok(TagLength::Bytes16),
            32 => Ok(TagLength::Bytes32),
            other => Err(MacError::BadTagLength(other)),
        }
    }
}

impl From<TagLength> for usize {
    fn from(t: TagLength) -> usize {
        t.len()
    }
}

impl fmt::Display for TagLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tag(Vec<u8>);

impl Tag {
    pub fn from_bytes(bytes: impl Into<Vec<u8>>) -> Self {
        Tag(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

/// Full 32-byte HMAC-SHA256.
pub fn hmac_sha256(key: &MacKey, message: &[u8]) -> [u8; DIGEST_LEN] {
    let k = key.block_key();
    let mut ipad = [0x36u8; BLOCK_LEN];
    let mut opad = [0x5cu8; BLOCK_LEN];
    for i in 0..BLOCK_LEN {
        ipad[i] ^= k[i];
        opad[i] ^= k[i];
    }
    let mut inner = Sha256::new();
    inner.update(&ipad);
    inner.update(message);
    let inner = inner.finalize();

    let mut outer = Sha256::new();
    outer.update(&opad);
    outer.update(&inner);
    outer.finalize()
}

/// HMAC truncated to its leading `t` bytes.
pub fn hmac_tag(key: &MacKey, message: &[u8], t: TagLength) -> Tag {
    Tag(hmac_sha256(key, message)[..t.len()].to_vec())
}

/// Recomputes the tag and compares every byte, whatever the position of the
/// first mismatch. The tag length is taken from the presented tag and must be
/// one of the allowed truncations.
pub fn hmac_verify(key: &MacKey, message: &[u8], tag: &[u8]) -> Verdict {
    let Ok(t) = TagLength::try_from(tag.len()) else {
        return Verdict::Reject;
    };
    let expected = hmac_tag(key, message, t);
    if constant_time_eq(expected.as_bytes(), tag) {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

pub fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let diff = a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y));
    std::hint::black_box(diff) == 0
}

/// Published known-answer vectors, as `(label, passed)`.
pub fn known_answer_results() -> Vec<(&'static str, bool)> {
    let sha = [
        (
            "sha256 \"\"",
            &b""[..],
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        ),
        (
            "sha256 \"abc\"",
            &b"abc"[..],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
        ),
        (
            "sha256 two-block",
            &b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"[..],
            "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1",
        ),
    ];
    let mut out: Vec<(&'static str, bool)> = sha
        .iter()
        .map(|(label, msg, hex)| (*label, hash_digest(msg).to_hex() == *hex))
        .collect();
    for (label, key, msg, hex) in rfc4231_vectors() {
        let tag = hmac_tag(&MacKey::new(key), &msg, TagLength::Bytes32);
        out.push((label, hex::encode(tag.as_bytes()) == hex));
    }
    out
}

/// RFC 4231 test cases 1 to 4 and 6: `(label, key, message, HMAC-SHA256 hex)`.
pub fn rfc4231_vectors() -> Vec<(&'static str, Vec<u8>, Vec<u8>, &'static str)> {
    vec![
        (
            "hmac rfc4231 case 1",
            vec![0x0b; 20],
            b"Hi There".to_vec(),
            "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7",
        ),
        (
            "hmac rfc4231 case 2",
            b"Jefe".to_vec(),
            b"what do ya want for nothing?".to_vec(),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843",
        ),
        (
            "hmac rfc4231 case 3",
            vec![0xaa; 20],
            vec![0xdd; 50],
            "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe",
        ),
        (
            "hmac rfc4231 case 4",
            (1u8..=25).collect(),
            vec![0xcd; 50],
            "82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b",
        ),
        (
            "hmac rfc4231 case 6",
            vec![0xaa; 131],
            b"Test Using Larger Than Block-Size Key - Hash Key First".to_vec(),
            "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54",
        ),
    ]
}
