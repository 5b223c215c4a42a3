//! Adversarial channel transformations.
//!
//! The attacker reads and writes the channel freely and knows every
//! algorithm and public parameter (CRC polynomial, code key, static
//! signature, tag length). It never holds the MAC key: tags are recomputed
//! with empty [`Secrets`], and asking for the key is an error.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::telegram::{compute_tag, decode_frame, encode_frame, Frame, ProtectionScheme, Secrets};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    /// Replace the payload, recomputing the tag where no key is needed.
    ForgePayload(Vec<u8>),
    /// Re-emit a frame recorded earlier.
    Replay(Vec<u8>),
    /// Transplant the payload and tag of a donor frame under the victim's
    /// header.
    SpliceSignature(Vec<u8>),
    /// Emit the forged payload with `attempts` uniformly random tags.
    BruteForceTag { payload: Vec<u8>, attempts: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KeyAccess {
    #[default]
    Withheld,
    Requested,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub knowledge: KeyAccess,
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        AttackSpec {
            kind,
            knowledge: KeyAccess::Withheld,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttackError {
    #[error("attack requested the MAC key")]
    KeyAccessViolation,
    #[error("intercepted bytes are not a frame")]
    NotAFrame,
}

/// Victim frame with `payload` and a tag the attacker can produce.
pub fn forge(victim: &Frame, payload: &[u8], scheme: &ProtectionScheme) -> Vec<u8> {
    let mut t = victim.telegram.clone();
    t.payload = payload.to_vec();
    let tag = if scheme.is_keyless() {
        compute_tag(&t, scheme, &Secrets::none()).unwrap_or_else(|_| victim.tag.clone())
    } else {
        victim.tag.clone()
    };
    encode_frame(&t, victim.scheme_id, &tag)
}

/// Forged payload under one random tag of the victim's tag length.
pub fn brute_force_frame<R: RngCore + ?Sized>(victim: &Frame, payload: &[u8], rng: &mut R) -> Vec<u8> {
    let mut tag = vec![0u8; victim.tag.len()];
    rng.fill_bytes(&mut tag);
    let mut t = victim.telegram.clone();
    t.payload = payload.to_vec();
    encode_frame(&t, victim.scheme_id, &tag)
}

/// Frames the attacker injects in place of `bytes`.
pub fn apply_attack<R: RngCore + ?Sized>(
    bytes: &[u8],
    attack: &AttackSpec,
    scheme: &ProtectionScheme,
    rng: &mut R,
) -> Result<Vec<Vec<u8>>, AttackError> {
    if attack.knowledge == KeyAccess::Requested {
        return Err(AttackError::KeyAccessViolation);
    }
    if let AttackKind::Replay(recorded) = &attack.kind {
        return Ok(vec![recorded.clone()]);
    }
    let victim = decode_frame(bytes).ok_or(AttackError::NotAFrame)?;
    Ok(match &attack.kind {
        AttackKind::ForgePayload(payload) => vec![forge(&victim, payload, scheme)],
        AttackKind::SpliceSignature(donor) => {
            let donor = decode_frame(donor).ok_or(AttackError::NotAFrame)?;
            let mut t = victim.telegram.clone();
            t.payload = donor.telegram.payload;
            vec![encode_frame(&t, victim.scheme_id, &donor.tag)]
        }
        AttackKind::BruteForceTag { payload, attempts } => (0..*attempts)
            .map(|_| brute_force_frame(&victim, payload, rng))
            .collect(),
        AttackKind::Replay(_) => unreachable!(),
    })
}
