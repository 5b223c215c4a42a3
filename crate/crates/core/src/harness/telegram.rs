//! Telegram wire format and the protection schemes applied to it.
//!
//! Wire layout, big-endian, no padding:
//! `"VT01" | seq u32 | date u32 | scheme u8 | len u16 | payload | tag_len u16 | tag`.
//!
//! Tag scope differs by scheme: parity, CRC and Hamming cover the payload
//! only; the coded signature covers the payload fold and the date; HMAC
//! covers `seq ∥ date ∥ payload`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel_codes::{hamming74_decode, parity_bit, Codeword74, Crc, CrcError, CrcParams, DecodeStatus};
use crate::coded_core::{CodeKey, Signature};
use crate::mac::{constant_time_eq, hmac_tag, MacKey, TagLength};

pub const WIRE_MAGIC: &[u8; 4] = b"VT01";
pub const MAX_PAYLOAD: usize = 1024;
/// Bytes before the payload.
pub const HEADER_LEN: usize = 4 + 4 + 4 + 1 + 2;
/// Cycles of date skew tolerated by freshness checks.
pub const DATE_WINDOW: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Telegram {
    pub seq: u32,
    pub date: u32,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtectionScheme {
    None,
    Parity,
    Crc(CrcParams),
    Hamming74,
    /// Public key `A` and static signature `B` of the telegram.
    CodedSig {
        key: CodeKey,
        signature: Signature,
    },
    /// The key itself lives in [`Secrets`].
    Hmac {
        tag_len: TagLength,
    },
}

impl ProtectionScheme {
    pub fn id(&self) -> u8 {
        match self {
            ProtectionScheme::None => 0,
            ProtectionScheme::Parity => 1,
            ProtectionScheme::Crc(_) => 2,
            ProtectionScheme::Hamming74 => 3,
            ProtectionScheme::CodedSig { .. } => 4,
            ProtectionScheme::Hmac { .. } => 5,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ProtectionScheme::None => "none".into(),
            ProtectionScheme::Parity => "parity".into(),
            ProtectionScheme::Crc(p) => p.name.to_string(),
            ProtectionScheme::Hamming74 => "hamming74".into(),
            ProtectionScheme::CodedSig { .. } => "coded-sig".into(),
            ProtectionScheme::Hmac { tag_len } => format!("hmac-{}", tag_len.len()),
        }
    }

    /// Tag length for a payload of `payload_len` bytes.
    pub fn tag_len(&self, payload_len: usize) -> usize {
        match self {
            ProtectionScheme::None => 0,
            ProtectionScheme::Parity => 1,
            ProtectionScheme::Crc(p) => p.checksum_len(),
            ProtectionScheme::Hamming74 => payload_len,
            ProtectionScheme::CodedSig { .. } => 8,
            ProtectionScheme::Hmac { tag_len } => tag_len.len(),
        }
    }

    /// True when the scheme can be computed without any secret.
    pub fn is_keyless(&self) -> bool {
        !matches!(self, ProtectionScheme::Hmac { .. })
    }
}

/// Secret material held by sender and receiver, never by the attacker.
#[derive(Debug, Clone, Default)]
pub struct Secrets {
    pub mac_key: Option<MacKey>,
}

impl Secrets {
    pub fn none() -> Self {
        Secrets::default()
    }

    pub fn with_mac_key(key: MacKey) -> Self {
        Secrets { mac_key: Some(key) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtectError {
    #[error("payload of {0} bytes exceeds {MAX_PAYLOAD}")]
    PayloadTooLong(usize),
    #[error("scheme requires a MAC key")]
    MissingKey,
    #[error(transparent)]
    Crc(#[from] CrcError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    BadTag,
    BadParity,
    BadCrc,
    BadResidue,
    StaleDate,
    ReplayedSeq,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TelegramVerdict {
    Accept(Telegram),
    Corrected(Telegram),
    Reject(RejectReason),
}

/// Receiver expectations used by the freshness checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Freshness {
    /// Lowest acceptable sequence number (last accepted + 1).
    pub min_seq: u32,
    pub current_date: u32,
}

/// `payload` read as a base-256 integer, reduced mod `A`.
pub fn payload_fold(payload: &[u8], key: &CodeKey) -> u64 {
    let a = key.modulus() as u128;
    payload.iter().fold(0u128, |acc, &b| (acc * 256 + b as u128) % a) as u64
}

pub fn coded_residue(payload: &[u8], date: u32, key: &CodeKey, signature: Signature) -> u64 {
    key.residue(payload_fold(payload, key) as i128 + signature.value() as i128 + date as i128)
}

/// Bytes authenticated by the HMAC scheme.
pub fn mac_message(seq: u32, date: u32, payload: &[u8]) -> Vec<u8> {
    let mut m = Vec::with_capacity(8 + payload.len());
    m.extend(seq.to_be_bytes());
    m.extend(date.to_be_bytes());
    m.extend(payload);
    m
}

/// Hamming parity for one byte: bits 6..4 protect the high nibble, bits
/// 2..0 the low nibble, bits 7 and 3 are zero.
pub fn hamming_tag_byte(b: u8) -> u8 {
    let hi = crate::channel_codes::hamming74_encode(b >> 4).parity_bits();
    let lo = crate::channel_codes::hamming74_encode(b & 0xf).parity_bits();
    (hi << 4) | lo
}

pub fn compute_tag(t: &Telegram, scheme: &ProtectionScheme, secrets: &Secrets) -> Result<Vec<u8>, ProtectError> {
    Ok(match scheme {
        ProtectionScheme::None => Vec::new(),
        ProtectionScheme::Parity => vec![parity_bit(&t.payload)],
        ProtectionScheme::Crc(p) => {
            let crc = Crc::new(p.clone())?;
            p.checksum_bytes(crc.checksum(&t.payload))
        }
        ProtectionScheme::Hamming74 => t.payload.iter().map(|&b| hamming_tag_byte(b)).collect(),
        ProtectionScheme::CodedSig { key, signature } => coded_residue(&t.payload, t.date, key, *signature)
            .to_be_bytes()
            .to_vec(),
        ProtectionScheme::Hmac { tag_len } => {
            let key = secrets.mac_key.as_ref().ok_or(ProtectError::MissingKey)?;
            hmac_tag(key, &mac_message(t.seq, t.date, &t.payload), *tag_len)
                .as_bytes()
                .to_vec()
        }
    })
}

pub fn encode_frame(t: &Telegram, scheme_id: u8, tag: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + t.payload.len() + 2 + tag.len());
    out.extend(WIRE_MAGIC);
    out.extend(t.seq.to_be_bytes());
    out.extend(t.date.to_be_bytes());
    out.push(scheme_id);
    out.extend((t.payload.len() as u16).to_be_bytes());
    out.extend(&t.payload);
    out.extend((tag.len() as u16).to_be_bytes());
    out.extend(tag);
    out
}

/// A parsed frame, before any tag check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub telegram: Telegram,
    pub scheme_id: u8,
    pub tag: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        encode_frame(&self.telegram, self.scheme_id, &self.tag)
    }

    /// Byte offset of the payload within the encoded frame.
    pub fn payload_offset() -> usize {
        HEADER_LEN
    }

    /// Byte offset of the tag within the encoded frame.
    pub fn tag_offset(&self) -> usize {
        HEADER_LEN + self.telegram.payload.len() + 2
    }
}

pub fn decode_frame(bytes: &[u8]) -> Option<Frame> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != WIRE_MAGIC {
        return None;
    }
    let u32_at = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
    let u16_at = |i: usize| u16::from_be_bytes(bytes[i..i + 2].try_into().unwrap()) as usize;
    let len = u16_at(13);
    if len > MAX_PAYLOAD || bytes.len() < HEADER_LEN + len + 2 {
        return None;
    }
    let tag_at = HEADER_LEN + len + 2;
    let tag_len = u16_at(HEADER_LEN + len);
    if bytes.len() != tag_at + tag_len {
        return None;
    }
    Some(Frame {
        telegram: Telegram {
            seq: u32_at(4),
            date: u32_at(8),
            payload: bytes[HEADER_LEN..HEADER_LEN + len].to_vec(),
        },
        scheme_id: bytes[12],
        tag: bytes[tag_at..].to_vec(),
    })
}

pub fn protect_telegram(t: &Telegram, scheme: &ProtectionScheme, secrets: &Secrets) -> Result<Vec<u8>, ProtectError> {
    if t.payload.len() > MAX_PAYLOAD {
        return Err(ProtectError::PayloadTooLong(t.payload.len()));
    }
    let tag = compute_tag(t, scheme, secrets)?;
    Ok(encode_frame(t, scheme.id(), &tag))
}

fn hamming_repair(payload: &[u8], tag: &[u8]) -> Option<(Vec<u8>, bool)> {
    let mut corrected = false;
    let mut out = Vec::with_capacity(payload.len());
    for (&b, &p) in payload.iter().zip(tag) {
        if p & 0x88 != 0 {
            return None;
        }
        let mut byte = 0;
        for (data, parity) in [(b >> 4, (p >> 4) & 7), (b & 0xf, p & 7)] {
            let (d, status) = hamming74_decode(Codeword74::from_parts(data, parity));
            corrected |= status != DecodeStatus::Clean;
            byte = (byte << 4) | d;
        }
        out.push(byte);
    }
    Some((out, corrected))
}

fn fresh(t: &Telegram, expected: &Freshness, check_seq: bool) -> Option<RejectReason> {
    if check_seq && t.seq < expected.min_seq {
        return Some(RejectReason::ReplayedSeq);
    }
    if t.date.abs_diff(expected.current_date) > DATE_WINDOW {
        return Some(RejectReason::StaleDate);
    }
    None
}

pub fn verify_telegram(
    bytes: &[u8],
    scheme: &ProtectionScheme,
    secrets: &Secrets,
    expected: &Freshness,
) -> TelegramVerdict {
    use TelegramVerdict::{Accept, Corrected, Reject};
    let Some(frame) = decode_frame(bytes) else {
        return Reject(RejectReason::Malformed);
    };
    let t = frame.telegram;
    if frame.scheme_id != scheme.id() || frame.tag.len() != scheme.tag_len(t.payload.len()) {
        return Reject(RejectReason::Malformed);
    }
    match scheme {
        ProtectionScheme::None => Accept(t),
        ProtectionScheme::Parity => {
            if frame.tag[0] == parity_bit(&t.payload) {
                Accept(t)
            } else {
                Reject(RejectReason::BadParity)
            }
        }
        ProtectionScheme::Crc(p) => {
            let Ok(crc) = Crc::new(p.clone()) else {
                return Reject(RejectReason::Malformed);
            };
            match p.checksum_from_bytes(&frame.tag) {
                Some(v) if crc.check(&t.payload, v).is_accept() => Accept(t),
                _ => Reject(RejectReason::BadCrc),
            }
        }
        ProtectionScheme::Hamming74 => match hamming_repair(&t.payload, &frame.tag) {
            None => Reject(RejectReason::Malformed),
            Some((_, false)) => Accept(t),
            Some((payload, true)) => Corrected(Telegram { payload, ..t }),
        },
        ProtectionScheme::CodedSig { key, signature } => {
            let want = coded_residue(&t.payload, t.date, key, *signature).to_be_bytes();
            if frame.tag != want {
                return Reject(RejectReason::BadResidue);
            }
            match fresh(&t, expected, false) {
                Some(r) => Reject(r),
                None => Accept(t),
            }
        }
        ProtectionScheme::Hmac { tag_len } => {
            let Some(key) = secrets.mac_key.as_ref() else {
                return Reject(RejectReason::BadTag);
            };
            let want = hmac_tag(key, &mac_message(t.seq, t.date, &t.payload), *tag_len);
            if !constant_time_eq(want.as_bytes(), &frame.tag) {
                return Reject(RejectReason::BadTag);
            }
            match fresh(&t, expected, true) {
                Some(r) => Reject(r),
                None => Accept(t),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_codes::{CRC32_IEEE, CRC8_ATM};

    fn key() -> MacKey {
        MacKey::new(vec![0x42; 32])
    }

    pub(crate) fn all_schemes() -> Vec<ProtectionScheme> {
        let k = CodeKey::new(251).unwrap();
        vec![
            ProtectionScheme::None,
            ProtectionScheme::Parity,
            ProtectionScheme::Crc(CRC8_ATM),
            ProtectionScheme::Crc(CRC32_IEEE),
            ProtectionScheme::Hamming74,
            ProtectionScheme::CodedSig {
                key: k,
                signature: k.signature(77).unwrap(),
            },
            ProtectionScheme::Hmac {
                tag_len: TagLength::Bytes8,
            },
            ProtectionScheme::Hmac {
                tag_len: TagLength::Bytes32,
            },
        ]
    }

    fn tg(payload: &[u8]) -> Telegram {
        Telegram {
            seq: 10,
            date: 500,
            payload: payload.to_vec(),
        }
    }

    fn now() -> Freshness {
        Freshness {
            min_seq: 10,
            current_date: 500,
        }
    }

    #[test]
    fn round_trip_every_scheme() {
        let secrets = Secrets::with_mac_key(key());
        for payload in [&b""[..], b"x", b"123456789", &[0xff; 300]] {
            for s in all_schemes() {
                let t = tg(payload);
                let wire = protect_telegram(&t, &s, &secrets).unwrap();
                assert_eq!(
                    verify_telegram(&wire, &s, &secrets, &now()),
                    TelegramVerdict::Accept(t),
                    "{}",
                    s.name()
                );
            }
        }
    }

    #[test]
    fn none_scheme_is_header_and_payload() {
        let wire = protect_telegram(&tg(b"ab"), &ProtectionScheme::None, &Secrets::none()).unwrap();
        assert_eq!(
            wire,
            [
                b"VT01".as_slice(),
                &10u32.to_be_bytes(),
                &500u32.to_be_bytes(),
                &[0],
                &[0, 2],
                b"ab",
                &[0, 0]
            ]
            .concat()
        );
    }

    #[test]
    fn crc32_trailer_carries_check_value() {
        let t = Telegram {
            seq: 0,
            date: 0,
            payload: b"123456789".to_vec(),
        };
        let wire = protect_telegram(&t, &ProtectionScheme::Crc(CRC32_IEEE), &Secrets::none()).unwrap();
        // Reflected CRCs go on the wire least significant byte first.
        assert_eq!(&wire[wire.len() - 4..], &0xCBF4_3926u32.to_le_bytes());
        let wire8 = protect_telegram(&t, &ProtectionScheme::Crc(CRC8_ATM), &Secrets::none()).unwrap();
        assert_eq!(wire8[wire8.len() - 1], 0xF4);
    }

    #[test]
    fn every_payload_bit_flip_fails_crc() {
        let payload: Vec<u8> = (0..64u8).map(|i| i.wrapping_mul(37)).collect();
        for params in [CRC8_ATM, CRC32_IEEE] {
            let s = ProtectionScheme::Crc(params);
            let wire = protect_telegram(&tg(&payload), &s, &Secrets::none()).unwrap();
            for bit in 0..64 * 8 {
                let mut w = wire.clone();
                w[HEADER_LEN + bit / 8] ^= 0x80 >> (bit % 8);
                assert_eq!(
                    verify_telegram(&w, &s, &Secrets::none(), &now()),
                    TelegramVerdict::Reject(RejectReason::BadCrc)
                );
            }
        }
    }

    #[test]
    fn freshness_rules() {
        let secrets = Secrets::with_mac_key(key());
        let hmac = ProtectionScheme::Hmac {
            tag_len: TagLength::Bytes32,
        };
        let wire = protect_telegram(&tg(b"go"), &hmac, &secrets).unwrap();
        let later = Freshness {
            min_seq: 11,
            current_date: 500,
        };
        assert_eq!(
            verify_telegram(&wire, &hmac, &secrets, &later),
            TelegramVerdict::Reject(RejectReason::ReplayedSeq)
        );
        let stale = Freshness {
            min_seq: 10,
            current_date: 502,
        };
        assert_eq!(
            verify_telegram(&wire, &hmac, &secrets, &stale),
            TelegramVerdict::Reject(RejectReason::StaleDate)
        );
        let edge = Freshness {
            min_seq: 10,
            current_date: 501,
        };
        assert!(matches!(
            verify_telegram(&wire, &hmac, &secrets, &edge),
            TelegramVerdict::Accept(_)
        ));

        let coded = &all_schemes()[5];
        let wire = protect_telegram(&tg(b"go"), coded, &secrets).unwrap();
        // Sequence numbers are outside the coded signature's scope.
        assert!(matches!(
            verify_telegram(&wire, coded, &secrets, &later),
            TelegramVerdict::Accept(_)
        ));
        assert_eq!(
            verify_telegram(&wire, coded, &secrets, &stale),
            TelegramVerdict::Reject(RejectReason::StaleDate)
        );

        let crc = ProtectionScheme::Crc(CRC32_IEEE);
        let wire = protect_telegram(&tg(b"go"), &crc, &secrets).unwrap();
        assert!(matches!(
            verify_telegram(&wire, &crc, &secrets, &stale),
            TelegramVerdict::Accept(_)
        ));
    }

    #[test]
    fn hamming_corrects_single_flips_in_each_codeword() {
        let s = ProtectionScheme::Hamming74;
        let t = tg(&[0xA5, 0x3C]);
        let wire = protect_telegram(&t, &s, &Secrets::none()).unwrap();
        let tag_at = HEADER_LEN + 2 + 2;
        for (offset, mask) in [
            (HEADER_LEN, 0x80),
            (HEADER_LEN + 1, 0x01),
            (tag_at, 0x40),
            (tag_at + 1, 0x04),
        ] {
            let mut w = wire.clone();
            w[offset] ^= mask;
            assert_eq!(
                verify_telegram(&w, &s, &Secrets::none(), &now()),
                TelegramVerdict::Corrected(t.clone())
            );
        }
        let mut w = wire.clone();
        w[tag_at] ^= 0x80;
        assert_eq!(
            verify_telegram(&w, &s, &Secrets::none(), &now()),
            TelegramVerdict::Reject(RejectReason::Malformed)
        );
    }

    #[test]
    fn malformed_frames() {
        let s = ProtectionScheme::Parity;
        let wire = protect_telegram(&tg(b"abc"), &s, &Secrets::none()).unwrap();
        for len in 0..wire.len() {
            assert_eq!(
                verify_telegram(&wire[..len], &s, &Secrets::none(), &now()),
                TelegramVerdict::Reject(RejectReason::Malformed)
            );
        }
        let mut w = wire.clone();
        w[12] = 2;
        assert_eq!(
            verify_telegram(&w, &s, &Secrets::none(), &now()),
            TelegramVerdict::Reject(RejectReason::Malformed)
        );
        assert_eq!(
            verify_telegram(
                &wire,
                &ProtectionScheme::Hmac {
                    tag_len: TagLength::Bytes8
                },
                &Secrets::none(),
                &now()
            ),
            TelegramVerdict::Reject(RejectReason::Malformed)
        );
    }

    #[test]
    fn protect_errors() {
        assert_eq!(
            protect_telegram(&tg(&[0; MAX_PAYLOAD + 1]), &ProtectionScheme::None, &Secrets::none()),
            Err(ProtectError::PayloadTooLong(MAX_PAYLOAD + 1))
        );
        assert_eq!(
            protect_telegram(
                &tg(b"x"),
                &ProtectionScheme::Hmac {
                    tag_len: TagLength::Bytes16
                },
                &Secrets::none()
            ),
            Err(ProtectError::MissingKey)
        );
    }

    #[test]
    fn payload_fold_is_base_256() {
        let k = CodeKey::new(251).unwrap();
        assert_eq!(payload_fold(&[1, 0], &k), 256 % 251);
        assert_eq!(payload_fold(&[], &k), 0);
        let big = CodeKey::new(2_147_483_647).unwrap();
        assert_eq!(payload_fold(&[0x12, 0x34, 0x56, 0x78], &big), 0x1234_5678);
    }
}
