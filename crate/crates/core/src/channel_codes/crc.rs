use std::borrow::Cow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coded_core::Verdict;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrcError {
    #[error("CRC width {0} is not supported (expected 8 or 32)")]
    Width(u8),
    #[error("CRC parameter `{field}` = {value:#x} does not fit in {width} bits")]
    TooWide { field: &'static str, value: u32, width: u8 },
    #[error("CRC polynomial must be non-zero")]
    ZeroPolynomial,
    #[error("unknown CRC parameter set `{0}`")]
    Unknown(String),
}

/// Rocksoft-style parameter set. `poly` is written in normal (MSB-first)
/// form without the implicit `x^width` term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrcParams {
    pub name: Cow<'static, str>,
    pub width: u8,
    pub poly: u32,
    pub init: u32,
    pub xorout: u32,
    pub refin: bool,
    pub refout: bool,
}

/// CRC-8, poly 0x07, no reflection. Check value 0xF4.
pub const CRC8_ATM: CrcParams = CrcParams {
    name: Cow::Borrowed("crc8-atm"),
    width: 8,
    poly: 0x07,
    init: 0x00,
    xorout: 0x00,
    refin: false,
    refout: false,
};

/// CRC-32 as used by Ethernet and zlib. Check value 0xCBF43926.
pub const CRC32_IEEE: CrcParams = CrcParams {
    name: Cow::Borrowed("crc32-ieee"),
    width: 32,
    poly: 0x04C1_1DB7,
    init: 0xFFFF_FFFF,
    xorout: 0xFFFF_FFFF,
    refin: true,
    refout: true,
};

impl CrcParams {
    /// Looks up a built-in parameter set by id.
    pub fn builtin(id: &str) -> Option<CrcParams> {
        [CRC8_ATM, CRC32_IEEE].into_iter().find(|p| p.name == id)
    }

    pub fn validate(&self) -> Result<(), CrcError> {
        if self.width != 8 && self.width != 32 {
            return Err(CrcError::Width(self.width));
        }
        let mask = self.mask();
        for (field, value) in [("poly", self.poly), ("init", self.init), ("xorout", self.xorout)] {
            if value & !mask != 0 {
                return Err(CrcError::TooWide {
                    field,
                    value,
                    width: self.width,
                });
            }
        }
        if self.poly == 0 {
            return Err(CrcError::ZeroPolynomial);
        }
        Ok(())
    }

    pub fn mask(&self) -> u32 {
        if self.width == 32 {
            u32::MAX
        } else {
            (1u32 << self.width) - 1
        }
    }

    pub fn checksum_len(&self) -> usize {
        self.width as usize / 8
    }

    /// Serializes a checksum in transmission order: little-endian for
    /// reflected CRCs (least significant bit goes first on the line),
    /// big-endian otherwise. With that order `payload ∥ checksum` is a
    /// codeword of the underlying cyclic code.
    pub fn checksum_bytes(&self, value: u32) -> Vec<u8> {
        let n = self.checksum_len();
        if self.refout {
            value.to_le_bytes()[..n].to_vec()
        } else {
            value.to_be_bytes()[4 - n..].to_vec()
        }
    }

    pub fn checksum_from_bytes(&self, bytes: &[u8]) -> Option<u32> {
        if bytes.len() != self.checksum_len() {
            return None;
        }
        let mut buf = [0u8; 4];
        Some(if self.refout {
            buf[..bytes.len()].copy_from_slice(bytes);
            u32::from_le_bytes(buf)
        } else {
            buf[4 - bytes.len()..].copy_from_slice(bytes);
            u32::from_be_bytes(buf)
        })
    }
}

fn reflect(value: u32, width: u8) -> u32 {
    value.reverse_bits() >> (32 - width as u32)
}

/// Table-driven CRC engine.
#[derive(Debug, Clone)]
pub struct Crc {
    params: CrcParams,
    table: [u32; 256],
}

impl Crc {
    pub fn new(params: CrcParams) -> Result<Self, CrcError> {
        params.validate()?;
        let w = params.width as u32;
        let mask = params.mask();
        let mut table = [0u32; 256];
        if params.refin {
            let rpoly = reflect(params.poly, params.width);
            for (i, slot) in table.iter_mut().enumerate() {
                let mut r = i as u32;
                for _ in 0..8 {
                    r = if r & 1 == 1 { (r >> 1) ^ rpoly } else { r >> 1 };
                }
                *slot = r;
            }
        } else {
            let top = 1u32 << (w - 1);
            for (i, slot) in table.iter_mut().enumerate() {
                let mut r = (i as u32) << (w - 8);
                for _ in 0..8 {
                    r = if r & top != 0 { (r << 1) ^ params.poly } else { r << 1 };
                }
                *slot = r & mask;
            }
        }
        Ok(Crc { params, table })
    }

    pub fn params(&self) -> &CrcParams {
        &self.params
    }

    pub fn checksum(&self, data: &[u8]) -> u32 {
        let p = &self.params;
        let w = p.width as u32;
        let mask = p.mask();
        let out = if p.refin {
            let mut r = reflect(p.init, p.width);
            for &b in data {
                r = (r >> 8) ^ self.table[((r ^ b as u32) & 0xff) as usize];
            }
            if p.refout {
                r
            } else {
                reflect(r, p.width)
            }
        } else {
            let mut r = p.init;
            for &b in data {
                let idx = ((r >> (w - 8)) ^ b as u32) & 0xff;
                r = ((r << 8) ^ self.table[idx as usize]) & mask;
            }
            if p.refout {
                reflect(r, p.width)
            } else {
                r
            }
        };
        (out ^ p.xorout) & mask
    }

    pub fn check(&self, data: &[u8], checksum: u32) -> Verdict {
        if self.checksum(data) == checksum {
            Verdict::Accept
        } else {
            Verdict::Reject
        }
    }
}

/// Table-driven CRC. Builds the table on every call; keep a [`Crc`] around
/// for repeated use.
pub fn crc_compute(payload: &[u8], params: &CrcParams) -> Result<u32, CrcError> {
    Ok(Crc::new(params.clone())?.checksum(payload))
}

pub fn crc_check(payload: &[u8], checksum: u32, params: &CrcParams) -> Result<Verdict, CrcError> {
    Ok(Crc::new(params.clone())?.check(payload, checksum))
}

/// Bit-at-a-time CRC, MSB-first register with reflection applied to the
/// input bytes and output. Serves as the oracle for the table engine.
pub fn crc_bitwise(payload: &[u8], params: &CrcParams) -> Result<u32, CrcError> {
    params.validate()?;
    let w = params.width as u32;
    let mask = params.mask();
    let mut r = params.init;
    for &byte in payload {
        let b = if params.refin { byte.reverse_bits() } else { byte };
        for i in (0..8).rev() {
            let bit = ((b >> i) & 1) as u32;
            let top = (r >> (w - 1)) & 1;
            r = (r << 1) & mask;
            if top ^ bit == 1 {
                r ^= params.poly;
            }
        }
    }
    if params.refout {
        r = reflect(r, params.width);
    }
    Ok((r ^ params.xorout) & mask)
}
