//! Accidental channel corruption.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::telegram::{decode_frame, HEADER_LEN};
use crate::rng::uniform_below;

const HAMMING_ID: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Each bit of the frame flips independently with probability `epsilon`.
    BitErrorRate { epsilon: f64 },
    /// With probability `rate`, one run of `length` bits at a uniform start
    /// flips.
    Burst { length: usize, rate: f64 },
    /// A uniform nonzero error pattern over the payload and tag fields.
    RandomCorruption,
    /// One uniformly placed flip in every codeword: per nibble and its
    /// parity bits under Hamming, per payload byte otherwise.
    SingleBitPerCodeword,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            NoiseModel::BitErrorRate { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                Err(format!("epsilon {epsilon} outside [0, 1]"))
            }
            NoiseModel::Burst { rate, .. } if !(0.0..=1.0).contains(&rate) => {
                Err(format!("burst rate {rate} outside [0, 1]"))
            }
            NoiseModel::Burst { length: 0, .. } => Err("burst length must be positive".into()),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            NoiseModel::BitErrorRate { epsilon } => format!("ber({epsilon})"),
            NoiseModel::Burst { length, rate } => format!("burst({length},{rate})"),
            NoiseModel::RandomCorruption => "random-corruption".into(),
            NoiseModel::SingleBitPerCodeword => "single-bit-per-codeword".into(),
        }
    }
}

/// `true` with probability `p`, from one 64-bit draw.
fn bernoulli<R: RngCore + ?Sized>(rng: &mut R, p: f64) -> bool {
    if p <= 0.0 {
        return false;
    }
    if p >= 1.0 {
        return true;
    }
    ((rng.next_u64() >> 11) as f64) < p * (1u64 << 53) as f64
}

fn flip(bytes: &mut [u8], bit: usize) {
    bytes[bit / 8] ^= 0x80 >> (bit % 8);
}

pub fn apply_channel_noise<R: RngCore + ?Sized>(bytes: &[u8], model: &NoiseModel, rng: &mut R) -> Vec<u8> {
    let mut out = bytes.to_vec();
    let nbits = out.len() * 8;
    match *model {
        NoiseModel::BitErrorRate { epsilon } => {
            for bit in 0..nbits {
                if bernoulli(rng, epsilon) {
                    flip(&mut out, bit);
                }
            }
        }
        NoiseModel::Burst { length, rate } => {
            let hit = bernoulli(rng, rate);
            let len = length.min(nbits);
            let start = uniform_below(rng, (nbits - len + 1) as u64) as usize;
            if hit {
                for bit in start..start + len {
                    flip(&mut out, bit);
                }
            }
        }
        NoiseModel::RandomCorruption => {
            let region = match decode_frame(bytes) {
                Some(f) => {
                    let tag_at = f.tag_offset();
                    let mut idx: Vec<usize> = (HEADER_LEN..HEADER_LEN + f.telegram.payload.len()).collect();
                    idx.extend(tag_at..tag_at + f.tag.len());
                    idx
                }
                None => (0..out.len()).collect(),
            };
            if region.is_empty() {
                return out;
            }
            loop {
                let pattern: Vec<u8> = region.iter().map(|_| rng.next_u32() as u8).collect();
                if pattern.iter().any(|&b| b != 0) {
                    for (&i, p) in region.iter().zip(pattern) {
                        out[i] ^= p;
                    }
                    break;
                }
            }
        }
        NoiseModel::SingleBitPerCodeword => {
            let Some(f) = decode_frame(bytes) else {
                return out;
            };
            let tag_at = f.tag_offset();
            for i in 0..f.telegram.payload.len() {
                let p = HEADER_LEN + i;
                if f.scheme_id == HAMMING_ID && f.tag.len() == f.telegram.payload.len() {
                    // Positions 0..4 are data bits (MSB first), 4..7 parity bits.
                    for (data_shift, parity_shift) in [(4, 4), (0, 0)] {
                        let pos = uniform_below(rng, 7) as u8;
                        if pos < 4 {
                            out[p] ^= 1 << (data_shift + 3 - pos);
                        } else {
                            out[tag_at + i] ^= 1 << (parity_shift + 6 - pos);
                        }
                    }
                } else {
                    out[p] ^= 1 << uniform_below(rng, 8);
                }
            }
        }
    }
    out
}
