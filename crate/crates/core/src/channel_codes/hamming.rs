//! Hamming(7,4) with positional layout `p1 p2 d1 p3 d2 d3 d4`.
//!
//! Position 1 is the most significant bit of the 7-bit word, so the
//! syndrome of a single error is the position of the flipped bit. Two errors
//! are always miscorrected; no detection is claimed beyond one.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Codeword74(u8);

impl Codeword74 {
    /// Wraps a raw 7-bit word. The top bit is discarded.
    pub fn from_bits(bits: u8) -> Self {
        Codeword74(bits & 0x7f)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// Bit at `position` in `1..=7`.
    pub fn bit(self, position: u8) -> u8 {
        debug_assert!((1..=7).contains(&position));
        (self.0 >> (7 - position)) & 1
    }

    pub fn flip(self, position: u8) -> Self {
        debug_assert!((1..=7).contains(&position));
        Codeword74(self.0 ^ (1 << (7 - position)))
    }

    /// The three parity bits `(p1, p2, p3)` packed as `p1 p2 p3`.
    pub fn parity_bits(self) -> u8 {
        (self.bit(1) << 2) | (self.bit(2) << 1) | self.bit(4)
    }

    /// Rebuilds a word from a data nibble and its packed parity bits.
    pub fn from_parts(data: u8, parity: u8) -> Self {
        let d = |i: u8| (data >> (3 - i)) & 1;
        let p = |i: u8| (parity >> (2 - i)) & 1;
        let bits = [p(0), p(1), d(0), p(2), d(1), d(2), d(3)];
        Codeword74(bits.iter().fold(0, |acc, b| (acc << 1) | b))
    }

    pub fn data(self) -> u8 {
        (self.bit(3) << 3) | (self.bit(5) << 2) | (self.bit(6) << 1) | self.bit(7)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecodeStatus {
    Clean,
    /// Bit at this position (1..=7) was flipped back.
    Corrected(u8),
}

pub fn hamming74_encode(data: u8) -> Codeword74 {
    let d = |i: u8| (data >> (3 - i)) & 1;
    let (d1, d2, d3, d4) = (d(0), d(1), d(2), d(3));
    let p1 = d1 ^ d2 ^ d4;
    let p2 = d1 ^ d3 ^ d4;
    let p3 = d2 ^ d3 ^ d4;
    Codeword74::from_parts(data & 0xf, (p1 << 2) | (p2 << 1) | p3)
}

pub fn hamming74_decode(word: Codeword74) -> (u8, DecodeStatus) {
    let syndrome = (1..=7u8)
        .filter(|&pos| word.bit(pos) == 1)
        .fold(0u8, |acc, pos| acc ^ pos);
    if syndrome == 0 {
        (word.data(), DecodeStatus::Clean)
    } else {
        (word.flip(syndrome).data(), DecodeStatus::Corrected(syndrome))
    }
}
