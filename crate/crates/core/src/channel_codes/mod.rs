//! Protections aimed at accidental faults: even parity, parameterized CRC
//! and Hamming(7,4).

mod crc;
mod hamming;
mod parity;

pub use crc::{crc_bitwise, crc_check, crc_compute, Crc, CrcError, CrcParams, CRC32_IEEE, CRC8_ATM};
pub use hamming::{hamming74_decode, hamming74_encode, Codeword74, DecodeStatus};
pub use parity::{parity_bit, parity_check};
