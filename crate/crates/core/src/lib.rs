//! Toolkit for the coded monoprocessor safety technique and the channel
//! protections it is usually compared against.
//!
//! * [`coded_core`]: coded values `(x, c)` with `c ≡ x + B + D (mod A)` and the
//!   elementary operations that keep the code channel coherent.
//! * [`sigtool`]: offline signature predetermination for a small straight-line
//!   DSL, emitting a PROM image.
//! * [`coded_runtime`]: cyclic executor with end-of-cycle checks and a fault
//!   injection engine.
//! * [`channel_codes`]: parity, CRC and Hamming(7,4).
//! * [`mac`]: SHA-256 and HMAC, written out in full.
//! * [`redundancy`]: 2oo2 / 2oo3 voters with common-mode Monte Carlo.
//! * [`harness`]: telegram channel simulator, attacker model and campaigns.

pub mod channel_codes;
pub mod coded_core;
pub mod coded_runtime;
pub mod harness;
pub mod mac;
pub mod redundancy;
pub mod rng;
pub mod sigtool;
pub mod stats;

/// Sample interlocking-style program shipped with the toolkit.
pub const SAMPLE_PROGRAM: &str = include_str!("../programs/sample.dsl");
