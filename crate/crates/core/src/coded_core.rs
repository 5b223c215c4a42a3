//! Coded data and the elementary operations (OPELs) that compute on it.
//!
//! A coded value is a pair `(x, c)`: the functional part `x` carries the
//! variable's value and the code part `c` lives in `[0, A)` for a prime key
//! `A`. A value is well formed for static signature `B` at date `D` iff
//!
//! ```text
//! c ≡ x + B + D   (mod A)
//! ```
//!
//! Each OPEL computes the functional result with checked 64-bit arithmetic and
//! the code result from the operand codes and an offline compensation
//! constant. ADD, SUB and MOVE never read the functional parts in the code
//! channel; MUL needs two cross terms `x1·t2` and `x2·t1` because residue
//! codes with additive signatures are not closed under multiplication.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted key, exclusive.
pub const MAX_KEY: u64 = 1 << 48;

/// Default production key, `2^31 - 1`.
pub const DEFAULT_KEY: u64 = 2_147_483_647;

/// Default key for desk-scale campaigns, small enough that `1/A` is
/// measurable.
pub const CAMPAIGN_KEY: u64 = 251;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodedError {
    #[error("code key {0} is not prime")]
    NotPrime(u64),
    #[error("code key {0} is outside [3, 2^48)")]
    OutOfRange(u64),
    #[error("residue {value} is not below the code key {modulus}")]
    ResidueOutOfRange { value: u64, modulus: u64 },
    #[error("functional overflow in {0}")]
    FunctionalOverflow(&'static str),
    #[error("expected a {expected:?} compensation constant, got {found:?}")]
    ConstantKind {
        expected: CompensationKind,
        found: CompensationKind,
    },
}

/// Outcome of a code check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    pub fn is_accept(self) -> bool {
        self == Verdict::Accept
    }
}

/// The prime modulus `A` of the arithmetic code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeKey {
    modulus: u64,
    bit_width: u32,
}

impl CodeKey {
    /// Validates `a` as a code key: prime and in `[3, 2^48)`.
    pub fn new(a: u64) -> Result<Self, CodedError> {
        if !(3..MAX_KEY).contains(&a) {
            return Err(CodedError::OutOfRange(a));
        }
        if !is_prime(a) {
            return Err(CodedError::NotPrime(a));
        }
        // ceil(log2 a); a is odd so it is never a power of two.
        let bit_width = 64 - a.leading_zeros();
        Ok(CodeKey { modulus: a, bit_width })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    /// The unique `r` in `[0, A)` with `r ≡ n (mod A)`.
    pub fn residue(&self, n: impl Into<i128>) -> u64 {
        n.into().rem_euclid(self.modulus as i128) as u64
    }

    fn add(&self, a: u64, b: u64) -> u64 {
        ((a as u128 + b as u128) % self.modulus as u128) as u64
    }

    fn sub(&self, a: u64, b: u64) -> u64 {
        let m = self.modulus as u128;
        ((a as u128 % m + m - b as u128 % m) % m) as u64
    }

    fn mul(&self, a: u64, b: u64) -> u64 {
        let m = self.modulus as u128;
        ((a as u128 % m) * (b as u128 % m) % m) as u64
    }

    pub fn signature(&self, value: u64) -> Result<Signature, CodedError> {
        Signature::new(value, self)
    }

    pub fn date(&self, cycle: u64) -> CycleDate {
        CycleDate::new(cycle, self)
    }
}

/// `make_key` under its operational name.
pub fn make_key(a: u64) -> Result<CodeKey, CodedError> {
    CodeKey::new(a)
}

/// Deterministic Miller–Rabin; the witness set is exact for all 64-bit `n`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut base: u64, mut exp: u64| {
        let mut acc = 1u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mulmod(acc, base);
            }
            base = mulmod(base, base);
            exp >>= 1;
        }
        acc
    };
    'witness: for a in WITNESSES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Static signature of a variable, a residue in `[0, A)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Signature(u64);

impl Signature {
    pub fn new(value: u64, key: &CodeKey) -> Result<Self, CodedError> {
        if value >= key.modulus {
            return Err(CodedError::ResidueOutOfRange {
                value,
                modulus: key.modulus,
            });
        }
        Ok(Signature(value))
    }

    /// Reduces an arbitrary integer into a signature.
    pub fn from_residue(n: impl Into<i128>, key: &CodeKey) -> Self {
        Signature(key.residue(n))
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

/// Cycle counter together with its code-channel term `cycle mod A`.
///
/// The term aliases every `A` cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CycleDate {
    cycle: u64,
    term: u64,
}

impl CycleDate {
    pub fn new(cycle: u64, key: &CodeKey) -> Self {
        CycleDate {
            cycle,
            term: cycle % key.modulus,
        }
    }

    pub fn cycle(self) -> u64 {
        self.cycle
    }

    pub fn term(self) -> u64 {
        self.term
    }
}

/// Functional part and code part of one datum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodedValue {
    pub x: i64,
    pub c: u64,
}

impl CodedValue {
    pub fn new(x: i64, c: u64) -> Self {
        CodedValue { x, c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompensationKind {
    Additive,
    Multiplicative,
}

/// Offline constant that steers an OPEL's code result onto the destination
/// signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompensationConstant {
    pub value: u64,
    pub kind: CompensationKind,
}

impl CompensationConstant {
    pub fn additive(value: u64) -> Self {
        CompensationConstant {
            value,
            kind: CompensationKind::Additive,
        }
    }

    pub fn multiplicative(value: u64) -> Self {
        CompensationConstant {
            value,
            kind: CompensationKind::Multiplicative,
        }
    }

    fn expect(self, kind: CompensationKind) -> Result<u64, CodedError> {
        if self.kind == kind {
            Ok(self.value)
        } else {
            Err(CodedError::ConstantKind {
                expected: kind,
                found: self.kind,
            })
        }
    }
}

pub fn encode(x: i64, sig: Signature, date: CycleDate, key: &CodeKey) -> CodedValue {
    let c = key.residue(x as i128 + sig.0 as i128 + date.term as i128);
    CodedValue { x, c }
}

pub fn check(v: CodedValue, sig: Signature, date: CycleDate, key: &CodeKey) -> Verdict {
    if v.c == key.residue(v.x as i128 + sig.0 as i128 + date.term as i128) {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

/// Code-channel halves of the OPELs.
///
/// ADD, SUB and MOVE are functions of code fields and constants only; these
/// are the exact routines the OPELs call.
pub mod code_channel {
    use super::CodeKey;

    pub fn add(c1: u64, c2: u64, kappa: u64, key: &CodeKey) -> u64 {
        key.add(key.add(c1, c2), kappa)
    }

    pub fn sub(c1: u64, c2: u64, kappa: u64, key: &CodeKey) -> u64 {
        key.add(key.sub(c1, c2), kappa)
    }

    pub fn mov(c: u64, kappa: u64, key: &CodeKey) -> u64 {
        key.add(c, kappa)
    }

    /// `c1·c2 − x1·t2 − x2·t1 + κm (mod A)`.
    #[allow(clippy::too_many_arguments)]
    pub fn mul(c1: u64, c2: u64, x1: i64, x2: i64, t1: u64, t2: u64, kappa: u64, key: &CodeKey) -> u64 {
        let prod = key.mul(c1, c2);
        let cross1 = key.mul(key.residue(x1), t2);
        let cross2 = key.mul(key.residue(x2), t1);
        key.add(key.sub(key.sub(prod, cross1), cross2), kappa)
    }
}

pub fn opel_add(
    v1: CodedValue,
    v2: CodedValue,
    kappa: CompensationConstant,
    key: &CodeKey,
) -> Result<CodedValue, CodedError> {
    let k = kappa.expect(CompensationKind::Additive)?;
    let x = v1.x.checked_add(v2.x).ok_or(CodedError::FunctionalOverflow("ADD"))?;
    Ok(CodedValue {
        x,
        c: code_channel::add(v1.c, v2.c, k, key),
    })
}

pub fn opel_sub(
    v1: CodedValue,
    v2: CodedValue,
    kappa: CompensationConstant,
    key: &CodeKey,
) -> Result<CodedValue, CodedError> {
    let k = kappa.expect(CompensationKind::Additive)?;
    let x = v1.x.checked_sub(v2.x).ok_or(CodedError::FunctionalOverflow("SUB"))?;
    Ok(CodedValue {
        x,
        c: code_channel::sub(v1.c, v2.c, k, key),
    })
}

/// `t1 = B1 + D`, `t2 = B2 + D` and `κm = B3 + D − t1·t2`, all mod `A`.
pub fn opel_mul(
    v1: CodedValue,
    v2: CodedValue,
    t1: u64,
    t2: u64,
    kappa: CompensationConstant,
    key: &CodeKey,
) -> Result<CodedValue, CodedError> {
    let k = kappa.expect(CompensationKind::Multiplicative)?;
    let x = v1.x.checked_mul(v2.x).ok_or(CodedError::FunctionalOverflow("MUL"))?;
    Ok(CodedValue {
        x,
        c: code_channel::mul(v1.c, v2.c, v1.x, v2.x, t1, t2, k, key),
    })
}

pub fn opel_move(v: CodedValue, kappa: CompensationConstant, key: &CodeKey) -> CodedValue {
    debug_assert_eq!(kappa.kind, CompensationKind::Additive);
    CodedValue {
        x: v.x,
        c: code_channel::mov(v.c, kappa.value, key),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k13() -> CodeKey {
        CodeKey::new(13).unwrap()
    }

    fn sig(v: u64) -> Signature {
        k13().signature(v).unwrap()
    }

    fn date(d: u64) -> CycleDate {
        k13().date(d)
    }

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
    }

    #[test]
    fn residue_examples() {
        let k = k13();
        assert_eq!(k.residue(13), 0);
        assert_eq!(k.residue(-1), 12);
        assert_eq!(k.residue(38), 12);
        assert_eq!(k.residue(i64::MIN), k.residue(i64::MIN as i128 + 13 * 1000));
    }

    #[test]
    fn make_key_examples() {
        let k = make_key(13).unwrap();
        assert_eq!((k.modulus(), k.bit_width()), (13, 4));
        let m31 = make_key((1 << 31) - 1).unwrap();
        assert_eq!((m31.modulus(), m31.bit_width()), (2_147_483_647, 31));
        assert_eq!(make_key(12), Err(CodedError::NotPrime(12)));
        assert_eq!(make_key(2), Err(CodedError::OutOfRange(2)));
        assert_eq!(make_key(1 << 48), Err(CodedError::OutOfRange(1 << 48)));
        // Largest prime below 2^48.
        assert!(make_key((1 << 48) - 59).is_ok());
    }

    #[test]
    fn miller_rabin_agrees_with_trial_division() {
        for n in 0..20_000u64 {
            assert_eq!(is_prime(n), trial_division(n), "n = {n}");
        }
        // Strong pseudoprimes to several small bases.
        for n in [3_215_031_751u64, 2_152_302_898_747, 3_474_749_660_383] {
            assert!(!is_prime(n));
            assert!(!trial_division(n));
        }
        assert!(is_prime(2_147_483_647));
        assert!(trial_division(2_147_483_647));
    }

    #[test]
    fn encode_and_check_examples() {
        let k = k13();
        assert_eq!(encode(7, sig(5), date(0), &k), CodedValue::new(7, 12));
        assert_eq!(encode(0, sig(0), date(0), &k), CodedValue::new(0, 0));
        assert_eq!(encode(20, sig(5), date(3), &k), CodedValue::new(20, 2));
        assert_eq!(check(CodedValue::new(7, 12), sig(5), date(0), &k), Verdict::Accept);
        assert_eq!(check(CodedValue::new(8, 12), sig(5), date(0), &k), Verdict::Reject);
        assert_eq!(check(CodedValue::new(0, 0), sig(0), date(0), &k), Verdict::Accept);
    }

    #[test]
    fn signature_range_is_enforced() {
        assert!(k13().signature(12).is_ok());
        assert!(matches!(k13().signature(13), Err(CodedError::ResidueOutOfRange { .. })));
    }

    #[test]
    fn add_examples() {
        let k = k13();
        let r = opel_add(
            CodedValue::new(7, 12),
            CodedValue::new(3, 5),
            CompensationConstant::additive(2),
            &k,
        )
        .unwrap();
        assert_eq!(r, CodedValue::new(10, 6));
        assert!(check(r, sig(9), date(0), &k).is_accept());

        let z = CodedValue::new(0, 0);
        assert_eq!(opel_add(z, z, CompensationConstant::additive(0), &k).unwrap(), z);

        let kappa = k.residue(2 - 3 - 7 - 1);
        assert_eq!(kappa, 4);
        let r = opel_add(
            CodedValue::new(4, 8),
            CodedValue::new(6, 1),
            CompensationConstant::additive(kappa),
            &k,
        )
        .unwrap();
        assert_eq!(r, CodedValue::new(10, 0));
        assert!(check(r, sig(2), date(1), &k).is_accept());
    }

    #[test]
    fn sub_examples() {
        let k = k13();
        let kappa = k.residue(1 - 5 + 2);
        assert_eq!(kappa, 11);
        let r = opel_sub(
            CodedValue::new(7, 12),
            CodedValue::new(3, 5),
            CompensationConstant::additive(kappa),
            &k,
        )
        .unwrap();
        assert_eq!(r, CodedValue::new(4, 5));
        assert!(check(r, sig(1), date(0), &k).is_accept());

        let z = CodedValue::new(0, 0);
        assert_eq!(opel_sub(z, z, CompensationConstant::additive(0), &k).unwrap(), z);

        // Same operands re-encoded at D = 1 with the constant recomputed.
        let v1 = encode(7, sig(5), date(1), &k);
        let v2 = encode(3, sig(2), date(1), &k);
        let kappa = CompensationConstant::additive(k.residue(1 - 5 + 2 + 1));
        let r = opel_sub(v1, v2, kappa, &k).unwrap();
        assert!(check(r, sig(1), date(1), &k).is_accept());
        assert!(!check(r, sig(1), date(0), &k).is_accept());
    }

    #[test]
    fn mul_examples() {
        let k = k13();
        let (t1, t2) = (5, 2);
        let km = k.residue(4 - 10);
        assert_eq!(km, 7);
        let r = opel_mul(
            CodedValue::new(7, 12),
            CodedValue::new(3, 5),
            t1,
            t2,
            CompensationConstant::multiplicative(km),
            &k,
        )
        .unwrap();
        assert_eq!(r, CodedValue::new(21, 12));
        assert!(check(r, sig(4), date(0), &k).is_accept());

        let one = CodedValue::new(1, 1);
        assert_eq!(
            opel_mul(one, one, 0, 0, CompensationConstant::multiplicative(0), &k).unwrap(),
            one
        );

        let corrupted = opel_mul(
            CodedValue::new(8, 12),
            CodedValue::new(3, 5),
            t1,
            t2,
            CompensationConstant::multiplicative(km),
            &k,
        )
        .unwrap();
        assert!(!check(corrupted, sig(4), date(0), &k).is_accept());
    }

    #[test]
    fn mul_fault_residual_is_delta_times_partner_code() {
        let k = k13();
        let (b1, b2, b3, d) = (5, 2, 4, 3);
        let t1 = k.residue(b1 + d);
        let t2 = k.residue(b2 + d);
        let km = CompensationConstant::multiplicative(k.residue(b3 + d - (t1 * t2) as i64));
        for x2 in -20..20 {
            let v2 = encode(x2, sig(b2 as u64), date(d as u64), &k);
            for delta in 1..26i64 {
                let v1 = CodedValue::new(7 + delta, encode(7, sig(b1 as u64), date(d as u64), &k).c);
                let r = opel_mul(v1, v2, t1, t2, km, &k).unwrap();
                let expect_undetected = k.residue(delta * v2.c as i64) == 0;
                assert_eq!(
                    check(r, sig(b3 as u64), date(d as u64), &k).is_accept(),
                    expect_undetected,
                    "x2={x2} delta={delta}"
                );
            }
        }
    }

    #[test]
    fn move_examples() {
        let k = k13();
        let r = opel_move(CodedValue::new(7, 12), CompensationConstant::additive(4), &k);
        assert_eq!(r, CodedValue::new(7, 3));
        assert!(check(r, sig(9), date(0), &k).is_accept());
        assert!(!check(r, sig(5), date(0), &k).is_accept());
        let v = CodedValue::new(-3, 8);
        assert_eq!(opel_move(v, CompensationConstant::additive(0), &k), v);
    }

    #[test]
    fn overflow_is_reported_not_wrapped() {
        let k = k13();
        let big = CodedValue::new(i64::MAX, 0);
        let one = CodedValue::new(1, 0);
        let add = CompensationConstant::additive(0);
        let mul = CompensationConstant::multiplicative(0);
        assert_eq!(opel_add(big, one, add, &k), Err(CodedError::FunctionalOverflow("ADD")));
        assert_eq!(
            opel_sub(CodedValue::new(i64::MIN, 0), one, add, &k),
            Err(CodedError::FunctionalOverflow("SUB"))
        );
        assert_eq!(
            opel_mul(big, CodedValue::new(2, 0), 0, 0, mul, &k),
            Err(CodedError::FunctionalOverflow("MUL"))
        );
    }

    #[test]
    fn wrong_constant_kind_is_refused() {
        let k = k13();
        let v = CodedValue::new(1, 1);
        assert!(matches!(
            opel_add(v, v, CompensationConstant::multiplicative(0), &k),
            Err(CodedError::ConstantKind { .. })
        ));
    }

    /// Exhaustive soundness for A = 13: every OPEL maps well-formed inputs to
    /// a well-formed output under the predetermined constants.
    #[test]
    fn opels_are_sound_exhaustively() {
        let k = k13();
        let xs: Vec<i64> = (-100..=100).step_by(7).chain([-100, 0, 1, 100]).collect();
        for d in [0u64, 5, 12] {
            let dt = date(d).term() as i64;
            for b1 in 0..13i64 {
                for b2 in 0..13i64 {
                    for b3 in 0..13i64 {
                        let add_k = CompensationConstant::additive(k.residue(b3 - b1 - b2 - dt));
                        let sub_k = CompensationConstant::additive(k.residue(b3 - b1 + b2 + dt));
                        let mov_k = CompensationConstant::additive(k.residue(b3 - b1));
                        let t1 = k.residue(b1 + dt);
                        let t2 = k.residue(b2 + dt);
                        let mul_k = CompensationConstant::multiplicative(k.residue(b3 + dt - (t1 * t2) as i64));
                        let (s1, s2, s3) = (sig(b1 as u64), sig(b2 as u64), sig(b3 as u64));
                        for &x1 in &xs {
                            let v1 = encode(x1, s1, date(d), &k);
                            let m = opel_move(v1, mov_k, &k);
                            assert!(check(m, s3, date(d), &k).is_accept());
                            for &x2 in &xs {
                                let v2 = encode(x2, s2, date(d), &k);
                                for r in [
                                    opel_add(v1, v2, add_k, &k).unwrap(),
                                    opel_sub(v1, v2, sub_k, &k).unwrap(),
                                    opel_mul(v1, v2, t1, t2, mul_k, &k).unwrap(),
                                ] {
                                    assert!(check(r, s3, date(d), &k).is_accept());
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn single_functional_corruption_detected_iff_delta_nonzero_mod_a() {
        let k = k13();
        let s = sig(6);
        let d = date(4);
        let v = encode(123, s, d, &k);
        for delta in -200i64..=200 {
            let bad = CodedValue::new(v.x + delta, v.c);
            assert_eq!(check(bad, s, d, &k).is_accept(), delta % 13 == 0, "delta={delta}");
        }
    }

    #[test]
    fn substitution_and_staleness() {
        let k = k13();
        for bv in 0..13 {
            for bw in 0..13 {
                let w = encode(55, sig(bw), date(2), &k);
                assert_eq!(check(w, sig(bv), date(2), &k).is_accept(), bv == bw);
            }
        }
        for age in 0..40u64 {
            let old = encode(9, sig(3), date(100), &k);
            assert_eq!(check(old, sig(3), date(100 + age), &k).is_accept(), age % 13 == 0);
        }
    }

    #[test]
    fn code_channel_ignores_functional_fields_for_linear_ops() {
        let k = k13();
        let v1 = CodedValue::new(41, 3);
        let v2 = CodedValue::new(-17, 9);
        let kappa = CompensationConstant::additive(6);
        assert_eq!(opel_add(v1, v2, kappa, &k).unwrap().c, code_channel::add(3, 9, 6, &k));
        assert_eq!(opel_sub(v1, v2, kappa, &k).unwrap().c, code_channel::sub(3, 9, 6, &k));
        assert_eq!(opel_move(v1, kappa, &k).c, code_channel::mov(3, 6, &k));
        let z1 = CodedValue::new(0, 3);
        let z2 = CodedValue::new(0, 9);
        assert_eq!(
            opel_add(z1, z2, kappa, &k).unwrap().c,
            opel_add(v1, v2, kappa, &k).unwrap().c
        );
    }
}
