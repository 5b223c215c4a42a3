//! Signature predetermination: parse a cycle body, draw a static signature
//! per variable, precompute each instruction's compensation constants and
//! emit the PROM image consulted by the runtime.
//!
//! Everything here is a function of `(program text, key, seed)`; no runtime
//! data enters the image.

mod ir;
mod parser;
mod prom;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coded_core::{CodeKey, CompensationConstant, CycleDate, Signature};
use crate::mac::{hash_digest, Digest};
use crate::rng::uniform_below;

pub use ir::{EvalError, Instruction, Opcode, ProgramIR, VarId, VarKind, Variable};
pub use parser::{parse_program, ParseError, Position};
pub use prom::{emit_prom, load_prom, PromError, PROM_MAGIC, PROM_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SigError {
    #[error("no signature for variable `{0}`")]
    MissingSignature(String),
    #[error("signature table was built for key {table}, not {requested}")]
    KeyMismatch { table: u64, requested: u64 },
}

/// Expected signatures, one per declared variable, indexed by [`VarId`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureTable {
    key: CodeKey,
    seed: u64,
    program_digest: Digest,
    signatures: Vec<Signature>,
}

impl SignatureTable {
    /// Builds a table from explicit signatures, e.g. for hand-made fixtures.
    pub fn from_parts(key: CodeKey, seed: u64, program_digest: Digest, signatures: Vec<Signature>) -> Self {
        SignatureTable {
            key,
            seed,
            program_digest,
            signatures,
        }
    }

    pub fn key(&self) -> &CodeKey {
        &self.key
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn program_digest(&self) -> &Digest {
        &self.program_digest
    }

    pub fn get(&self, id: VarId) -> Option<Signature> {
        self.signatures.get(id.index()).copied()
    }

    pub fn signatures(&self) -> &[Signature] {
        &self.signatures
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    /// Signatures shared by more than one variable.
    pub fn duplicates(&self) -> BTreeMap<Signature, Vec<VarId>> {
        let mut by_sig: BTreeMap<Signature, Vec<VarId>> = BTreeMap::new();
        for (i, &s) in self.signatures.iter().enumerate() {
            by_sig.entry(s).or_default().push(VarId(i as u32));
        }
        by_sig.retain(|_, ids| ids.len() > 1);
        by_sig
    }
}

pub fn program_digest(ir: &ProgramIR) -> Digest {
    hash_digest(&ir.canonical_bytes())
}

/// Draws each variable's signature uniformly from `[0, A)`.
///
/// The generator is ChaCha20 keyed by `seed` with the variable's index as
/// the stream number, so a signature depends only on `(seed, variable id)`.
/// Collisions are reported through `log::warn!` and [`SignatureTable::duplicates`].
pub fn assign_signatures(ir: &ProgramIR, key: &CodeKey, seed: u64) -> SignatureTable {
    let signatures = (0..ir.vars.len())
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            Signature::new(uniform_below(&mut rng, key.modulus()), key).expect("drawn below A")
        })
        .collect();
    let table = SignatureTable {
        key: *key,
        seed,
        program_digest: program_digest(ir),
        signatures,
    };
    for (sig, ids) in table.duplicates() {
        let names: Vec<&str> = ids.iter().map(|&id| ir.var(id).name.as_str()).collect();
        log::warn!(
            "signature {} shared by {} variables: {}",
            sig.value(),
            names.len(),
            names.join(", ")
        );
    }
    table
}

/// Signature-only compensation constants of one instruction. The date term
/// is folded in at run time by [`InstructionConstants::at_date`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstructionConstants {
    /// ADD: `B3 − B1 − B2`; SUB: `B3 − B1 + B2`; MOVE: `B3 − B1`.
    Linear(CompensationConstant),
    /// MUL: `t1 = B1`, `t2 = B2`, `κm = B3 − B1·B2`.
    Product {
        t1: u64,
        t2: u64,
        kappa: CompensationConstant,
    },
}

/// Constants with the date folded in, ready for the OPELs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldedConstants {
    Linear(CompensationConstant),
    Product {
        t1: u64,
        t2: u64,
        kappa: CompensationConstant,
    },
}

impl InstructionConstants {
    pub fn values(&self) -> Vec<u64> {
        match *self {
            InstructionConstants::Linear(k) => vec![k.value],
            InstructionConstants::Product { t1, t2, kappa } => vec![t1, t2, kappa.value],
        }
    }

    /// Replaces the `index`-th value (in [`Self::values`] order).
    pub fn with_value(self, index: usize, value: u64) -> Self {
        match self {
            InstructionConstants::Linear(k) => {
                assert_eq!(index, 0);
                InstructionConstants::Linear(CompensationConstant { value, ..k })
            }
            InstructionConstants::Product { t1, t2, kappa } => match index {
                0 => InstructionConstants::Product { t1: value, t2, kappa },
                1 => InstructionConstants::Product { t1, t2: value, kappa },
                2 => InstructionConstants::Product {
                    t1,
                    t2,
                    kappa: CompensationConstant { value, ..kappa },
                },
                _ => panic!("constant index {index} out of range"),
            },
        }
    }

    pub fn at_date(&self, opcode: Opcode, date: CycleDate, key: &CodeKey) -> FoldedConstants {
        let d = date.term() as i128;
        match *self {
            InstructionConstants::Linear(k) => {
                let v = k.value as i128;
                let folded = match opcode {
                    Opcode::Add => v - d,
                    Opcode::Sub => v + d,
                    _ => v,
                };
                FoldedConstants::Linear(CompensationConstant::additive(key.residue(folded)))
            }
            InstructionConstants::Product { t1, t2, kappa } => {
                let t1d = key.residue(t1 as i128 + d);
                let t2d = key.residue(t2 as i128 + d);
                let base = key.residue(kappa.value as i128 + (t1 as i128 * t2 as i128) % key.modulus() as i128 + d);
                let km = key.residue(base as i128 - (t1d as i128 * t2d as i128) % key.modulus() as i128);
                FoldedConstants::Product {
                    t1: t1d,
                    t2: t2d,
                    kappa: CompensationConstant::multiplicative(km),
                }
            }
        }
    }
}

/// Program plus its per-instruction constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedProgram {
    pub ir: ProgramIR,
    pub constants: Vec<InstructionConstants>,
}

fn constants_for(
    ins: &Instruction,
    sig: impl Fn(VarId) -> Result<i128, SigError>,
    key: &CodeKey,
) -> Result<InstructionConstants, SigError> {
    let b3 = sig(ins.dst)?;
    let b1 = sig(ins.operands[0])?;
    Ok(match ins.opcode {
        Opcode::Move => InstructionConstants::Linear(CompensationConstant::additive(key.residue(b3 - b1))),
        Opcode::Add => {
            let b2 = sig(ins.operands[1])?;
            InstructionConstants::Linear(CompensationConstant::additive(key.residue(b3 - b1 - b2)))
        }
        Opcode::Sub => {
            let b2 = sig(ins.operands[1])?;
            InstructionConstants::Linear(CompensationConstant::additive(key.residue(b3 - b1 + b2)))
        }
        Opcode::Mul => {
            let b2 = sig(ins.operands[1])?;
            InstructionConstants::Product {
                t1: b1 as u64,
                t2: b2 as u64,
                kappa: CompensationConstant::multiplicative(key.residue(b3 - b1 * b2)),
            }
        }
    })
}

/// Computes every instruction's signature-only constants from the table.
pub fn predetermine(ir: &ProgramIR, table: &SignatureTable, key: &CodeKey) -> Result<CodedProgram, SigError> {
    if table.key != *key {
        return Err(SigError::KeyMismatch {
            table: table.key.modulus(),
            requested: key.modulus(),
        });
    }
    let sig = |id: VarId| {
        table
            .get(id)
            .map(|s| s.value() as i128)
            .ok_or_else(|| SigError::MissingSignature(ir.var(id).name.clone()))
    };
    if let Some(missing) = ir.vars.get(table.len()) {
        return Err(SigError::MissingSignature(missing.name.clone()));
    }
    let constants = ir
        .instructions
        .iter()
        .map(|ins| constants_for(ins, sig, key))
        .collect::<Result<_, _>>()?;
    Ok(CodedProgram {
        ir: ir.clone(),
        constants,
    })
}

/// Parses, signs and predetermines in one go.
pub fn sign_source(text: &str, key: &CodeKey, seed: u64) -> Result<(SignatureTable, CodedProgram), ParseError> {
    let ir = parse_program(text)?;
    let table = assign_signatures(&ir, key, seed);
    let program = predetermine(&ir, &table, key).expect("fresh table covers the program");
    Ok((table, program))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coded_core::{check, encode, opel_add, opel_mul, opel_sub};

    fn k13() -> CodeKey {
        CodeKey::new(13).unwrap()
    }

    fn table_with(ir: &ProgramIR, sigs: &[u64]) -> SignatureTable {
        let k = k13();
        SignatureTable::from_parts(
            k,
            0,
            program_digest(ir),
            sigs.iter().map(|&s| k.signature(s).unwrap()).collect(),
        )
    }

    #[test]
    fn signatures_are_deterministic_and_seed_dependent() {
        let ir = parse_program(crate::SAMPLE_PROGRAM).unwrap();
        let key = k13();
        assert_eq!(assign_signatures(&ir, &key, 1), assign_signatures(&ir, &key, 1));
        let base = assign_signatures(&ir, &key, 1);
        let differs = (2..12).any(|seed| assign_signatures(&ir, &key, seed).signatures() != base.signatures());
        assert!(differs);
    }

    #[test]
    fn pigeonhole_produces_duplicates() {
        let src: String = (0..14).map(|i| format!("input v{i};")).collect();
        let ir = parse_program(&src).unwrap();
        let table = assign_signatures(&ir, &k13(), 9);
        assert!(!table.duplicates().is_empty());
    }

    #[test]
    fn predetermined_constants_match_opel_examples() {
        let ir = parse_program("input a; input b; s = a + b; output s;").unwrap();
        let p = predetermine(&ir, &table_with(&ir, &[5, 2, 9]), &k13()).unwrap();
        assert_eq!(
            p.constants[0],
            InstructionConstants::Linear(CompensationConstant::additive(2))
        );

        let ir = parse_program("input a; b = a;").unwrap();
        let p = predetermine(&ir, &table_with(&ir, &[6, 6]), &k13()).unwrap();
        assert_eq!(
            p.constants[0],
            InstructionConstants::Linear(CompensationConstant::additive(0))
        );

        let ir = parse_program("input a; input b; m = a * b;").unwrap();
        let p = predetermine(&ir, &table_with(&ir, &[5, 2, 4]), &k13()).unwrap();
        assert_eq!(
            p.constants[0],
            InstructionConstants::Product {
                t1: 5,
                t2: 2,
                kappa: CompensationConstant::multiplicative(7)
            }
        );
    }

    #[test]
    fn missing_signature_and_key_mismatch() {
        let ir = parse_program("input a; input b; s = a + b;").unwrap();
        assert_eq!(
            predetermine(&ir, &table_with(&ir, &[1, 2]), &k13()),
            Err(SigError::MissingSignature("s".into()))
        );
        let t = assign_signatures(&ir, &CodeKey::new(17).unwrap(), 0);
        assert!(matches!(
            predetermine(&ir, &t, &k13()),
            Err(SigError::KeyMismatch { .. })
        ));
    }

    /// Folded constants reproduce the OPEL preconditions at every date.
    #[test]
    fn folding_matches_direct_formulas() {
        let key = k13();
        let ir = parse_program("input a; input b; s = a + b; d = a - b; m = a * b; c = a;").unwrap();
        for seed in 0..20 {
            let table = assign_signatures(&ir, &key, seed);
            let p = predetermine(&ir, &table, &key).unwrap();
            let b = |name: &str| table.get(ir.lookup(name).unwrap()).unwrap().value() as i128;
            for cycle in 0..30 {
                let date = key.date(cycle);
                let d = date.term() as i128;
                let fold = |i: usize| p.constants[i].at_date(ir.instructions[i].opcode, date, &key);
                assert_eq!(
                    fold(0),
                    FoldedConstants::Linear(CompensationConstant::additive(
                        key.residue(b("s") - b("a") - b("b") - d)
                    ))
                );
                assert_eq!(
                    fold(1),
                    FoldedConstants::Linear(CompensationConstant::additive(
                        key.residue(b("d") - b("a") + b("b") + d)
                    ))
                );
                let (t1, t2) = (key.residue(b("a") + d), key.residue(b("b") + d));
                assert_eq!(
                    fold(2),
                    FoldedConstants::Product {
                        t1,
                        t2,
                        kappa: CompensationConstant::multiplicative(key.residue(b("m") + d - (t1 * t2) as i128)),
                    }
                );
                assert_eq!(
                    fold(3),
                    FoldedConstants::Linear(CompensationConstant::additive(key.residue(b("c") - b("a"))))
                );

                // And the folded constants make each OPEL land on its signature.
                let sig = |n: &str| table.get(ir.lookup(n).unwrap()).unwrap();
                let va = encode(17, sig("a"), date, &key);
                let vb = encode(-4, sig("b"), date, &key);
                let FoldedConstants::Linear(ka) = fold(0) else {
                    unreachable!()
                };
                assert!(check(opel_add(va, vb, ka, &key).unwrap(), sig("s"), date, &key).is_accept());
                let FoldedConstants::Linear(ks) = fold(1) else {
                    unreachable!()
                };
                assert!(check(opel_sub(va, vb, ks, &key).unwrap(), sig("d"), date, &key).is_accept());
                let FoldedConstants::Product { t1, t2, kappa } = fold(2) else {
                    unreachable!()
                };
                assert!(check(opel_mul(va, vb, t1, t2, kappa, &key).unwrap(), sig("m"), date, &key).is_accept());
            }
        }
    }

    #[test]
    fn with_value_replaces_in_order() {
        let c = InstructionConstants::Product {
            t1: 1,
            t2: 2,
            kappa: CompensationConstant::multiplicative(3),
        };
        assert_eq!(c.with_value(1, 9).values(), vec![1, 9, 3]);
        assert_eq!(c.with_value(2, 0).values(), vec![1, 2, 0]);
    }
}
